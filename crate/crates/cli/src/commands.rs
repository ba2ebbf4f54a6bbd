use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use wnb_core::evaluate::{
    self, argmax, score_instances, BenchmarkConfig, BenchmarkEntry, Model, TrainConfig,
    EPSILON_SWEEP, LAMBDA_SWEEP, P_SWEEP,
};
use wnb_core::prep::{load_csv, read_table_path, ParseOptions};
use wnb_core::{DataError, EvalError};

use crate::cli::{BenchArgs, PredictArgs, SweepParam, TrainArgs};
use crate::config::{parse_method, required, resolve, validate, FileConfig};
use crate::error::CliError;

const DEFAULT_BENCH_METHODS: [&str; 4] = ["nb", "snb", "fnb", "sg.cf"];

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Output {
            path: path.to_path_buf(),
            source,
        })
}

fn out_dir(flag: Option<PathBuf>, file: &FileConfig) -> Result<PathBuf, CliError> {
    let dir = flag
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|source| CliError::Output {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn write_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    let model_err = |source| CliError::Model {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(|e| model_err(EvalError::Io(e)))?;
    Model::read_json(io::BufReader::new(file)).map_err(model_err)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    method: &'a str,
    variables: usize,
    selected_variables: usize,
    train_criterion: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    search_criterion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
}

pub fn train(args: &TrainArgs, file: &FileConfig) -> Result<(), CliError> {
    let name = args
        .method
        .as_deref()
        .or(file.method.as_deref())
        .unwrap_or("sg.cf");
    let run = resolve(&args.hyper, file, parse_method(name)?)?;
    let dir = out_dir(args.out.clone(), file)?;
    let raw = load_csv(&run.data, &run.target, &ParseOptions::default())?;
    let rows: Vec<usize> = (0..raw.num_instances()).collect();
    let outcome = evaluate::train(&raw, &rows, &run.train)?;

    let model_path = dir.join("model.json");
    let mut w = create(&model_path)?;
    outcome.model.write_json(&mut w)?;
    w.flush().map_err(write_error(&model_path))?;

    let trace_path = dir.join("trace.csv");
    let mut w = create(&trace_path)?;
    match &outcome.run {
        Some(r) => r.write_trace_csv(&mut w).map_err(EvalError::from)?,
        None => writeln!(w, "iteration,objective,criterion,L,displacement,segment")
            .map_err(write_error(&trace_path))?,
    }
    w.flush().map_err(write_error(&trace_path))?;

    let m = &outcome.model;
    let summary = TrainSummary {
        method: &m.metadata.method,
        variables: m.variables.len(),
        selected_variables: m.selected_variables(),
        train_criterion: m.metadata.train_criterion,
        search_criterion: m.metadata.search_criterion,
        iterations: outcome.run.as_ref().map(|r| r.iterations),
    };
    println!(
        "{}",
        serde_json::to_string(&summary).map_err(EvalError::from)?
    );
    Ok(())
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn predict(args: &PredictArgs, file: &FileConfig) -> Result<(), CliError> {
    let model = load_model(&required(args.model.clone(), file.model.clone(), "model")?)?;
    let data = required(args.data.clone(), file.data.clone(), "data")?;
    let table = read_table_path(&data, &ParseOptions::default())?;
    let out_path = args.out.as_deref();
    let mut out = sink(out_path)?;
    let out_err = |e| CliError::Output {
        path: out_path
            .map(Path::to_path_buf)
            .unwrap_or_else(|| "<stdout>".into()),
        source: e,
    };
    // a file with no header at all yields no output
    if !table.headers.is_empty() {
        let cells = model.cells_from_table(&table)?;
        let mut wtr = csv::Writer::from_writer(&mut out);
        let mut header = vec!["id".to_string()];
        header.extend(model.class_labels.iter().map(|l| format!("p_{l}")));
        header.push("predicted".into());
        wtr.write_record(&header).map_err(EvalError::from)?;
        for (i, c) in cells.iter().enumerate() {
            let probs = model.predict_proba(c)?;
            let mut record = vec![i.to_string()];
            record.extend(probs.iter().map(f64::to_string));
            record.push(model.class_labels[argmax(&probs)].clone());
            wtr.write_record(&record).map_err(EvalError::from)?;
        }
        wtr.flush().map_err(out_err)?;
    }
    out.flush().map_err(out_err)
}

#[derive(Serialize)]
struct EvaluationSummary<'a> {
    method: &'a str,
    instances: usize,
    accuracy: f64,
    auc: Option<f64>,
    compression: f64,
    selected_variables: usize,
}

pub fn evaluate(args: &PredictArgs, file: &FileConfig) -> Result<(), CliError> {
    let model = load_model(&required(args.model.clone(), file.model.clone(), "model")?)?;
    let data = required(args.data.clone(), file.data.clone(), "data")?;
    let table = read_table_path(&data, &ParseOptions::default())?;
    let target = table
        .column_index(&model.target)
        .ok_or_else(|| DataError::MissingTarget(model.target.clone()))?;
    let cells = model.cells_from_table(&table)?;
    let labels: Vec<usize> = table
        .rows
        .iter()
        .enumerate()
        .map(|(row, r)| {
            let label = r[target]
                .as_deref()
                .ok_or(DataError::MissingLabel { row })?;
            model
                .class_labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| EvalError::UnknownLabel(label.to_string()))
        })
        .collect::<Result<_, EvalError>>()?;
    let (accuracy, auc, compression) = score_instances(&model, &cells, &labels)?;
    let summary = EvaluationSummary {
        method: &model.metadata.method,
        instances: labels.len(),
        accuracy,
        auc,
        compression,
        selected_variables: model.selected_variables(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(EvalError::from)?;
    let out_path = args.out.as_deref();
    let mut out = sink(out_path)?;
    writeln!(out, "{text}")
        .and_then(|_| out.flush())
        .map_err(|source| CliError::Output {
            path: out_path
                .map(Path::to_path_buf)
                .unwrap_or_else(|| "<stdout>".into()),
            source,
        })
}

fn sweep_values(param: SweepParam) -> (&'static str, &'static [f64]) {
    match param {
        SweepParam::Lambda => ("lambda", &LAMBDA_SWEEP),
        SweepParam::P => ("p", &P_SWEEP),
        SweepParam::Epsilon => ("epsilon", &EPSILON_SWEEP),
    }
}

fn with_param(base: &TrainConfig, param: SweepParam, value: f64) -> TrainConfig {
    let mut c = base.clone();
    match param {
        SweepParam::Lambda => c.lambda = value,
        SweepParam::P => c.p = value,
        SweepParam::Epsilon => c.optimizer.epsilon = value,
    }
    c
}

pub fn benchmark(
    args: &BenchArgs,
    file: &FileConfig,
    sweep_required: bool,
) -> Result<(), CliError> {
    if sweep_required && args.sweep.is_none() {
        return Err(CliError::Usage(
            "sweep needs --sweep lambda|p|epsilon".into(),
        ));
    }
    let names: Vec<String> = if !args.methods.is_empty() {
        args.methods.clone()
    } else if let Some(m) = &file.methods {
        m.clone()
    } else if let Some(m) = &file.method {
        vec![m.clone()]
    } else {
        DEFAULT_BENCH_METHODS
            .iter()
            .map(|s| s.to_string())
            .collect()
    };
    let methods = names
        .iter()
        .map(|n| parse_method(n))
        .collect::<Result<Vec<_>, _>>()?;
    let Some(&first) = methods.first() else {
        return Err(CliError::Usage("no method given".into()));
    };
    let run = resolve(&args.hyper, file, first)?;
    let folds = args.folds.or(file.folds).unwrap_or(10);
    if folds < 2 {
        return Err(CliError::Usage(format!(
            "--folds must be >= 2, got {folds}"
        )));
    }
    let mut entries = Vec::new();
    for &method in &methods {
        let config = TrainConfig {
            method,
            ..run.train.clone()
        };
        match args.sweep {
            None => entries.push(BenchmarkEntry::new(config)),
            Some(param) => {
                let (name, values) = sweep_values(param);
                for &v in values {
                    let c = with_param(&config, param, v);
                    validate(&c)?;
                    entries.push(BenchmarkEntry {
                        label: format!("{}@{name}={v}", c.label()),
                        config: c,
                    });
                }
            }
        }
    }
    let dir = out_dir(args.out.clone(), file)?;
    let raw = load_csv(&run.data, &run.target, &ParseOptions::default())?;
    let dataset = run
        .data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    let bench = BenchmarkConfig {
        folds,
        seed: run.train.search.seed,
        record_timings: args.timings || file.timings.unwrap_or(false),
    };
    let reports = evaluate::benchmark(&raw, &dataset, &entries, &bench)?;

    let report_path = dir.join("report.csv");
    let mut w = create(&report_path)?;
    evaluate::write_reports_csv(&reports, &mut w)?;
    w.flush().map_err(write_error(&report_path))?;

    let summaries = evaluate::summarize(&reports);
    let summary_path = dir.join("summary.json");
    let mut w = create(&summary_path)?;
    serde_json::to_writer_pretty(&mut w, &summaries).map_err(EvalError::from)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(write_error(&summary_path))?;

    let mut stdout = io::stdout().lock();
    let _ = writeln!(
        stdout,
        "{:<28} {:>15} {:>15} {:>15} {:>8}",
        "method", "acc", "auc", "compression", "vars"
    );
    for s in &summaries {
        let auc = s
            .auc
            .map(|a| format!("{:.4}±{:.4}", a.mean, a.std))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            stdout,
            "{:<28} {:>15} {:>15} {:>15} {:>8.1}",
            s.method,
            format!("{:.4}±{:.4}", s.accuracy.mean, s.accuracy.std),
            auc,
            format!("{:.4}±{:.4}", s.compression.mean, s.compression.std),
            s.selected_variables.mean
        );
    }
    Ok(())
}
