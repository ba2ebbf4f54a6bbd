//! Prediction, metrics, stratified cross-validation and method comparison.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{self, RegularizerSpec, Variant, WeightVector};
use crate::error::{DataError, EvalError};
use crate::optim::{self, Method, OptimizerConfig, OptimizerRun};
use crate::prep::{
    prepare, Cell, CostOverrides, Partition, PrepConfig, Preparation, PreparedDataset, RawDataset,
    Table, VariableKind,
};
use crate::search::{self, SearchConfig, SearchResult};

/// Regularization weights explored by a `lambda` sweep.
pub const LAMBDA_SWEEP: [f64; 6] = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0];
/// Exponents explored by a `p` sweep.
pub const P_SWEEP: [f64; 4] = [0.95, 0.85, 0.75, 0.65];
/// Stopping tolerances explored by an `epsilon` sweep.
pub const EPSILON_SWEEP: [f64; 3] = [0.002, 0.01, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVariable {
    pub name: String,
    pub kind: VariableKind,
    pub partition: Partition,
    /// `log p(part | class)`, shape `[part][class]`.
    pub cond_log_prob: Vec<Vec<f64>>,
    pub cost: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub method: String,
    pub lambda: f64,
    pub p: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Continuous criterion at the final weights on the training data.
    pub train_criterion: f64,
    /// Criterion reported by SNB or FNB, when one of them ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_criterion: Option<f64>,
}

/// A trained weighted naive Bayes classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub metadata: ModelMetadata,
    pub target: String,
    pub class_labels: Vec<String>,
    pub class_log_priors: Vec<f64>,
    pub variables: Vec<ModelVariable>,
}

impl Model {
    pub fn from_preparation(
        prep: &Preparation,
        weights: &[f64],
        metadata: ModelMetadata,
    ) -> Result<Self, EvalError> {
        if weights.len() != prep.variables.len() {
            return Err(EvalError::DimensionMismatch {
                expected: prep.variables.len(),
                got: weights.len(),
            });
        }
        Ok(Self {
            metadata,
            target: prep.target.clone(),
            class_labels: prep.class_labels.clone(),
            class_log_priors: prep.class_log_prior.clone(),
            variables: prep
                .variables
                .iter()
                .zip(weights)
                .map(|(v, &w)| ModelVariable {
                    name: v.name.clone(),
                    kind: v.kind,
                    partition: v.partition.clone(),
                    cond_log_prob: v.cond_log_prob.clone(),
                    cost: v.cost,
                    weight: w,
                })
                .collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.weight).collect()
    }

    pub fn selected_variables(&self) -> usize {
        self.variables.iter().filter(|v| v.weight > 0.0).count()
    }

    /// The same model with every weight set to zero.
    pub fn null_model(&self) -> Self {
        let mut m = self.clone();
        for v in &mut m.variables {
            v.weight = 0.0;
        }
        m
    }

    /// Unnormalized log-posterior scores. Zero-weight variables are skipped.
    pub fn log_scores(&self, cells: &[Cell]) -> Result<Vec<f64>, EvalError> {
        if cells.len() != self.variables.len() {
            return Err(EvalError::DimensionMismatch {
                expected: self.variables.len(),
                got: cells.len(),
            });
        }
        let mut s = self.class_log_priors.clone();
        for (v, cell) in self.variables.iter().zip(cells) {
            if v.weight == 0.0 {
                continue;
            }
            let row = &v.cond_log_prob[v.partition.part_of(cell)];
            for (sj, lp) in s.iter_mut().zip(row) {
                *sj += v.weight * lp;
            }
        }
        Ok(s)
    }

    pub fn predict_proba(&self, cells: &[Cell]) -> Result<Vec<f64>, EvalError> {
        Ok(softmax(&self.log_scores(cells)?))
    }

    /// Negative log-likelihood of `label` for one instance.
    pub fn instance_nll(&self, cells: &[Cell], label: usize) -> Result<f64, EvalError> {
        let s = self.log_scores(cells)?;
        Ok(log_sum_exp(&s) - s[label])
    }

    /// Column order of `raw` matching the model's variables by name.
    pub fn align(&self, raw: &RawDataset) -> Result<Vec<usize>, EvalError> {
        self.variables
            .iter()
            .map(|v| {
                raw.variable_index(&v.name)
                    .ok_or_else(|| EvalError::Data(DataError::MissingColumn(v.name.clone())))
            })
            .collect()
    }

    fn cells_of(raw: &RawDataset, columns: &[usize], row: usize) -> Vec<Cell> {
        columns
            .iter()
            .map(|&c| raw.variables[c].cells[row].clone())
            .collect()
    }

    /// Posteriors for `rows` of a dataset whose variables include the model's.
    pub fn posteriors(&self, raw: &RawDataset, rows: &[usize]) -> Result<Vec<Vec<f64>>, EvalError> {
        let columns = self.align(raw)?;
        rows.iter()
            .map(|&r| self.predict_proba(&Self::cells_of(raw, &columns, r)))
            .collect()
    }

    /// Maps dataset class indices to model class indices by label.
    fn label_map(&self, raw: &RawDataset) -> Result<Vec<usize>, EvalError> {
        raw.class_labels
            .iter()
            .map(|l| {
                self.class_labels
                    .iter()
                    .position(|m| m == l)
                    .ok_or_else(|| EvalError::UnknownLabel(l.clone()))
            })
            .collect()
    }

    /// True labels of `rows`, as model class indices.
    pub fn labels(&self, raw: &RawDataset, rows: &[usize]) -> Result<Vec<usize>, EvalError> {
        let map = self.label_map(raw)?;
        Ok(rows.iter().map(|&r| map[raw.targets[r]]).collect())
    }

    pub fn nll(&self, raw: &RawDataset, rows: &[usize]) -> Result<f64, EvalError> {
        let columns = self.align(raw)?;
        let labels = self.labels(raw, rows)?;
        let mut total = 0.0;
        for (&r, &y) in rows.iter().zip(&labels) {
            total += self.instance_nll(&Self::cells_of(raw, &columns, r), y)?;
        }
        Ok(total)
    }

    /// Parses a table's columns into cells following the model's variable
    /// kinds. Columns are matched by name; extra columns are ignored.
    pub fn cells_from_table(&self, table: &Table) -> Result<Vec<Vec<Cell>>, EvalError> {
        let columns: Vec<usize> = self
            .variables
            .iter()
            .map(|v| {
                table
                    .column_index(&v.name)
                    .ok_or_else(|| EvalError::Data(DataError::MissingColumn(v.name.clone())))
            })
            .collect::<Result<_, _>>()?;
        table
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                self.variables
                    .iter()
                    .zip(&columns)
                    .map(|(v, &c)| {
                        Cell::parse(row[c].as_deref(), v.kind).map_err(|value| {
                            EvalError::Data(DataError::BadNumber {
                                row: i + 1,
                                variable: v.name.clone(),
                                value,
                            })
                        })
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let model: Model = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<(), EvalError> {
        out.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn read_json<R: Read>(mut input: R) -> Result<Self, EvalError> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), EvalError> {
        let j = self.class_labels.len();
        if j < 2 || self.class_log_priors.len() != j {
            return Err(EvalError::Format("class labels and priors disagree".into()));
        }
        for v in &self.variables {
            if !(0.0..=1.0).contains(&v.weight) {
                return Err(EvalError::Format(format!(
                    "weight of '{}' outside [0, 1]",
                    v.name
                )));
            }
            if v.cond_log_prob.len() != v.partition.num_parts()
                || v.cond_log_prob
                    .iter()
                    .any(|r| r.len() != j || r.iter().any(|x| !x.is_finite()))
            {
                return Err(EvalError::Format(format!(
                    "bad probability table for '{}'",
                    v.name
                )));
            }
        }
        Ok(())
    }
}

fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax(s: &[f64]) -> Vec<f64> {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = j;
        }
    }
    best
}

pub fn accuracy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64, EvalError> {
    if probs.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, &y)| argmax(p) == y)
        .count();
    Ok(hits as f64 / probs.len() as f64)
}

/// Mann-Whitney AUC of `scores` with `positive` marking the positive class;
/// tied pairs count one half. `None` when a side is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks over tie groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if positive[idx] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Binary AUC on the second class's probability, or the unweighted mean of
/// one-vs-rest AUCs over the classes present on both sides.
pub fn auc(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64, EvalError> {
    if probs.is_empty() {
        return Err(EvalError::Empty);
    }
    let j = probs[0].len();
    if j == 2 {
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        return binary_auc(&scores, &pos).ok_or(EvalError::AucUndefined);
    }
    let per_class: Vec<f64> = (0..j)
        .filter_map(|c| {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|&y| y == c).collect();
            binary_auc(&scores, &pos)
        })
        .collect();
    if per_class.is_empty() {
        return Err(EvalError::AucUndefined);
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// `1 - NLL(model) / NLL(null model)` on `rows`; zero for the null model.
pub fn compression_rate(model: &Model, raw: &RawDataset, rows: &[usize]) -> Result<f64, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let nll = model.nll(raw, rows)?;
    let null = model.null_model().nll(raw, rows)?;
    if null == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - nll / null)
}

/// Train and test row indices of one fold.
pub type Fold = (Vec<usize>, Vec<usize>);

/// Stratified folds as `(train, test)` index lists, both sorted. Each class
/// is shuffled with the seeded stream and dealt round-robin, continuing from
/// where the previous class stopped.
pub fn stratified_kfold(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Fold>, EvalError> {
    let n = labels.len();
    if folds < 2 || folds > n {
        return Err(EvalError::InvalidFolds { folds, n });
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; n];
    let mut offset = 0;
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < folds {
            log::warn!(
                "class {c} has {} instances for {folds} folds; some test folds will miss it",
                idx.len()
            );
        }
        idx.shuffle(&mut rng);
        for (i, &r) in idx.iter().enumerate() {
            assignment[r] = (offset + i) % folds;
        }
        offset = (offset + idx.len()) % folds;
    }
    Ok((0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            (train, test)
        })
        .collect())
}

/// Starting point for gradient methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPolicy {
    Uniform,
    Snb,
    Fnb,
}

impl FromStr for InitPolicy {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "snb" => Ok(Self::Snb),
            "fnb" => Ok(Self::Fnb),
            _ => Err(EvalError::Format(format!("unknown init policy '{s}'"))),
        }
    }
}

impl fmt::Display for InitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Snb => "snb",
            Self::Fnb => "fnb",
        })
    }
}

/// Everything `train` can fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMethod {
    /// All weights zero: class priors only.
    Null,
    /// All weights one.
    NaiveBayes,
    Snb,
    Fnb,
    /// A gradient method; `None` uses the configured init policy.
    Gradient(Method, Option<InitPolicy>),
}

impl TrainMethod {
    /// Report label with the init policy resolved.
    pub fn label(&self, default_init: InitPolicy) -> String {
        match self {
            Self::Null => "null".into(),
            Self::NaiveBayes => "nb".into(),
            Self::Snb => "snb".into(),
            Self::Fnb => "fnb".into(),
            Self::Gradient(m, init) => match init.unwrap_or(default_init) {
                InitPolicy::Uniform => m.to_string(),
                other => format!("{other}+{m}"),
            },
        }
    }
}

impl fmt::Display for TrainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gradient(m, None) => write!(f, "{m}"),
            Self::Gradient(m, Some(init)) => write!(f, "{init}+{m}"),
            other => f.write_str(&other.label(InitPolicy::Uniform)),
        }
    }
}

impl FromStr for TrainMethod {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "null" => Self::Null,
            "nb" => Self::NaiveBayes,
            "snb" => Self::Snb,
            "fnb" => Self::Fnb,
            _ => match lower.split_once('+') {
                Some((init, m)) => Self::Gradient(m.parse()?, Some(init.parse()?)),
                None => Self::Gradient(lower.parse()?, None),
            },
        })
    }
}

/// Hyperparameters and settings for one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub method: TrainMethod,
    pub init: InitPolicy,
    pub lambda: f64,
    pub p: f64,
    pub delta: f64,
    pub optimizer: OptimizerConfig,
    pub search: SearchConfig,
    pub prep: PrepConfig,
    pub costs: Option<CostOverrides>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: TrainMethod::Gradient(Method::SgCf, None),
            init: InitPolicy::Fnb,
            lambda: criterion::DEFAULT_LAMBDA,
            p: criterion::DEFAULT_P,
            delta: criterion::DEFAULT_DELTA,
            optimizer: OptimizerConfig::default(),
            search: SearchConfig::default(),
            prep: PrepConfig::default(),
            costs: None,
        }
    }
}

impl TrainConfig {
    pub fn with_method(method: TrainMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn spec(&self, variant: Variant, costs: Vec<f64>) -> Result<RegularizerSpec, EvalError> {
        Ok(RegularizerSpec::new(
            self.lambda,
            self.p,
            self.delta,
            variant,
            costs,
        )?)
    }

    pub fn label(&self) -> String {
        self.method.label(self.init)
    }
}

/// A trained model plus whatever the training procedure reported.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub preparation: Preparation,
    pub run: Option<OptimizerRun>,
    pub search: Option<SearchResult>,
}

/// Prepares on `rows` only, then fits `config.method`.
pub fn train(
    raw: &RawDataset,
    rows: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome, EvalError> {
    let prep = prepare(raw, rows, &config.prep, config.costs.as_ref())?;
    let data = prep.encode(raw, rows);
    train_prepared(prep, &data, config)
}

/// Fits `config.method` on an already encoded training set.
pub fn train_prepared(
    prep: Preparation,
    data: &PreparedDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, EvalError> {
    let k = data.num_variables();
    let costs = data.costs().to_vec();
    let continuous = config.spec(Variant::Continuous, costs.clone())?;
    let mut run = None;
    let mut search_result = None;
    let weights: Vec<f64> = match config.method {
        TrainMethod::Null => vec![0.0; k],
        TrainMethod::NaiveBayes => vec![1.0; k],
        TrainMethod::Snb => {
            let spec = config.spec(Variant::Boolean, costs)?;
            let r = search::snb_train(data, &spec, &config.search)?;
            let w = r.final_w.as_slice().to_vec();
            search_result = Some(r);
            w
        }
        TrainMethod::Fnb => {
            let spec = config.spec(Variant::Fractional, costs)?;
            let r = search::fnb_train(data, &spec, &config.search)?;
            let w = r.final_w.as_slice().to_vec();
            search_result = Some(r);
            w
        }
        TrainMethod::Gradient(method, init) => {
            let opt = OptimizerConfig {
                method,
                ..config.optimizer.clone()
            };
            let r = match init.unwrap_or(config.init) {
                InitPolicy::Uniform => {
                    optim::solve(data, &continuous, &opt, &search::uniform_init(k))?
                }
                policy => {
                    let found = if policy == InitPolicy::Snb {
                        search::snb_train(
                            data,
                            &config.spec(Variant::Boolean, costs.clone())?,
                            &config.search,
                        )?
                    } else {
                        search::fnb_train(
                            data,
                            &config.spec(Variant::Fractional, costs.clone())?,
                            &config.search,
                        )?
                    };
                    let start = search::init_for_gradient(&found);
                    let r = refine_from(data, &continuous, &opt, &start)?;
                    search_result = Some(found);
                    r
                }
            };
            let w = r.final_w.as_slice().to_vec();
            run = Some(r);
            w
        }
    };
    let train_criterion = criterion::criterion(data, &weights, &continuous)?.total;
    let metadata = ModelMetadata {
        method: config.label(),
        lambda: config.lambda,
        p: config.p,
        delta: config.delta,
        epsilon: config.optimizer.epsilon,
        seed: config.search.seed,
        train_criterion,
        search_criterion: search_result.as_ref().map(|r| r.criterion),
    };
    let model = Model::from_preparation(&prep, &weights, metadata)?;
    Ok(TrainOutcome {
        model,
        preparation: prep,
        run,
        search: search_result,
    })
}

/// Gradient refinement from a search result. Two-stage methods skip the
/// convex first stage (its minimizer does not depend on the start) and run
/// the second stage from `start`; one-stage methods start there directly.
/// The start is kept if refinement ends at a higher continuous criterion.
fn refine_from(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &OptimizerConfig,
    start: &WeightVector,
) -> Result<OptimizerRun, EvalError> {
    let mut run = match config.method.stages() {
        None => optim::solve(data, spec, config, start)?,
        Some((_, second)) => {
            let mut r = optim::solve_second_stage(data, spec, config, start, second)?;
            r.method = config.method;
            r
        }
    };
    let start_value = criterion::criterion(data, start.as_slice(), spec)?;
    if start_value.total < run.criterion.total {
        log::info!(
            "refinement ended above its start ({} > {}); keeping the start",
            run.criterion.total,
            start_value.total
        );
        run.final_w = start.clone();
        run.criterion = start_value;
    }
    Ok(run)
}

/// Scores of one fitted model on one test fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub method: String,
    pub fold: usize,
    pub accuracy: f64,
    /// `None` when the test fold holds a single class.
    pub auc: Option<f64>,
    pub compression: f64,
    pub selected_variables: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Omitted when timings are disabled, which keeps reports reproducible.
    pub train_seconds: Option<f64>,
}

/// Accuracy, AUC (`None` when undefined) and compression of `model` on
/// already parsed instances with model class indices as labels.
pub fn score_instances(
    model: &Model,
    cells: &[Vec<Cell>],
    labels: &[usize],
) -> Result<(f64, Option<f64>, f64), EvalError> {
    if cells.is_empty() {
        return Err(EvalError::Empty);
    }
    let probs: Vec<Vec<f64>> = cells
        .iter()
        .map(|c| model.predict_proba(c))
        .collect::<Result<_, _>>()?;
    let acc = accuracy(&probs, labels)?;
    let auc = match auc(&probs, labels) {
        Ok(a) => Some(a),
        Err(EvalError::AucUndefined) => None,
        Err(e) => return Err(e),
    };
    let null_model = model.null_model();
    let mut nll = 0.0;
    let mut null = 0.0;
    for (c, &y) in cells.iter().zip(labels) {
        nll += model.instance_nll(c, y)?;
        null += null_model.instance_nll(c, y)?;
    }
    let compression = if null == 0.0 { 0.0 } else { 1.0 - nll / null };
    Ok((acc, auc, compression))
}

/// Scores `model` on `rows` of `raw`.
pub fn evaluate_model(
    model: &Model,
    raw: &RawDataset,
    rows: &[usize],
) -> Result<(f64, Option<f64>, f64), EvalError> {
    let columns = model.align(raw)?;
    let cells: Vec<Vec<Cell>> = rows
        .iter()
        .map(|&r| Model::cells_of(raw, &columns, r))
        .collect();
    score_instances(model, &cells, &model.labels(raw, rows)?)
}

/// One entry of a benchmark: a method together with its settings.
#[derive(Debug, Clone)]
pub struct BenchmarkEntry {
    pub label: String,
    pub config: TrainConfig,
}

impl BenchmarkEntry {
    pub fn new(config: TrainConfig) -> Self {
        Self {
            label: config.label(),
            config,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub folds: usize,
    pub seed: u64,
    pub record_timings: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            record_timings: false,
        }
    }
}

/// Cross-validates every entry on the same stratified folds. A null-model
/// row is added per fold unless an entry already trains the null model.
/// Reports are ordered by entry, then fold.
pub fn benchmark(
    raw: &RawDataset,
    dataset: &str,
    entries: &[BenchmarkEntry],
    config: &BenchmarkConfig,
) -> Result<Vec<EvaluationReport>, EvalError> {
    let mut entries = entries.to_vec();
    if !entries.iter().any(|e| e.config.method == TrainMethod::Null) {
        let template = entries
            .first()
            .map(|e| e.config.clone())
            .unwrap_or_default();
        entries.insert(
            0,
            BenchmarkEntry::new(TrainConfig {
                method: TrainMethod::Null,
                ..template
            }),
        );
    }
    let folds = stratified_kfold(&raw.targets, config.folds, config.seed)?;
    let jobs: Vec<(usize, usize)> = (0..entries.len())
        .flat_map(|e| (0..folds.len()).map(move |f| (e, f)))
        .collect();
    jobs.par_iter()
        .map(|&(e, f)| {
            let (train_rows, test_rows) = &folds[f];
            let entry = &entries[e];
            let started = Instant::now();
            let outcome = train(raw, train_rows, &entry.config)?;
            let seconds = started.elapsed().as_secs_f64();
            let (acc, auc, compression) = evaluate_model(&outcome.model, raw, test_rows)?;
            Ok(EvaluationReport {
                dataset: dataset.to_string(),
                method: entry.label.clone(),
                fold: f,
                accuracy: acc,
                auc,
                compression,
                selected_variables: outcome.model.selected_variables(),
                train_size: train_rows.len(),
                test_size: test_rows.len(),
                train_seconds: config.record_timings.then_some(seconds),
            })
        })
        .collect()
}

/// Writes `dataset,method,fold,acc,auc,compression,selected_vars,train_seconds`.
pub fn write_reports_csv<W: Write>(reports: &[EvaluationReport], out: W) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "dataset",
        "method",
        "fold",
        "acc",
        "auc",
        "compression",
        "selected_vars",
        "train_seconds",
    ])?;
    for r in reports {
        wtr.write_record([
            r.dataset.clone(),
            r.method.clone(),
            r.fold.to_string(),
            r.accuracy.to_string(),
            r.auc.map(|a| a.to_string()).unwrap_or_default(),
            r.compression.to_string(),
            r.selected_variables.to_string(),
            r.train_seconds.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub dataset: String,
    pub method: String,
    pub folds: usize,
    pub accuracy: MeanStd,
    pub auc: Option<MeanStd>,
    pub compression: MeanStd,
    pub selected_variables: MeanStd,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<MeanStd>,
}

/// Per (dataset, method) summaries in first-appearance order.
pub fn summarize(reports: &[EvaluationReport]) -> Vec<MethodSummary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in reports {
        let key = (r.dataset.clone(), r.method.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(dataset, method)| {
            let rows: Vec<&EvaluationReport> = reports
                .iter()
                .filter(|r| r.dataset == dataset && r.method == method)
                .collect();
            let col = |f: &dyn Fn(&EvaluationReport) -> f64| {
                MeanStd::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>()).expect("non-empty")
            };
            let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
            let times: Vec<f64> = rows.iter().filter_map(|r| r.train_seconds).collect();
            MethodSummary {
                folds: rows.len(),
                accuracy: col(&|r| r.accuracy),
                auc: MeanStd::of(&aucs),
                compression: col(&|r| r.compression),
                selected_variables: col(&|r| r.selected_variables as f64),
                train_seconds: MeanStd::of(&times),
                dataset,
                method,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prep::{read_table, ParseOptions};
    use crate::synth::informative_and_noise;

    fn raw_from(csv: &str) -> RawDataset {
        let t = read_table(csv.as_bytes(), &ParseOptions::default()).unwrap();
        RawDataset::from_table(&t, "class").unwrap()
    }

    fn hand_model(w: f64) -> Model {
        Model {
            metadata: ModelMetadata {
                method: "nb".into(),
                lambda: 0.25,
                p: 0.95,
                delta: 1e-6,
                epsilon: 0.01,
                seed: 0,
                train_criterion: 0.0,
                search_criterion: None,
            },
            target: "class".into(),
            class_labels: vec!["a".into(), "b".into()],
            class_log_priors: vec![0.5f64.ln(), 0.5f64.ln()],
            variables: vec![ModelVariable {
                name: "x".into(),
                kind: VariableKind::Categorical,
                partition: Partition::Categorical {
                    groups: vec!["u".into(), "v".into()],
                    other_group: false,
                    missing_part: false,
                    fallback: 0,
                },
                cond_log_prob: vec![
                    vec![0.8f64.ln(), 0.2f64.ln()],
                    vec![0.2f64.ln(), 0.8f64.ln()],
                ],
                cost: 1.0,
                weight: w,
            }],
        }
    }

    #[test]
    fn posterior_hand_example() {
        let p = hand_model(1.0)
            .predict_proba(&[Cell::Cat("u".into())])
            .unwrap();
        assert!((p[0] - 0.8).abs() < 1e-12 && (p[1] - 0.2).abs() < 1e-12);
        let p = hand_model(0.0)
            .predict_proba(&[Cell::Cat("u".into())])
            .unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert!(matches!(
            hand_model(1.0).predict_proba(&[]),
            Err(EvalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_weight_variable_is_ignored_exactly() {
        let m = hand_model(0.0);
        let a = m.predict_proba(&[Cell::Cat("u".into())]).unwrap();
        let b = m.predict_proba(&[Cell::Cat("v".into())]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn auc_examples() {
        let a = binary_auc(&[0.9, 0.8, 0.3, 0.2], &[true, false, true, false]).unwrap();
        assert!((a - 0.75).abs() < 1e-15);
        assert_eq!(
            binary_auc(&[0.5; 4], &[true, false, true, false]),
            Some(0.5)
        );
        assert_eq!(
            binary_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]),
            Some(1.0)
        );
        assert_eq!(binary_auc(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn auc_is_rank_invariant() {
        let s = [0.1, 0.4, 0.35, 0.8, 0.8, 0.2];
        let y = [false, true, false, true, false, true];
        let t: Vec<f64> = s.iter().map(|v: &f64| v.powi(3) + 2.0).collect();
        assert_eq!(binary_auc(&s, &y), binary_auc(&t, &y));
    }

    #[test]
    fn multiclass_auc_skips_absent_classes() {
        let probs = vec![
            vec![0.7, 0.2, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.6, 0.3, 0.1],
        ];
        let a = auc(&probs, &[0, 1, 0]).unwrap();
        assert_eq!(a, 1.0);
        assert!(matches!(
            auc(&probs[..1], &[0]),
            Err(EvalError::AucUndefined)
        ));
    }

    #[test]
    fn accuracy_ties_go_to_lowest_class() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(accuracy(&[vec![0.5, 0.5]], &[0]).unwrap(), 1.0);
        assert!(matches!(accuracy(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let folds = stratified_kfold(&labels, 5, 7).unwrap();
        let mut seen = vec![0; 100];
        for (train, test) in &folds {
            assert_eq!(test.iter().filter(|&&i| labels[i] == 0).count(), 10);
            assert_eq!(train.len() + test.len(), 100);
            for &i in test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(folds, stratified_kfold(&labels, 5, 7).unwrap());
        assert!(stratified_kfold(&labels, 1, 7).is_err());
        assert!(stratified_kfold(&labels[..3], 4, 7).is_err());
    }

    #[test]
    fn uneven_classes_differ_by_at_most_one() {
        let labels: Vec<usize> = (0..37).map(|i| usize::from(i % 3 == 0)).collect();
        let folds = stratified_kfold(&labels, 4, 1).unwrap();
        for c in 0..2 {
            let sizes: Vec<usize> = folds
                .iter()
                .map(|(_, t)| t.iter().filter(|&&i| labels[i] == c).count())
                .collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("fnb".parse::<TrainMethod>().unwrap(), TrainMethod::Fnb);
        assert_eq!(
            "fnb+sg.cf".parse::<TrainMethod>().unwrap(),
            TrainMethod::Gradient(Method::SgCf, Some(InitPolicy::Fnb))
        );
        assert_eq!(
            "ug.ue".parse::<TrainMethod>().unwrap(),
            TrainMethod::Gradient(Method::UgUe, None)
        );
        assert!("nope".parse::<TrainMethod>().is_err());
        let m = TrainMethod::Gradient(Method::SgCf, None);
        assert_eq!(m.label(InitPolicy::Fnb), "fnb+sg.cf");
        assert_eq!(m.label(InitPolicy::Uniform), "sg.cf");
    }

    #[test]
    fn separable_toy_is_learned_and_null_compresses_nothing() {
        let mut csv = String::from("x,noise,class\n");
        for i in 0..40 {
            let c = i % 2;
            csv.push_str(&format!(
                "{},{},{}\n",
                if c == 0 { "lo" } else { "hi" },
                i % 3,
                c
            ));
        }
        let raw = raw_from(&csv);
        let rows: Vec<usize> = (0..40).collect();
        let nb = train(
            &raw,
            &rows,
            &TrainConfig::with_method(TrainMethod::NaiveBayes),
        )
        .unwrap();
        let (acc, auc, comp) = evaluate_model(&nb.model, &raw, &rows).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(auc, Some(1.0));
        assert!(comp > 0.0 && comp < 1.0);
        // direct sum of -log posterior of the true class
        let probs = nb.model.posteriors(&raw, &rows).unwrap();
        let direct: f64 = probs
            .iter()
            .zip(&raw.targets)
            .map(|(p, &y)| -p[y].ln())
            .sum();
        assert!((nb.model.nll(&raw, &rows).unwrap() - direct).abs() < 1e-9);
        let null = train(&raw, &rows, &TrainConfig::with_method(TrainMethod::Null)).unwrap();
        assert_eq!(compression_rate(&null.model, &raw, &rows).unwrap(), 0.0);
        let (acc, _, _) = evaluate_model(&null.model, &raw, &rows).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn json_round_trip_is_bit_identical() {
        let raw = informative_and_noise(3, 120, 2, 2, 1.5);
        let rows: Vec<usize> = (0..120).collect();
        let out = train(
            &raw,
            &rows,
            &TrainConfig::with_method(TrainMethod::Gradient(Method::SgCf, None)),
        )
        .unwrap();
        let text = out.model.to_json().unwrap();
        let back = Model::from_json(&text).unwrap();
        assert_eq!(back, out.model);
        assert_eq!(
            back.posteriors(&raw, &rows).unwrap(),
            out.model.posteriors(&raw, &rows).unwrap()
        );
    }

    #[test]
    fn gradient_with_fnb_init_does_not_exceed_fnb_criterion() {
        let raw = informative_and_noise(5, 200, 3, 5, 1.0);
        let rows: Vec<usize> = (0..200).collect();
        let fnb = train(&raw, &rows, &TrainConfig::with_method(TrainMethod::Fnb)).unwrap();
        let chained = train(
            &raw,
            &rows,
            &TrainConfig::with_method(TrainMethod::Gradient(Method::SgCf, Some(InitPolicy::Fnb))),
        )
        .unwrap();
        assert!(chained.model.metadata.train_criterion <= fnb.model.metadata.train_criterion);
    }

    #[test]
    fn benchmark_adds_null_rows_and_is_paired() {
        let raw = informative_and_noise(1, 100, 2, 2, 2.0);
        let entries = vec![
            BenchmarkEntry::new(TrainConfig::with_method(TrainMethod::NaiveBayes)),
            BenchmarkEntry::new(TrainConfig::with_method(TrainMethod::Fnb)),
        ];
        let cfg = BenchmarkConfig {
            folds: 5,
            ..Default::default()
        };
        let reports = benchmark(&raw, "toy", &entries, &cfg).unwrap();
        assert_eq!(reports.len(), 15);
        for r in reports.iter().filter(|r| r.method == "null") {
            assert_eq!(r.compression, 0.0);
            assert_eq!(r.selected_variables, 0);
        }
        for f in 0..5 {
            let sizes: Vec<usize> = reports
                .iter()
                .filter(|r| r.fold == f)
                .map(|r| r.test_size)
                .collect();
            assert!(sizes.windows(2).all(|w| w[0] == w[1]));
        }
        let mut a = Vec::new();
        write_reports_csv(&reports, &mut a).unwrap();
        let mut b = Vec::new();
        write_reports_csv(&benchmark(&raw, "toy", &entries, &cfg).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let summary = summarize(&reports);
        assert_eq!(summary.len(), 3);
        assert_eq!(summary[0].method, "null");
    }
}
