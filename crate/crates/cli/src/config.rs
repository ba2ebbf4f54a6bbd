//! Settings from flags, an optional TOML file and built-in defaults, in that
//! order of precedence.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use wnb_core::criterion::{self, Variant};
use wnb_core::evaluate::{InitPolicy, TrainConfig, TrainMethod};
use wnb_core::optim::OptimizerConfig;
use wnb_core::prep::CostOverrides;
use wnb_core::RegularizerSpec;

use crate::cli::Hyper;
use crate::error::CliError;

/// Keys accepted in a `--config` file. All optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub method: Option<String>,
    pub methods: Option<Vec<String>>,
    pub lambda: Option<f64>,
    pub p: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub init: Option<String>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub costs: Option<PathBuf>,
    pub max_parts: Option<usize>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub timings: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Data location and a fully resolved training configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: PathBuf,
    pub target: String,
    pub train: TrainConfig,
}

pub fn parse_method(s: &str) -> Result<TrainMethod, CliError> {
    s.parse()
        .map_err(|_| CliError::Usage(format!("unknown method '{s}'")))
}

fn parse_init(s: &str) -> Result<InitPolicy, CliError> {
    s.parse()
        .map_err(|_| CliError::Usage(format!("unknown init policy '{s}' (uniform, snb or fnb)")))
}

pub fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, CliError> {
    flag.or(file)
        .ok_or_else(|| CliError::Usage(format!("--{name} is required")))
}

/// Merges `hyper` over `file` over the defaults and checks every setting
/// before any data is touched. `method` is resolved by the caller.
pub fn resolve(
    hyper: &Hyper,
    file: &FileConfig,
    method: TrainMethod,
) -> Result<RunConfig, CliError> {
    let data = required(hyper.data.clone(), file.data.clone(), "data")?;
    let target = required(hyper.target.clone(), file.target.clone(), "target")?;
    let mut train = TrainConfig::with_method(method);
    train.lambda = hyper
        .lambda
        .or(file.lambda)
        .unwrap_or(criterion::DEFAULT_LAMBDA);
    train.p = hyper.p.or(file.p).unwrap_or(criterion::DEFAULT_P);
    train.delta = hyper
        .delta
        .or(file.delta)
        .unwrap_or(criterion::DEFAULT_DELTA);
    if let Some(init) = hyper.init.as_deref().or(file.init.as_deref()) {
        train.init = parse_init(init)?;
    }
    let defaults = OptimizerConfig::default();
    train.optimizer = OptimizerConfig {
        epsilon: hyper.epsilon.or(file.epsilon).unwrap_or(defaults.epsilon),
        max_iters: hyper
            .max_iters
            .or(file.max_iters)
            .unwrap_or(defaults.max_iters),
        ..defaults
    };
    train.search.seed = hyper.seed.or(file.seed).unwrap_or(0);
    train.prep.max_parts = hyper.max_parts.or(file.max_parts);
    if train.prep.max_parts == Some(0) {
        return Err(CliError::Usage("--max-parts must be >= 1".into()));
    }
    if let Some(path) = hyper.costs.as_deref().or(file.costs.as_deref()) {
        train.costs = Some(CostOverrides::from_path(path)?);
    }
    validate(&train)?;
    Ok(RunConfig {
        data,
        target,
        train,
    })
}

/// Range checks that do not need the data.
pub fn validate(train: &TrainConfig) -> Result<(), CliError> {
    RegularizerSpec::new(
        train.lambda,
        train.p,
        train.delta,
        Variant::Continuous,
        Vec::new(),
    )?;
    train.optimizer.validate()?;
    Ok(())
}
