use thiserror::Error;

/// Errors raised while loading or preparing tabular data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("target column '{0}' not found in header")]
    MissingTarget(String),
    #[error("column '{0}' not found in data")]
    MissingColumn(String),
    #[error("data file has no data rows")]
    NoRows,
    #[error("degenerate target: column '{0}' has a single distinct class")]
    DegenerateTarget(String),
    #[error("row {row}: missing target label")]
    MissingLabel { row: usize },
    #[error("row {row}: value '{value}' is not numeric for variable '{variable}'")]
    BadNumber {
        row: usize,
        variable: String,
        value: String,
    },
    #[error("cost file names unknown variable '{0}'")]
    UnknownCostVariable(String),
    #[error("cost for variable '{name}' is invalid: {value}")]
    InvalidCost { name: String, value: String },
    #[error("invalid preparation config: {0}")]
    Config(String),
}

/// Errors raised by criterion evaluation and optimization.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriterionError {
    #[error("dimension mismatch: expected {expected} weights, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight {index} = {value} is outside [0, 1]")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("weight {index} = {value} is not Boolean but the Boolean prior was requested")]
    NonBooleanWeight { index: usize, value: f64 },
    #[error("argument {0} outside [0, 1]")]
    OutOfUnitInterval(f64),
    #[error("invalid regularizer: {0}")]
    InvalidSpec(String),
    #[error(
        "penalty coefficient for variable {index} is not positive ({value}); costs are too small"
    )]
    NonPositiveCoefficient { index: usize, value: f64 },
    #[error("index {index} out of range for {len} variables")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("unknown method '{0}'")]
    UnknownMethod(String),
}

/// Errors raised by prediction and evaluation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty dataset")]
    Empty,
    #[error("AUC undefined: only one class present")]
    AucUndefined,
    #[error("instance has {got} cells, model has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid fold count {folds} for {n} instances")]
    InvalidFolds { folds: usize, n: usize },
    #[error("unknown class label '{0}'")]
    UnknownLabel(String),
    #[error("model format error: {0}")]
    Format(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
