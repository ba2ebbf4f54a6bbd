use std::path::PathBuf;

use thiserror::Error;
use wnb_core::{CriterionError, DataError, EvalError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config file {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("cannot read model {path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

fn criterion_code(e: &CriterionError) -> u8 {
    match e {
        CriterionError::InvalidSpec(_)
        | CriterionError::NonPositiveCoefficient { .. }
        | CriterionError::InvalidConfig(_)
        | CriterionError::UnknownMethod(_) => 2,
        _ => 3,
    }
}

impl CliError {
    /// 2 for bad input or settings, 3 for failures after validation.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Config { .. } | Self::Model { .. } | Self::Data(_) => 2,
            Self::Criterion(e) => criterion_code(e),
            Self::Eval(e) => match e {
                EvalError::Data(_)
                | EvalError::UnknownLabel(_)
                | EvalError::InvalidFolds { .. }
                | EvalError::Format(_)
                | EvalError::DimensionMismatch { .. }
                | EvalError::Empty => 2,
                EvalError::Criterion(c) => criterion_code(c),
                _ => 3,
            },
            Self::Output { .. } | Self::Runtime(_) => 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_is_2_and_runtime_is_3() {
        assert_eq!(
            CliError::Data(DataError::MissingTarget("y".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::Eval(EvalError::UnknownLabel("z".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::Criterion(CriterionError::InvalidSpec("p".into())).exit_code(),
            2
        );
        assert_eq!(
            CliError::Eval(CriterionError::NonFiniteGradient.into()).exit_code(),
            3
        );
        let io = std::io::Error::other("disk full");
        assert_eq!(
            CliError::Output {
                path: "x".into(),
                source: io
            }
            .exit_code(),
            3
        );
    }
}
