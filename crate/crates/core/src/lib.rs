//! Weighted naive Bayes classifiers with sparse, cost-aware regularization.
//!
//! The crate is organized bottom-up:
//!
//! * [`prep`] turns a CSV table into discretized variables and the cached
//!   conditional log-probabilities every criterion works on;
//! * [`criterion`] evaluates and differentiates the regularized negative
//!   log-likelihood under the Boolean, continuous and fractional priors;
//! * [`optim`] minimizes the continuous criterion over `[0, 1]^K` with the
//!   one-stage and two-stage gradient methods;
//! * [`search`] holds the combinatorial forward-backward predictors (SNB and
//!   FNB);
//! * [`evaluate`] predicts, scores and cross-validates models.

pub mod criterion;
pub mod error;
pub mod evaluate;
pub mod optim;
pub mod prep;
pub mod search;
pub mod synth;

pub use criterion::{CriterionValue, RegularizerSpec, Variant, WeightVector};
pub use error::{CriterionError, DataError, EvalError};
pub use prep::{Preparation, PreparedDataset, RawDataset};
