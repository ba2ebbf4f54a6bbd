//! Regularized criterion for weighted naive Bayes.
//!
//! Everything here is a quantity to minimize. The data term is the negative
//! log-likelihood of the weighted naive Bayes posterior,
//!
//! ```text
//! F_N(w) = sum_n [ -s_{n,y_n}(w) + logsumexp_j s_{n,j}(w) ],
//! s_{n,j}(w) = log P(C_j) + sum_k w_k log p(x_k^n | C_j),
//! ```
//!
//! which is convex in `w`. The prior term is one of
//!
//! * Boolean: `L*(K_s) - log K_s! + sum_{selected} B_k`,
//! * continuous: `sum_k (1 - log(W + 1) + B_k) xi(w_k)` with `W = sum_k w_k`,
//! * fractional: `L*(ceil W) - log (ceil W)! + sum_k B_k w_k^p`,
//! * convex relaxation: `sum_k (1 - log(W_ref + 1) + B_k) w_k`,
//! * frozen continuous: `sum_k (1 - log(W_ref + 1) + B_k) xi(w_k)`.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CriterionError;
use crate::prep::PreparedDataset;

pub const DEFAULT_LAMBDA: f64 = 0.25;
pub const DEFAULT_P: f64 = 0.95;
pub const DEFAULT_DELTA: f64 = 1e-6;

/// Normalizing constant of the universal prior for integers.
pub const RISSANEN_C0: f64 = 2.865064;

/// Instances per reduction block. Fixed so sums do not depend on thread count.
const BLOCK: usize = 256;

/// Per-variable weights in `[0, 1]` with a mask of components pinned at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
    zero_fixed: Vec<bool>,
}

impl WeightVector {
    pub fn zeros(k: usize) -> Self {
        Self::uniform(k, 0.0)
    }

    pub fn ones(k: usize) -> Self {
        Self::uniform(k, 1.0)
    }

    pub fn uniform(k: usize, value: f64) -> Self {
        Self {
            weights: vec![value; k],
            zero_fixed: vec![false; k],
        }
    }

    /// Fails on components outside `[0, 1]`.
    pub fn from_vec(weights: Vec<f64>) -> Result<Self, CriterionError> {
        check_unit_box(&weights)?;
        let k = weights.len();
        Ok(Self {
            weights,
            zero_fixed: vec![false; k],
        })
    }

    pub fn from_subset(k: usize, selected: &[usize]) -> Self {
        let mut w = Self::zeros(k);
        for &i in selected {
            w.weights[i] = 1.0;
        }
        w
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn zero_fixed(&self) -> &[bool] {
        &self.zero_fixed
    }

    pub fn get(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// Sets `w_k`; ignored (kept at 0) when `k` is zero-fixed.
    pub fn set(&mut self, k: usize, value: f64) -> Result<(), CriterionError> {
        if k >= self.len() {
            return Err(CriterionError::IndexOutOfRange {
                index: k,
                len: self.len(),
            });
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(CriterionError::WeightOutOfRange { index: k, value });
        }
        self.weights[k] = if self.zero_fixed[k] { 0.0 } else { value };
        Ok(())
    }

    /// Pins `w_k` at zero for good.
    pub fn fix_zero(&mut self, k: usize) {
        self.zero_fixed[k] = true;
        self.weights[k] = 0.0;
    }

    /// Number of strictly positive weights.
    pub fn selected_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }
}

fn check_unit_box(w: &[f64]) -> Result<(), CriterionError> {
    for (index, &value) in w.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(CriterionError::WeightOutOfRange { index, value });
        }
    }
    Ok(())
}

/// Which prior term is attached to the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Boolean,
    Continuous,
    Fractional,
    /// Linear penalty with the log-coupling frozen at `w_ref`.
    ConvexRelaxed {
        w_ref: f64,
    },
    /// Separable concave penalty with the log-coupling frozen at `w_ref`.
    FrozenContinuous {
        w_ref: f64,
    },
}

/// The concave penalty shape `t^p`, linearized on `[0, delta]` and
/// renormalized so that it maps 0 to 0 and 1 to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Xi {
    p: f64,
    delta: f64,
    /// Unnormalized value at the origin, `delta^p (1 - p)`.
    offset: f64,
    /// `1 / (1 - offset)`.
    scale: f64,
    /// Unnormalized slope on the linear piece, `p delta^(p-1)`.
    slope0: f64,
}

impl Xi {
    pub fn new(p: f64, delta: f64) -> Self {
        let dp = delta.powf(p);
        let offset = dp * (1.0 - p);
        Self {
            p,
            delta,
            offset,
            scale: 1.0 / (1.0 - offset),
            slope0: p * delta.powf(p - 1.0),
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        if t < self.delta {
            self.slope0 * t * self.scale
        } else {
            (t.powf(self.p) - self.offset) * self.scale
        }
    }

    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        if t < self.delta {
            self.slope0 * self.scale
        } else {
            self.p * t.powf(self.p - 1.0) * self.scale
        }
    }

    #[inline]
    pub fn second_derivative(&self, t: f64) -> f64 {
        if t < self.delta {
            0.0
        } else {
            self.p * (self.p - 1.0) * t.powf(self.p - 2.0) * self.scale
        }
    }

    /// Slope of the linear piece near the origin.
    pub fn slope_at_zero(&self) -> f64 {
        self.slope0 * self.scale
    }
}

pub fn xi_delta(t: f64, p: f64, delta: f64) -> Result<f64, CriterionError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(CriterionError::OutOfUnitInterval(t));
    }
    Ok(Xi::new(p, delta).value(t))
}

pub fn xi_delta_prime(t: f64, p: f64, delta: f64) -> Result<f64, CriterionError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(CriterionError::OutOfUnitInterval(t));
    }
    Ok(Xi::new(p, delta).derivative(t))
}

/// Universal code length `L*(n)` of a positive integer, in nats.
/// `L*(0)` is defined as `L*(1)`.
pub fn rissanen_code_length(n: u64) -> f64 {
    let mut bits = RISSANEN_C0.log2();
    let mut x = (n.max(1)) as f64;
    loop {
        x = x.log2();
        if x <= 0.0 {
            break;
        }
        bits += x;
    }
    bits * std::f64::consts::LN_2
}

const LN_FACT_TABLE: usize = 1 << 16;

/// `log n!` by exact summation (cached cumulative table).
pub fn ln_factorial(n: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0;
        t.push(0.0);
        for i in 1..LN_FACT_TABLE {
            acc += (i as f64).ln();
            t.push(acc);
        }
        t
    });
    if (n as usize) < LN_FACT_TABLE {
        return table[n as usize];
    }
    let mut acc = table[LN_FACT_TABLE - 1];
    for i in LN_FACT_TABLE as u64..=n {
        acc += (i as f64).ln();
    }
    acc
}

/// Regularization settings: weight `lambda`, exponent `p`, smoothing `delta`,
/// prior variant and the per-variable costs `B(X_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    lambda: f64,
    p: f64,
    delta: f64,
    variant: Variant,
    costs: Vec<f64>,
}

impl RegularizerSpec {
    pub fn new(
        lambda: f64,
        p: f64,
        delta: f64,
        variant: Variant,
        costs: Vec<f64>,
    ) -> Result<Self, CriterionError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(CriterionError::InvalidSpec(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(CriterionError::InvalidSpec(format!(
                "p must lie in (0, 1], got {p}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CriterionError::InvalidSpec(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(CriterionError::InvalidSpec(format!(
                "negative or non-finite cost {c}"
            )));
        }
        let spec = Self {
            lambda,
            p,
            delta,
            variant,
            costs,
        };
        spec.check_coefficients()?;
        Ok(spec)
    }

    /// Defaults `lambda = 0.25`, `p = 0.95`, `delta = 1e-6`.
    pub fn with_defaults(variant: Variant, costs: Vec<f64>) -> Result<Self, CriterionError> {
        Self::new(DEFAULT_LAMBDA, DEFAULT_P, DEFAULT_DELTA, variant, costs)
    }

    /// Same settings with another variant.
    pub fn with_variant(&self, variant: Variant) -> Result<Self, CriterionError> {
        Self::new(self.lambda, self.p, self.delta, variant, self.costs.clone())
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, CriterionError> {
        Self::new(lambda, self.p, self.delta, self.variant, self.costs.clone())
    }

    fn check_coefficients(&self) -> Result<(), CriterionError> {
        let k = self.costs.len() as f64;
        let worst_w = match self.variant {
            Variant::Boolean => return Ok(()),
            Variant::Continuous | Variant::Fractional => k,
            Variant::ConvexRelaxed { w_ref } | Variant::FrozenContinuous { w_ref } => {
                if !(w_ref >= 0.0 && w_ref.is_finite()) {
                    return Err(CriterionError::InvalidSpec(format!(
                        "reference weight sum must be >= 0, got {w_ref}"
                    )));
                }
                w_ref
            }
        };
        let base = 1.0 - (worst_w + 1.0).ln();
        for (index, b) in self.costs.iter().enumerate() {
            let value = base + b;
            if value <= 0.0 {
                return Err(CriterionError::NonPositiveCoefficient { index, value });
            }
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn xi(&self) -> Xi {
        Xi::new(self.p, self.delta)
    }

    /// Separable coefficients `1 - log(w_ref + 1) + B_k`.
    pub fn frozen_coefficients(&self, w_ref: f64) -> Vec<f64> {
        let base = 1.0 - (w_ref + 1.0).ln();
        self.costs.iter().map(|b| base + b).collect()
    }
}

/// A criterion value split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionValue {
    pub total: f64,
    pub nll_part: f64,
    pub prior_part: f64,
    pub selected_count: usize,
}

fn check_dim(data: &PreparedDataset, w: &[f64]) -> Result<(), CriterionError> {
    if w.len() != data.num_variables() {
        return Err(CriterionError::DimensionMismatch {
            expected: data.num_variables(),
            got: w.len(),
        });
    }
    Ok(())
}

#[inline]
fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Fills `scores[j] = log P(C_j) + sum_k w_k log p(x_k^n | C_j)`.
#[inline]
fn instance_scores(data: &PreparedDataset, n: usize, w: &[f64], scores: &mut [f64]) {
    let j_count = data.num_classes();
    scores.copy_from_slice(data.class_log_prior());
    let block = data.instance(n);
    for (k, &wk) in w.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        let row = &block[k * j_count..(k + 1) * j_count];
        for (s, c) in scores.iter_mut().zip(row) {
            *s += wk * c;
        }
    }
}

fn blocks(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(BLOCK))
        .map(|b| (b * BLOCK, ((b + 1) * BLOCK).min(n)))
        .collect()
}

/// Maps fixed-size instance blocks (in parallel when there is more than one)
/// and returns the per-block results in order.
fn map_blocks<T: Send>(n: usize, f: impl Fn(usize, usize) -> T + Sync + Send) -> Vec<T> {
    let b = blocks(n);
    if b.len() <= 1 {
        b.into_iter().map(|(lo, hi)| f(lo, hi)).collect()
    } else {
        b.into_par_iter().map(|(lo, hi)| f(lo, hi)).collect()
    }
}

/// Negative log-likelihood `F_N(w)`.
pub fn neg_log_likelihood(data: &PreparedDataset, w: &[f64]) -> Result<f64, CriterionError> {
    check_dim(data, w)?;
    let partial = map_blocks(data.num_instances(), |lo, hi| {
        let mut scores = vec![0.0; data.num_classes()];
        let mut acc = 0.0;
        for n in lo..hi {
            instance_scores(data, n, w, &mut scores);
            acc += log_sum_exp(&scores) - scores[data.true_class()[n]];
        }
        acc
    });
    Ok(partial.into_iter().sum())
}

/// `F_N(w)` and its gradient
/// `dF/dw_k = sum_n sum_j (pi_{n,j} - [j = y_n]) log p(x_k^n | C_j)`.
pub fn nll_value_and_gradient(
    data: &PreparedDataset,
    w: &[f64],
) -> Result<(f64, Vec<f64>), CriterionError> {
    check_dim(data, w)?;
    let k_count = data.num_variables();
    let j_count = data.num_classes();
    let partial = map_blocks(data.num_instances(), |lo, hi| {
        let mut scores = vec![0.0; j_count];
        let mut grad = vec![0.0; k_count];
        let mut acc = 0.0;
        for n in lo..hi {
            instance_scores(data, n, w, &mut scores);
            let lse = log_sum_exp(&scores);
            let y = data.true_class()[n];
            acc += lse - scores[y];
            // residuals pi_j - [j = y]
            for (j, s) in scores.iter_mut().enumerate() {
                *s = (*s - lse).exp() - if j == y { 1.0 } else { 0.0 };
            }
            let block = data.instance(n);
            for (k, g) in grad.iter_mut().enumerate() {
                let row = &block[k * j_count..(k + 1) * j_count];
                *g += row.iter().zip(&scores).map(|(c, r)| c * r).sum::<f64>();
            }
        }
        (acc, grad)
    });
    let mut value = 0.0;
    let mut grad = vec![0.0; k_count];
    for (v, g) in partial {
        value += v;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((value, grad))
}

pub fn nll_gradient(data: &PreparedDataset, w: &[f64]) -> Result<Vec<f64>, CriterionError> {
    nll_value_and_gradient(data, w).map(|(_, g)| g)
}

fn check_boolean(w: &[f64]) -> Result<(), CriterionError> {
    for (index, &value) in w.iter().enumerate() {
        if value != 0.0 && value != 1.0 {
            return Err(CriterionError::NonBooleanWeight { index, value });
        }
    }
    Ok(())
}

fn subset_size_cost(size: u64) -> f64 {
    rissanen_code_length(size) - ln_factorial(size)
}

/// Boolean prior `L*(K_s) - log K_s! + sum_{selected} B_k`.
pub fn prior_boolean(w: &[f64], costs: &[f64]) -> Result<f64, CriterionError> {
    check_boolean(w)?;
    let mut ks = 0u64;
    let mut cost = 0.0;
    for (wk, b) in w.iter().zip(costs) {
        if *wk == 1.0 {
            ks += 1;
            cost += b;
        }
    }
    Ok(subset_size_cost(ks) + cost)
}

/// Continuous prior `sum_k (1 - log(sum w + 1) + B_k) xi(w_k)`.
pub fn prior_continuous(w: &[f64], costs: &[f64], xi: &Xi) -> f64 {
    let log_term = 1.0 - (w.iter().sum::<f64>() + 1.0).ln();
    w.iter()
        .zip(costs)
        .filter(|(wk, _)| **wk > 0.0)
        .map(|(wk, b)| (log_term + b) * xi.value(*wk))
        .sum()
}

/// Fractional prior `L*(ceil W) - log (ceil W)! + sum_{w_k > 0} B_k w_k^p`.
pub fn prior_fractional(w: &[f64], costs: &[f64], p: f64) -> f64 {
    let total: f64 = w.iter().sum();
    let ks = total.ceil() as u64;
    let cost: f64 = w
        .iter()
        .zip(costs)
        .filter(|(wk, _)| **wk > 0.0)
        .map(|(wk, b)| b * if *wk == 1.0 { 1.0 } else { wk.powf(p) })
        .sum();
    subset_size_cost(ks) + cost
}

/// The prior term selected by `spec.variant`.
pub fn prior(spec: &RegularizerSpec, w: &[f64]) -> Result<f64, CriterionError> {
    let costs = spec.costs();
    Ok(match spec.variant() {
        Variant::Boolean => prior_boolean(w, costs)?,
        Variant::Continuous => prior_continuous(w, costs, &spec.xi()),
        Variant::Fractional => prior_fractional(w, costs, spec.p()),
        Variant::ConvexRelaxed { w_ref } => {
            let base = 1.0 - (w_ref + 1.0).ln();
            w.iter().zip(costs).map(|(wk, b)| (base + b) * wk).sum()
        }
        Variant::FrozenContinuous { w_ref } => {
            let base = 1.0 - (w_ref + 1.0).ln();
            let xi = spec.xi();
            w.iter()
                .zip(costs)
                .filter(|(wk, _)| **wk > 0.0)
                .map(|(wk, b)| (base + b) * xi.value(*wk))
                .sum()
        }
    })
}

/// Gradient of the prior term (differentiable variants only).
pub fn prior_gradient(spec: &RegularizerSpec, w: &[f64]) -> Result<Vec<f64>, CriterionError> {
    let costs = spec.costs();
    let xi = spec.xi();
    match spec.variant() {
        Variant::Boolean | Variant::Fractional => Err(CriterionError::InvalidSpec(
            "prior variant is not differentiable".into(),
        )),
        Variant::Continuous => {
            let total: f64 = w.iter().sum();
            let log_term = 1.0 - (total + 1.0).ln();
            let xi_sum: f64 = w.iter().map(|&t| xi.value(t)).sum();
            let coupling = xi_sum / (total + 1.0);
            Ok(w.iter()
                .zip(costs)
                .map(|(&t, b)| (log_term + b) * xi.derivative(t) - coupling)
                .collect())
        }
        Variant::ConvexRelaxed { w_ref } => Ok(spec.frozen_coefficients(w_ref)),
        Variant::FrozenContinuous { w_ref } => Ok(spec
            .frozen_coefficients(w_ref)
            .into_iter()
            .zip(w)
            .map(|(c, &t)| c * xi.derivative(t))
            .collect()),
    }
}

/// Full criterion `F_N(w) + lambda * prior(w)`.
pub fn criterion(
    data: &PreparedDataset,
    w: &[f64],
    spec: &RegularizerSpec,
) -> Result<CriterionValue, CriterionError> {
    check_dim(data, w)?;
    check_unit_box(w)?;
    let prior_part = prior(spec, w)?;
    let nll_part = neg_log_likelihood(data, w)?;
    Ok(CriterionValue {
        total: nll_part + spec.lambda() * prior_part,
        nll_part,
        prior_part,
        selected_count: w.iter().filter(|&&x| x > 0.0).count(),
    })
}

/// Criterion state that supports O(NJ) single-weight updates.
///
/// Caches the per-instance class scores `s_{n,j}`; changing `w_k` by `d`
/// shifts every `s_{n,j}` by `d * log p(x_k^n | C_j)`.
#[derive(Debug, Clone)]
pub struct IncrementalEvaluator<'a> {
    data: &'a PreparedDataset,
    spec: &'a RegularizerSpec,
    weights: Vec<f64>,
    scores: Vec<f64>,
    current: CriterionValue,
    scratch: Vec<f64>,
}

impl<'a> IncrementalEvaluator<'a> {
    pub fn new(
        data: &'a PreparedDataset,
        spec: &'a RegularizerSpec,
        w: &[f64],
    ) -> Result<Self, CriterionError> {
        check_dim(data, w)?;
        check_unit_box(w)?;
        if spec.costs().len() != w.len() {
            return Err(CriterionError::DimensionMismatch {
                expected: w.len(),
                got: spec.costs().len(),
            });
        }
        let mut ev = Self {
            data,
            spec,
            weights: w.to_vec(),
            scores: vec![0.0; data.num_instances() * data.num_classes()],
            current: CriterionValue {
                total: 0.0,
                nll_part: 0.0,
                prior_part: 0.0,
                selected_count: 0,
            },
            scratch: vec![0.0; data.num_classes()],
        };
        ev.resync()?;
        Ok(ev)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn current(&self) -> CriterionValue {
        self.current
    }

    /// Recomputes the cached scores from scratch.
    pub fn resync(&mut self) -> Result<CriterionValue, CriterionError> {
        let j_count = self.data.num_classes();
        for n in 0..self.data.num_instances() {
            instance_scores(
                self.data,
                n,
                &self.weights,
                &mut self.scores[n * j_count..(n + 1) * j_count],
            );
        }
        let nll = self.nll_with_shift(None);
        self.current = self.assemble(nll)?;
        Ok(self.current)
    }

    fn nll_with_shift(&mut self, shift: Option<(usize, f64)>) -> f64 {
        let j_count = self.data.num_classes();
        let mut acc = 0.0;
        for n in 0..self.data.num_instances() {
            let s = &self.scores[n * j_count..(n + 1) * j_count];
            let y = self.data.true_class()[n];
            match shift {
                None => acc += log_sum_exp(s) - s[y],
                Some((k, d)) => {
                    let c = self.data.cond(n, k);
                    for ((t, si), ci) in self.scratch.iter_mut().zip(s).zip(c) {
                        *t = si + d * ci;
                    }
                    acc += log_sum_exp(&self.scratch) - self.scratch[y];
                }
            }
        }
        acc
    }

    fn assemble(&self, nll_part: f64) -> Result<CriterionValue, CriterionError> {
        let prior_part = prior(self.spec, &self.weights)?;
        Ok(CriterionValue {
            total: nll_part + self.spec.lambda() * prior_part,
            nll_part,
            prior_part,
            selected_count: self.weights.iter().filter(|&&x| x > 0.0).count(),
        })
    }

    fn check_move(&self, k: usize, value: f64) -> Result<(), CriterionError> {
        if k >= self.weights.len() {
            return Err(CriterionError::IndexOutOfRange {
                index: k,
                len: self.weights.len(),
            });
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(CriterionError::WeightOutOfRange { index: k, value });
        }
        if self.spec.variant() == Variant::Boolean && value != 0.0 && value != 1.0 {
            return Err(CriterionError::NonBooleanWeight { index: k, value });
        }
        Ok(())
    }

    /// Criterion after setting `w_k = value`, without committing the change.
    pub fn evaluate_change(
        &mut self,
        k: usize,
        value: f64,
    ) -> Result<CriterionValue, CriterionError> {
        self.check_move(k, value)?;
        let old = self.weights[k];
        if value == old {
            return Ok(self.current);
        }
        let nll = self.nll_with_shift(Some((k, value - old)));
        self.weights[k] = value;
        let result = self.assemble(nll);
        self.weights[k] = old;
        result
    }

    /// Sets `w_k = value` and returns the updated criterion.
    pub fn update_weight(
        &mut self,
        k: usize,
        value: f64,
    ) -> Result<CriterionValue, CriterionError> {
        self.check_move(k, value)?;
        let old = self.weights[k];
        if value == old {
            return Ok(self.current);
        }
        let d = value - old;
        let j_count = self.data.num_classes();
        for n in 0..self.data.num_instances() {
            let c = self.data.cond(n, k);
            for (s, ci) in self.scores[n * j_count..(n + 1) * j_count]
                .iter_mut()
                .zip(c)
            {
                *s += d * ci;
            }
        }
        self.weights[k] = value;
        let nll = self.nll_with_shift(None);
        self.current = self.assemble(nll)?;
        Ok(self.current)
    }
}
