//! Box-constrained minimization of the continuous criterion.
//!
//! One-stage methods work on the full non-convex criterion directly:
//! `SG` (projected gradient mapping with backtracking on `L`) and `AM`
//! (alternating between freezing the weight sum inside the log coupling and
//! composite steps on the resulting separable problem).
//!
//! Two-stage methods first solve a convex relaxation (`SG`, `UG` universal
//! gradient, or `CG` Frank-Wolfe), then refine from that point on the
//! separable non-convex objective with the weight sum frozen at the first
//! stage's value, using either tangent upper estimators (`UE`) or composite
//! proximal steps (`CF`).
//!
//! One-stage and second-stage methods pin any component that reaches exactly
//! zero; the convex first stage does not.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::criterion::{
    self, neg_log_likelihood, nll_value_and_gradient, CriterionValue, RegularizerSpec, Variant,
    WeightVector, Xi,
};
use crate::error::CriterionError;
use crate::prep::PreparedDataset;

/// A differentiable function on `[0, 1]^K`.
pub trait Objective {
    fn value(&self, w: &[f64]) -> Result<f64, CriterionError>;
    fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>), CriterionError>;
}

/// `F_N(w) + lambda * prior(w)` for a differentiable prior variant.
pub struct Regularized<'a> {
    pub data: &'a PreparedDataset,
    pub spec: &'a RegularizerSpec,
}

impl Objective for Regularized<'_> {
    fn value(&self, w: &[f64]) -> Result<f64, CriterionError> {
        Ok(
            neg_log_likelihood(self.data, w)?
                + self.spec.lambda() * criterion::prior(self.spec, w)?,
        )
    }

    fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>), CriterionError> {
        let (f, mut g) = nll_value_and_gradient(self.data, w)?;
        let pg = criterion::prior_gradient(self.spec, w)?;
        for (a, b) in g.iter_mut().zip(pg) {
            *a += self.spec.lambda() * b;
        }
        Ok((f + self.spec.lambda() * criterion::prior(self.spec, w)?, g))
    }
}

/// Componentwise clamp to `[0, 1]`, with masked components forced to zero.
pub fn project_box(v: &[f64], zero_fixed: &[bool]) -> Vec<f64> {
    v.iter()
        .zip(zero_fixed.iter().chain(std::iter::repeat(&false)))
        .map(|(&x, &fixed)| if fixed { 0.0 } else { x.clamp(0.0, 1.0) })
        .collect()
}

fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn check_finite(g: &[f64]) -> Result<(), CriterionError> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CriterionError::NonFiniteGradient)
    }
}

/// Outcome of one gradient-mapping trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingStep {
    pub candidate: Vec<f64>,
    pub candidate_value: f64,
    pub accepted: bool,
}

/// Projected step `w+ = P(w - grad / L)`, accepted when
/// `f(w+) <= f(w) + <grad, w+ - w> + L/2 |w+ - w|^2 + slack`.
///
/// With `slack == 0` the right-hand side is additionally capped at `f(w)`,
/// which only matters under rounding since the projected step already makes
/// the model decrease nonpositive.
pub fn gradient_mapping_step<O: Objective + ?Sized>(
    objective: &O,
    w: &[f64],
    value: f64,
    grad: &[f64],
    lipschitz: f64,
    zero_fixed: &[bool],
    slack: f64,
) -> Result<MappingStep, CriterionError> {
    check_finite(grad)?;
    let trial: Vec<f64> = w.iter().zip(grad).map(|(x, g)| x - g / lipschitz).collect();
    let candidate = project_box(&trial, zero_fixed);
    let candidate_value = objective.value(&candidate)?;
    let mut lin = 0.0;
    let mut sq = 0.0;
    for ((c, x), g) in candidate.iter().zip(w).zip(grad) {
        let d = c - x;
        lin += g * d;
        sq += d * d;
    }
    let model = lin + 0.5 * lipschitz * sq;
    let bound = if slack > 0.0 {
        value + model + slack
    } else {
        value + model.min(0.0)
    };
    Ok(MappingStep {
        accepted: candidate_value <= bound,
        candidate,
        candidate_value,
    })
}

/// The eight gradient-based methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sg")]
    Sg,
    #[serde(rename = "am")]
    Am,
    #[serde(rename = "sg.cf")]
    SgCf,
    #[serde(rename = "sg.ue")]
    SgUe,
    #[serde(rename = "ug.cf")]
    UgCf,
    #[serde(rename = "ug.ue")]
    UgUe,
    #[serde(rename = "cg.cf")]
    CgCf,
    #[serde(rename = "cg.ue")]
    CgUe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstStage {
    Sg,
    Ug,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecondStage {
    Ue,
    Cf,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Sg,
        Method::Am,
        Method::SgCf,
        Method::SgUe,
        Method::UgCf,
        Method::UgUe,
        Method::CgCf,
        Method::CgUe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sg => "sg",
            Method::Am => "am",
            Method::SgCf => "sg.cf",
            Method::SgUe => "sg.ue",
            Method::UgCf => "ug.cf",
            Method::UgUe => "ug.ue",
            Method::CgCf => "cg.cf",
            Method::CgUe => "cg.ue",
        }
    }

    pub fn stages(self) -> Option<(FirstStage, SecondStage)> {
        match self {
            Method::Sg | Method::Am => None,
            Method::SgCf => Some((FirstStage::Sg, SecondStage::Cf)),
            Method::SgUe => Some((FirstStage::Sg, SecondStage::Ue)),
            Method::UgCf => Some((FirstStage::Ug, SecondStage::Cf)),
            Method::UgUe => Some((FirstStage::Ug, SecondStage::Ue)),
            Method::CgCf => Some((FirstStage::Cg, SecondStage::Cf)),
            Method::CgUe => Some((FirstStage::Cg, SecondStage::Ue)),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CriterionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CriterionError::UnknownMethod(s.to_string()))
    }
}

/// How the first stage picks the weight-sum estimate of its linear penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum W0Policy {
    /// Sum of the initial weights (`K / 2` under uniform initialization).
    InitialSum,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Stops when `|w_{t+1} - w_t|_inf < epsilon / K` (or the Frank-Wolfe gap
    /// falls below `epsilon * |objective|`).
    pub epsilon: f64,
    pub max_iters: usize,
    pub l_init: f64,
    pub w0_policy: W0Policy,
    /// Backtracking doublings allowed per iteration.
    pub max_doublings: usize,
    pub am_max_outer: usize,
    /// Keep every accepted iterate in the trace.
    pub record_iterates: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::SgCf,
            epsilon: 0.01,
            max_iters: 1000,
            l_init: 1.0,
            w0_policy: W0Policy::InitialSum,
            max_doublings: 60,
            am_max_outer: 50,
            record_iterates: false,
        }
    }
}

impl OptimizerConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CriterionError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(CriterionError::InvalidConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(CriterionError::InvalidConfig(
                "max_iters must be >= 1".into(),
            ));
        }
        if !(self.l_init > 0.0 && self.l_init.is_finite()) {
            return Err(CriterionError::InvalidConfig(format!(
                "l_init must be > 0, got {}",
                self.l_init
            )));
        }
        if let W0Policy::Fixed(w0) = self.w0_policy {
            if !(w0 >= 0.0 && w0.is_finite()) {
                return Err(CriterionError::InvalidConfig(format!(
                    "W0 must be >= 0, got {w0}"
                )));
            }
        }
        Ok(())
    }

    fn l_floor(&self) -> f64 {
        self.l_init / 1024.0
    }
}

/// One accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 0 for one-stage methods and first stages, 1 for second stages; the
    /// outer iteration index for AM.
    pub segment: usize,
    pub iteration: usize,
    /// Value of the objective the method accepts steps on.
    pub objective: f64,
    /// Full continuous criterion `F_N + lambda f_C` at the same point.
    pub criterion: f64,
    /// `None` for Frank-Wolfe steps.
    pub lipschitz: Option<f64>,
    pub displacement: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageResult {
    pub w_tilde: Vec<f64>,
    pub w_tilde_sum: f64,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
}

/// Result of [`solve`] and the individual solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRun {
    pub method: Method,
    pub final_w: WeightVector,
    pub trace: Vec<TraceEntry>,
    /// Accepted steps over all stages.
    pub iterations: usize,
    #[serde(with = "duration_secs")]
    pub wall_time: Duration,
    /// Final value of the objective the last stage minimized.
    pub objective: f64,
    /// Full continuous criterion at `final_w`.
    pub criterion: CriterionValue,
    pub first_stage: Option<FirstStageResult>,
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

impl OptimizerRun {
    /// Writes `iteration,objective,criterion,L,displacement,segment` rows.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "iteration",
            "objective",
            "criterion",
            "L",
            "displacement",
            "segment",
        ])?;
        for e in &self.trace {
            wtr.write_record([
                e.iteration.to_string(),
                e.objective.to_string(),
                e.criterion.to_string(),
                e.lipschitz.map(|l| l.to_string()).unwrap_or_default(),
                e.displacement.to_string(),
                e.segment.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Shared state for the iterative loops.
struct Tracker<'a> {
    data: &'a PreparedDataset,
    spec: &'a RegularizerSpec,
    record: bool,
    trace: Vec<TraceEntry>,
}

impl Tracker<'_> {
    fn full_criterion(&self, w: &[f64], nll: Option<f64>) -> Result<f64, CriterionError> {
        let f = match nll {
            Some(v) => v,
            None => neg_log_likelihood(self.data, w)?,
        };
        Ok(f + self.spec.lambda() * criterion::prior(self.spec, w)?)
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        segment: usize,
        iteration: usize,
        objective: f64,
        nll: Option<f64>,
        lipschitz: Option<f64>,
        displacement: f64,
        w: &[f64],
    ) -> Result<(), CriterionError> {
        let criterion = self.full_criterion(w, nll)?;
        self.trace.push(TraceEntry {
            segment,
            iteration,
            objective,
            criterion,
            lipschitz,
            displacement,
            iterate: self.record.then(|| w.to_vec()),
        });
        Ok(())
    }
}

fn pin_zeros(w: &mut WeightVector) {
    for k in 0..w.len() {
        if w.get(k) == 0.0 && !w.zero_fixed()[k] {
            w.fix_zero(k);
        }
    }
}

fn tolerance(config: &OptimizerConfig, k: usize) -> f64 {
    config.epsilon / k.max(1) as f64
}

/// Projected-gradient loop shared by one-stage SG and the SG/UG first stages.
/// Returns the final point, its objective value and the accepted step count.
#[allow(clippy::too_many_arguments)]
fn gradient_mapping_loop<O: Objective>(
    objective: &O,
    mut w: WeightVector,
    config: &OptimizerConfig,
    zero_fixing: bool,
    slack: f64,
    segment: usize,
    tracker: &mut Tracker<'_>,
) -> Result<(WeightVector, f64, usize), CriterionError> {
    let tol = tolerance(config, w.len());
    if zero_fixing {
        pin_zeros(&mut w);
    }
    let (mut f, mut g) = objective.value_and_gradient(w.as_slice())?;
    let mut l = config.l_init;
    let mut accepted_steps = 0;
    for iteration in 1..=config.max_iters {
        let mut step = None;
        for _ in 0..=config.max_doublings {
            let s =
                gradient_mapping_step(objective, w.as_slice(), f, &g, l, w.zero_fixed(), slack)?;
            if s.accepted {
                step = Some(s);
                break;
            }
            l *= 2.0;
        }
        let Some(step) = step else { break };
        // The universal method's slack can admit a small increase; that only
        // happens once the step is within the accuracy target.
        if step.candidate_value > f {
            break;
        }
        let displacement = sup_norm_diff(&step.candidate, w.as_slice());
        if displacement < tol {
            break;
        }
        let fixed = w.zero_fixed().to_vec();
        w = WeightVector::from_vec(step.candidate)?;
        for (k, &z) in fixed.iter().enumerate() {
            if z {
                w.fix_zero(k);
            }
        }
        if zero_fixing {
            pin_zeros(&mut w);
        }
        (f, g) = objective.value_and_gradient(w.as_slice())?;
        accepted_steps += 1;
        tracker.push(
            segment,
            iteration,
            f,
            None,
            Some(l),
            displacement,
            w.as_slice(),
        )?;
        l = (l / 2.0).max(config.l_floor());
    }
    Ok((w, f, accepted_steps))
}

/// Argmin over `t in [0, 1]` of `(L/2)(t - v)^2 + coeff * xi(t)`.
///
/// Candidates are `0`, the minimizer on the linear piece `[0, delta]`, the
/// point `delta`, and the local minimizer on `[delta, 1]` where the
/// stationarity function `h(t) = L (t - v) + coeff xi'(t)` (convex in `t`)
/// crosses zero upward. Ties go to the smaller candidate.
pub fn prox_1d(v: f64, coeff: f64, lipschitz: f64, xi: &Xi) -> f64 {
    if coeff <= 0.0 {
        return v.clamp(0.0, 1.0);
    }
    let phi = |t: f64| 0.5 * lipschitz * (t - v) * (t - v) + coeff * xi.value(t);
    let delta = xi.delta();
    let h = |t: f64| lipschitz * (t - v) + coeff * xi.derivative(t);
    let dh = |t: f64| lipschitz + coeff * xi.second_derivative(t);

    let mut candidates = [
        0.0,
        (v - coeff * xi.slope_at_zero() / lipschitz).clamp(0.0, delta),
        delta,
        f64::NAN,
    ];

    let t_star = if dh(delta) >= 0.0 {
        delta
    } else if dh(1.0) <= 0.0 {
        1.0
    } else {
        bisect(delta, 1.0, |t| dh(t) < 0.0)
    };
    if h(t_star) < 0.0 {
        candidates[3] = if h(1.0) <= 0.0 {
            1.0
        } else {
            bisect(t_star, 1.0, |t| h(t) < 0.0)
        };
    }

    let mut best = 0.0;
    let mut best_val = phi(0.0);
    for &t in &candidates[1..] {
        if t.is_nan() {
            continue;
        }
        let val = phi(t);
        if val < best_val {
            best = t;
            best_val = val;
        }
    }
    best
}

/// Bisection for the boundary of `below` (true on the left part of `[lo, hi]`).
fn bisect(mut lo: f64, mut hi: f64, below: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..100 {
        if hi - lo <= 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn separable_penalty(w: &[f64], coeffs: &[f64], lambda: f64, xi: &Xi) -> f64 {
    lambda
        * w.iter()
            .zip(coeffs)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, c)| c * xi.value(*t))
            .sum::<f64>()
}

/// Composite gradient loop on `F_N(w) + lambda sum_k coeffs_k xi(w_k)`:
/// gradient step on `F_N`, exact per-coordinate prox on the penalty.
#[allow(clippy::too_many_arguments)]
fn composite_loop(
    data: &PreparedDataset,
    coeffs: &[f64],
    lambda: f64,
    xi: &Xi,
    mut w: WeightVector,
    config: &OptimizerConfig,
    segment: usize,
    tracker: &mut Tracker<'_>,
) -> Result<(WeightVector, f64, usize), CriterionError> {
    let tol = tolerance(config, w.len());
    pin_zeros(&mut w);
    let (mut f, mut g) = nll_value_and_gradient(data, w.as_slice())?;
    let mut phi = f + separable_penalty(w.as_slice(), coeffs, lambda, xi);
    let mut l = config.l_init;
    let mut accepted_steps = 0;
    for iteration in 1..=config.max_iters {
        check_finite(&g)?;
        let mut step = None;
        for _ in 0..=config.max_doublings {
            let candidate: Vec<f64> = (0..w.len())
                .map(|k| {
                    if w.zero_fixed()[k] {
                        0.0
                    } else {
                        prox_1d(w.get(k) - g[k] / l, lambda * coeffs[k], l, xi)
                    }
                })
                .collect();
            let fc = neg_log_likelihood(data, &candidate)?;
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((c, x), gk) in candidate.iter().zip(w.as_slice()).zip(&g) {
                lin += gk * (c - x);
                sq += (c - x) * (c - x);
            }
            let phic = fc + separable_penalty(&candidate, coeffs, lambda, xi);
            if fc <= f + lin + 0.5 * l * sq && phic <= phi {
                step = Some((candidate, phic));
                break;
            }
            l *= 2.0;
        }
        let Some((candidate, phic)) = step else { break };
        let displacement = sup_norm_diff(&candidate, w.as_slice());
        if displacement < tol {
            break;
        }
        let fixed = w.zero_fixed().to_vec();
        w = WeightVector::from_vec(candidate)?;
        for (k, &z) in fixed.iter().enumerate() {
            if z {
                w.fix_zero(k);
            }
        }
        pin_zeros(&mut w);
        (f, g) = nll_value_and_gradient(data, w.as_slice())?;
        phi = phic;
        accepted_steps += 1;
        tracker.push(
            segment,
            iteration,
            phi,
            Some(f),
            Some(l),
            displacement,
            w.as_slice(),
        )?;
        l = (l / 2.0).max(config.l_floor());
    }
    Ok((w, phi, accepted_steps))
}

/// Upper-estimator loop: each concave `xi(w_k)` is replaced by its tangent at
/// the current point, a projected gradient step is taken on that convex upper
/// model, and the step is kept only if the true objective strictly decreases.
#[allow(clippy::too_many_arguments)]
fn upper_estimator_loop(
    data: &PreparedDataset,
    coeffs: &[f64],
    lambda: f64,
    xi: &Xi,
    mut w: WeightVector,
    config: &OptimizerConfig,
    segment: usize,
    tracker: &mut Tracker<'_>,
) -> Result<(WeightVector, f64, usize), CriterionError> {
    let tol = tolerance(config, w.len());
    pin_zeros(&mut w);
    let (mut f, mut g) = nll_value_and_gradient(data, w.as_slice())?;
    let mut phi = f + separable_penalty(w.as_slice(), coeffs, lambda, xi);
    let mut l = config.l_init;
    let mut accepted_steps = 0;
    'outer: for iteration in 1..=config.max_iters {
        let upper_grad: Vec<f64> = (0..w.len())
            .map(|k| g[k] + lambda * coeffs[k] * xi.derivative(w.get(k)))
            .collect();
        check_finite(&upper_grad)?;
        let mut step = None;
        for _ in 0..=config.max_doublings {
            let trial: Vec<f64> = w
                .as_slice()
                .iter()
                .zip(&upper_grad)
                .map(|(x, gk)| x - gk / l)
                .collect();
            let candidate = project_box(&trial, w.zero_fixed());
            if candidate == w.as_slice() {
                break 'outer;
            }
            let fc = neg_log_likelihood(data, &candidate)?;
            let phic = fc + separable_penalty(&candidate, coeffs, lambda, xi);
            if phic < phi {
                step = Some((candidate, fc, phic));
                break;
            }
            l *= 2.0;
        }
        let Some((candidate, fc, phic)) = step else {
            break;
        };
        let displacement = sup_norm_diff(&candidate, w.as_slice());
        if displacement < tol {
            break;
        }
        let fixed = w.zero_fixed().to_vec();
        w = WeightVector::from_vec(candidate)?;
        for (k, &z) in fixed.iter().enumerate() {
            if z {
                w.fix_zero(k);
            }
        }
        pin_zeros(&mut w);
        f = fc;
        g = criterion::nll_gradient(data, w.as_slice())?;
        phi = phic;
        accepted_steps += 1;
        tracker.push(
            segment,
            iteration,
            phi,
            Some(f),
            Some(l),
            displacement,
            w.as_slice(),
        )?;
        l = (l / 2.0).max(config.l_floor());
    }
    Ok((w, phi, accepted_steps))
}

/// Frank-Wolfe over the box with the classical `2 / (t + 2)` step. A step
/// that would increase the objective is skipped (the next, shorter step is
/// tried instead), so accepted values never increase.
fn frank_wolfe_loop<O: Objective>(
    objective: &O,
    mut w: Vec<f64>,
    config: &OptimizerConfig,
    tracker: &mut Tracker<'_>,
) -> Result<(Vec<f64>, f64, usize), CriterionError> {
    let (mut f, mut g) = objective.value_and_gradient(&w)?;
    let mut accepted_steps = 0;
    for t in 0..config.max_iters {
        check_finite(&g)?;
        let vertex = linear_oracle(&g);
        let gap: f64 = g
            .iter()
            .zip(&w)
            .zip(&vertex)
            .map(|((gk, x), s)| gk * (x - s))
            .sum();
        if gap <= config.epsilon * f.abs() {
            break;
        }
        let gamma = 2.0 / (t as f64 + 2.0);
        let candidate: Vec<f64> = w
            .iter()
            .zip(&vertex)
            .map(|(x, s)| (x + gamma * (s - x)).clamp(0.0, 1.0))
            .collect();
        let fc = objective.value(&candidate)?;
        if fc > f {
            continue;
        }
        let displacement = sup_norm_diff(&candidate, &w);
        w = candidate;
        (f, g) = objective.value_and_gradient(&w)?;
        accepted_steps += 1;
        tracker.push(0, t + 1, f, None, None, displacement, &w)?;
    }
    Ok((w, f, accepted_steps))
}

/// Box linear minimization oracle: `0` where the gradient is positive, else `1`.
pub fn linear_oracle(grad: &[f64]) -> Vec<f64> {
    grad.iter()
        .map(|&g| if g > 0.0 { 0.0 } else { 1.0 })
        .collect()
}

fn require_continuous(spec: &RegularizerSpec) -> Result<(), CriterionError> {
    if spec.variant() != Variant::Continuous {
        return Err(CriterionError::InvalidSpec(
            "gradient methods need the continuous prior variant".into(),
        ));
    }
    Ok(())
}

fn prepare_start(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &OptimizerConfig,
    w_init: &WeightVector,
) -> Result<(), CriterionError> {
    config.validate()?;
    require_continuous(spec)?;
    if w_init.len() != data.num_variables() || spec.costs().len() != data.num_variables() {
        return Err(CriterionError::DimensionMismatch {
            expected: data.num_variables(),
            got: w_init.len(),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    method: Method,
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    final_w: WeightVector,
    tracker: Tracker<'_>,
    iterations: usize,
    objective: f64,
    first_stage: Option<FirstStageResult>,
    started: Instant,
) -> Result<OptimizerRun, CriterionError> {
    let criterion = criterion::criterion(data, final_w.as_slice(), spec)?;
    Ok(OptimizerRun {
        method,
        final_w,
        trace: tracker.trace,
        iterations,
        wall_time: started.elapsed(),
        objective,
        criterion,
        first_stage,
    })
}

/// One-stage projected gradient on the full non-convex criterion.
pub fn solve_one_stage_sg(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &OptimizerConfig,
    w_init: &WeightVector,
) -> Result<OptimizerRun, CriterionError> {
    let started = Instant::now();
    prepare_start(data, spec, config, w_init)?;
    let mut tracker = Tracker {
        data,
        spec,
        record: config.record_iterates,
        trace: Vec::new(),
    };
    let objective = Regularized { data, spec };
    let (w, f, steps) = gradient_mapping_loop(
        &objective,
        w_init.clone(),
        config,
        true,
        0.0,
        0,
        &mut tracker,
    )?;
    finish(Method::Sg, data, spec, w, tracker, steps, f, None, started)
}

/// Alternating minimization: freeze `W = sum w` in the log coupling, run
/// composite steps on the separable surrogate, refresh `W`, repeat until `W`
/// moves by less than `epsilon`.
pub fn solve_one_stage_am(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &OptimizerConfig,
    w_init: &WeightVector,
) -> Result<OptimizerRun, CriterionError> {
    let started = Instant::now();
    prepare_start(data, spec, config, w_init)?;
    let mut tracker = Tracker {
        data,
        spec,
        record: config.record_iterates,
        trace: Vec::new(),
    };
    let xi = spec.xi();
    let mut w = w_init.clone();
    let mut w_sum = w.sum();
    let mut total_steps = 0;
    let mut surrogate = f64::NAN;
    for outer in 0..config.am_max_outer {
        let coeffs = spec.frozen_coefficients(w_sum);
        let (next, phi, steps) = composite_loop(
            data,
            &coeffs,
            spec.lambda(),
            &xi,
            w,
            config,
            outer,
            &mut tracker,
        )?;
        w = next;
        surrogate = phi;
        total_steps += steps;
        let new_sum = w.sum();
        let moved = (new_sum - w_sum).abs();
        w_sum = new_sum;
        if moved < config.epsilon {
            break;
        }
    }
    finish(
        Method::Am,
        data,
        spec,
        w,
        tracker,
        total_steps,
        surrogate,
        None,
        started,
    )
}

/// First stage: minimize the convex relaxation
/// `F_N(w) + lambda sum_k (1 - log(W0 + 1) + B_k) w_k`.
pub fn solve_first_stage(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &OptimizerConfig,
    w_init: &WeightVector,
    method: FirstStage,
) -> Result<FirstStageResult, CriterionError> {
    prepare_start(data, spec, config, w_init)?;
    let mut tracker = Tracker {
        data,
        spec,
        record: config.record_iterates,
        trace: Vec::new(),
    };
    let (w_tilde, iterations) =
        first_stage_inner(data, spec, config, w_init, method, &mut tracker)?;
    Ok(FirstStageResult {
        w_tilde_sum: w_tilde.iter().sum(),
        w_tilde,
        iterations,
        trace: tracker.trace,
    })
}

fn first_stage_inner(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &OptimizerConfig,
    w_init: &WeightVector,
    method: FirstStage,
    tracker: &mut Tracker<'_>,
) -> Result<(Vec<f64>, usize), CriterionError> {
    let w0 = match config.w0_policy {
        W0Policy::InitialSum => w_init.sum(),
        W0Policy::Fixed(v) => v,
    };
    let relaxed = spec.with_variant(Variant::ConvexRelaxed { w_ref: w0 })?;
    let objective = Regularized {
        data,
        spec: &relaxed,
    };
    // The relaxation is solved from the initial weights without any mask.
    let start = WeightVector::from_vec(w_init.as_slice().to_vec())?;
    Ok(match method {
        FirstStage::Sg => {
            let (w, _, n) =
                gradient_mapping_loop(&objective, start, config, false, 0.0, 0, tracker)?;
            (w.into_vec(), n)
        }
        FirstStage::Ug => {
            let slack = 0.5 * config.epsilon;
            let (w, _, n) =
                gradient_mapping_loop(&objective, start, config, false, slack, 0, tracker)?;
            (w.into_vec(), n)
        }
        FirstStage::Cg => {
            let (w, _, n) = frank_wolfe_loop(&objective, start.into_vec(), config, tracker)?;
            (w, n)
        }
    })
}

/// Second stage on `F_N(w) + lambda sum_k (1 - log(W~ + 1) + B_k) xi(w_k)`,
/// starting from `w_tilde` with `W~ = sum w_tilde`.
pub fn solve_second_stage(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &OptimizerConfig,
    w_tilde: &WeightVector,
    method: SecondStage,
) -> Result<OptimizerRun, CriterionError> {
    let started = Instant::now();
    prepare_start(data, spec, config, w_tilde)?;
    let mut tracker = Tracker {
        data,
        spec,
        record: config.record_iterates,
        trace: Vec::new(),
    };
    let (w, phi, steps) =
        second_stage_inner(data, spec, config, w_tilde.clone(), method, 0, &mut tracker)?;
    let method = match method {
        SecondStage::Cf => Method::SgCf,
        SecondStage::Ue => Method::SgUe,
    };
    finish(method, data, spec, w, tracker, steps, phi, None, started)
}

fn second_stage_inner(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &OptimizerConfig,
    start: WeightVector,
    method: SecondStage,
    segment: usize,
    tracker: &mut Tracker<'_>,
) -> Result<(WeightVector, f64, usize), CriterionError> {
    let w_ref = start.sum();
    // validates coefficient positivity at W~
    let frozen = spec.with_variant(Variant::FrozenContinuous { w_ref })?;
    let coeffs = frozen.frozen_coefficients(w_ref);
    let xi = spec.xi();
    match method {
        SecondStage::Cf => composite_loop(
            data,
            &coeffs,
            spec.lambda(),
            &xi,
            start,
            config,
            segment,
            tracker,
        ),
        SecondStage::Ue => upper_estimator_loop(
            data,
            &coeffs,
            spec.lambda(),
            &xi,
            start,
            config,
            segment,
            tracker,
        ),
    }
}

/// Runs `config.method` from `w_init`. Two-stage methods chain the first
/// stage into the second; the reported objective is the second stage's and
/// `criterion` is the full continuous criterion at the final point.
pub fn solve(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &OptimizerConfig,
    w_init: &WeightVector,
) -> Result<OptimizerRun, CriterionError> {
    let started = Instant::now();
    let (first, second) = match config.method.stages() {
        None => {
            return match config.method {
                Method::Sg => solve_one_stage_sg(data, spec, config, w_init),
                _ => solve_one_stage_am(data, spec, config, w_init),
            }
        }
        Some(stages) => stages,
    };
    prepare_start(data, spec, config, w_init)?;
    let mut tracker = Tracker {
        data,
        spec,
        record: config.record_iterates,
        trace: Vec::new(),
    };
    let (w_tilde, first_iters) =
        first_stage_inner(data, spec, config, w_init, first, &mut tracker)?;
    let first_trace = tracker.trace.clone();
    let w_tilde_vec = WeightVector::from_vec(w_tilde.clone())?;
    let (w, phi, second_iters) =
        second_stage_inner(data, spec, config, w_tilde_vec, second, 1, &mut tracker)?;
    let first_stage = FirstStageResult {
        w_tilde_sum: w_tilde.iter().sum(),
        w_tilde,
        iterations: first_iters,
        trace: first_trace,
    };
    finish(
        config.method,
        data,
        spec,
        w,
        tracker,
        first_iters + second_iters,
        phi,
        Some(first_stage),
        started,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{grid_toy, random_prepared};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Quadratic {
        c: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn value(&self, w: &[f64]) -> Result<f64, CriterionError> {
            Ok(0.5
                * w.iter()
                    .zip(&self.c)
                    .map(|(x, c)| (x - c).powi(2))
                    .sum::<f64>())
        }

        fn value_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>), CriterionError> {
            Ok((
                self.value(w)?,
                w.iter().zip(&self.c).map(|(x, c)| x - c).collect(),
            ))
        }
    }

    fn toy_spec(data: &PreparedDataset, lambda: f64) -> RegularizerSpec {
        RegularizerSpec::new(
            lambda,
            0.95,
            1e-6,
            Variant::Continuous,
            data.costs().to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(
            project_box(&[-0.2, 0.5, 1.7], &[false; 3]),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(project_box(&[0.1, 0.9], &[false, false]), vec![0.1, 0.9]);
        assert_eq!(project_box(&[0.9], &[true]), vec![0.0]);
    }

    #[test]
    fn quadratic_mapping_is_exact_at_unit_lipschitz() {
        let q = Quadratic { c: vec![0.3, 0.7] };
        let w = [0.9, 0.1];
        let (f, g) = q.value_and_gradient(&w).unwrap();
        let s = gradient_mapping_step(&q, &w, f, &g, 1.0, &[false; 2], 0.0).unwrap();
        assert!((s.candidate[0] - 0.3).abs() < 1e-15 && (s.candidate[1] - 0.7).abs() < 1e-15);
        let s = gradient_mapping_step(&q, &w, f, &g, 2.0, &[false; 2], 0.0).unwrap();
        assert!(s.accepted);
        assert!((s.candidate[0] - 0.6).abs() < 1e-15 && (s.candidate[1] - 0.4).abs() < 1e-15);
        let s = gradient_mapping_step(&q, &w, f, &g, 1e12, &[false; 2], 0.0).unwrap();
        assert!(s.accepted);
        assert!(sup_norm_diff(&s.candidate, &w) < 1e-11);
    }

    #[test]
    fn doubling_terminates_on_toy_criterion() {
        let data = grid_toy();
        let spec = toy_spec(&data, 0.25);
        let obj = Regularized {
            data: &data,
            spec: &spec,
        };
        let w = [0.5, 0.5];
        let (f, g) = obj.value_and_gradient(&w).unwrap();
        let mut l = 1e-3;
        let mut doublings = 0;
        loop {
            let s = gradient_mapping_step(&obj, &w, f, &g, l, &[false; 2], 0.0).unwrap();
            if s.accepted {
                break;
            }
            l *= 2.0;
            doublings += 1;
        }
        assert!(doublings <= 60);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let q = Quadratic { c: vec![0.0] };
        assert_eq!(
            gradient_mapping_step(&q, &[0.5], 0.0, &[f64::NAN], 1.0, &[false], 0.0),
            Err(CriterionError::NonFiniteGradient)
        );
    }

    #[test]
    fn linear_oracle_sign_rule() {
        assert_eq!(linear_oracle(&[1.0, -1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("sg.xx".parse::<Method>().is_err());
    }

    fn grid_min(data: &PreparedDataset, spec: &RegularizerSpec) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..=20 {
            for b in 0..=20 {
                let w = [a as f64 * 0.05, b as f64 * 0.05];
                best = best.min(criterion::criterion(data, &w, spec).unwrap().total);
            }
        }
        best
    }

    #[test]
    fn huge_lambda_gives_null_model() {
        let data = grid_toy();
        let spec = toy_spec(&data, 1e6);
        let run = solve_one_stage_sg(
            &data,
            &spec,
            &OptimizerConfig::default(),
            &WeightVector::uniform(2, 0.5),
        )
        .unwrap();
        assert_eq!(run.final_w.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn no_regularization_recovers_calibrated_weight() {
        let p = [0.95f64.ln(), 0.05f64.ln()];
        let q = [0.05f64.ln(), 0.95f64.ln()];
        let mut cache = Vec::new();
        let mut y = Vec::new();
        for n in 0..40 {
            let c = n % 2;
            y.push(c);
            cache.extend_from_slice(if (c == 0) ^ (n % 10 == 0) { &p } else { &q });
        }
        let data = PreparedDataset::from_parts(vec![0.5f64.ln(); 2], cache, y, vec![2.0]).unwrap();
        let spec = toy_spec(&data, 0.0);
        assert!(
            criterion::criterion(&data, &[1.0], &spec).unwrap().total
                < criterion::criterion(&data, &[0.0], &spec).unwrap().total
        );
        let run = solve_one_stage_sg(
            &data,
            &spec,
            &OptimizerConfig::default(),
            &WeightVector::uniform(1, 0.5),
        )
        .unwrap();
        // 10% of instances are flipped, so the calibrated log-odds are ln 9
        // against the table's ln 19
        let expected = 9f64.ln() / 19f64.ln();
        assert!(
            (run.final_w.get(0) - expected).abs() < 0.03,
            "{:?}",
            run.final_w
        );
    }

    #[test]
    fn one_stage_sg_reaches_grid_minimum() {
        let data = grid_toy();
        let spec = toy_spec(&data, 0.25);
        let run = solve_one_stage_sg(
            &data,
            &spec,
            &OptimizerConfig::default(),
            &WeightVector::uniform(2, 0.5),
        )
        .unwrap();
        assert!(run.criterion.total <= grid_min(&data, &spec) + 1e-3);
    }

    #[test]
    fn am_close_to_sg() {
        let data = grid_toy();
        let spec = toy_spec(&data, 0.25);
        let init = WeightVector::uniform(2, 0.5);
        let sg = solve_one_stage_sg(&data, &spec, &OptimizerConfig::default(), &init).unwrap();
        let am = solve_one_stage_am(&data, &spec, &OptimizerConfig::default(), &init).unwrap();
        assert!(am.criterion.total <= sg.criterion.total * 1.05);
    }

    #[test]
    fn am_surrogate_is_monotone_within_each_outer_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = random_prepared(&mut rng, 60, 5, 3);
        let spec = toy_spec(&data, 0.5);
        let run = solve_one_stage_am(
            &data,
            &spec,
            &OptimizerConfig::default(),
            &WeightVector::uniform(5, 0.5),
        )
        .unwrap();
        for pair in run.trace.windows(2) {
            if pair[0].segment == pair[1].segment {
                assert!(pair[1].objective <= pair[0].objective);
            }
        }
    }

    #[test]
    fn first_stage_methods_agree() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = random_prepared(&mut rng, 40, 3, 2);
            for lambda in [0.0, 0.25] {
                let spec = toy_spec(&data, lambda);
                let cfg = OptimizerConfig {
                    epsilon: 1e-4,
                    max_iters: 5000,
                    ..Default::default()
                };
                let init = WeightVector::uniform(3, 0.5);
                let relaxed = spec
                    .with_variant(Variant::ConvexRelaxed { w_ref: 1.5 })
                    .unwrap();
                let values: Vec<f64> = [FirstStage::Sg, FirstStage::Ug, FirstStage::Cg]
                    .iter()
                    .map(|&m| {
                        let r = solve_first_stage(&data, &spec, &cfg, &init, m).unwrap();
                        criterion::criterion(&data, &r.w_tilde, &relaxed)
                            .unwrap()
                            .total
                    })
                    .collect();
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if lambda == 0.0 {
                    assert!(hi - lo <= 1e-2, "{values:?}");
                } else {
                    assert!(hi <= lo * 1.02, "{values:?}");
                }
            }
        }
    }

    #[test]
    fn prox_special_cases() {
        let xi = Xi::new(0.95, 1e-6);
        assert_eq!(prox_1d(0.4, 0.0, 2.0, &xi), 0.4);
        assert_eq!(prox_1d(1.4, 0.0, 2.0, &xi), 1.0);
        assert_eq!(prox_1d(-0.3, 0.5, 2.0, &xi), 0.0);
        assert_eq!(prox_1d(0.0, 0.5, 2.0, &xi), 0.0);
    }

    #[test]
    fn prox_matches_coarse_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let xi = Xi::new(rng.random_range(0.6..1.0), 1e-6);
            let v = rng.random_range(-0.5..1.5);
            let c = rng.random_range(0.01..3.0);
            let l = rng.random_range(0.5..30.0);
            let t = prox_1d(v, c, l, &xi);
            let phi = |t: f64| 0.5 * l * (t - v).powi(2) + c * xi.value(t);
            let grid_best = (0..=100_000)
                .map(|i| i as f64 / 100_000.0)
                .map(phi)
                .fold(f64::INFINITY, f64::min);
            assert!(phi(t) <= grid_best + 1e-9);
        }
    }

    #[test]
    fn second_stage_stops_at_stationary_point() {
        let data = grid_toy();
        let spec = toy_spec(&data, 0.25);
        let cfg = OptimizerConfig::default();
        for stage in [SecondStage::Cf, SecondStage::Ue] {
            let first =
                solve_second_stage(&data, &spec, &cfg, &WeightVector::uniform(2, 0.5), stage)
                    .unwrap();
            // the null point is stationary once both weights are pinned
            let again =
                solve_second_stage(&data, &spec, &cfg, &WeightVector::zeros(2), stage).unwrap();
            assert_eq!(again.iterations, 0);
            assert!(first
                .final_w
                .as_slice()
                .iter()
                .all(|w| (0.0..=1.0).contains(w)));
        }
    }

    #[test]
    fn all_methods_are_feasible_and_improve_on_start() {
        let data = grid_toy();
        let spec = toy_spec(&data, 0.25);
        let init = WeightVector::uniform(2, 0.5);
        let start = criterion::criterion(&data, init.as_slice(), &spec)
            .unwrap()
            .total;
        for m in Method::ALL {
            let run = solve(&data, &spec, &OptimizerConfig::with_method(m), &init).unwrap();
            assert!(run
                .final_w
                .as_slice()
                .iter()
                .all(|w| (0.0..=1.0).contains(w)));
            assert!(run.criterion.total <= start, "{m}");
        }
    }

    #[test]
    fn composition_matches_chained_calls() {
        let data = grid_toy();
        let spec = toy_spec(&data, 0.25);
        let init = WeightVector::uniform(2, 0.5);
        let cfg = OptimizerConfig::with_method(Method::SgCf);
        let run = solve(&data, &spec, &cfg, &init).unwrap();
        let first = solve_first_stage(&data, &spec, &cfg, &init, FirstStage::Sg).unwrap();
        let second = solve_second_stage(
            &data,
            &spec,
            &cfg,
            &WeightVector::from_vec(first.w_tilde.clone()).unwrap(),
            SecondStage::Cf,
        )
        .unwrap();
        assert_eq!(run.final_w.as_slice(), second.final_w.as_slice());
        assert_eq!(run.objective, second.objective);
        assert_eq!(run.first_stage.unwrap().w_tilde, first.w_tilde);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = random_prepared(&mut rng, 50, 4, 3);
        let spec = toy_spec(&data, 0.25);
        let init = WeightVector::uniform(4, 0.5);
        for m in Method::ALL {
            let cfg = OptimizerConfig::with_method(m);
            let a = solve(&data, &spec, &cfg, &init).unwrap();
            let b = solve(&data, &spec, &cfg, &init).unwrap();
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.final_w, b.final_w);
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let data = grid_toy();
        let spec = toy_spec(&data, 0.25);
        let run = solve(
            &data,
            &spec,
            &OptimizerConfig::default(),
            &WeightVector::uniform(2, 0.5),
        )
        .unwrap();
        let mut buf = Vec::new();
        run.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,objective,criterion,L,displacement,segment\n"));
        assert_eq!(text.lines().count(), run.trace.len() + 1);
    }
}
