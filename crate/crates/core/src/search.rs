//! Combinatorial weight search driven by the incremental evaluator.
//!
//! * SNB: multi-start fast forward-backward selection of Boolean subsets,
//!   with the subsets accepted along every trajectory averaged into
//!   continuous weights.
//! * FNB: a single forward-backward search where each move adds or removes a
//!   dyadic increment `1 / 2^i`, halving the increment while it stays above
//!   `1 / N`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{IncrementalEvaluator, RegularizerSpec, Variant, WeightVector};
use crate::error::CriterionError;
use crate::prep::PreparedDataset;

/// How SNB combines the subsets accepted along its trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Uniform,
    /// Subsets weighted by their compression gain over the null model.
    CompressionWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub seed: u64,
    /// SNB starts; `None` means `ceil(ln(K N))`.
    pub starts: Option<usize>,
    /// Forward-backward cycles per SNB start.
    pub max_repeats: usize,
    /// Cycles per FNB increment; `None` means `1 + ceil(ln K / ln N)`.
    pub fnb_repeats: Option<usize>,
    pub averaging: Averaging,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            starts: None,
            max_repeats: 2,
            fnb_repeats: None,
            averaging: Averaging::Uniform,
        }
    }
}

impl SearchConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn snb_starts(&self, k: usize, n: usize) -> usize {
        self.starts
            .unwrap_or_else(|| ((k as f64) * (n as f64)).ln().ceil().max(1.0) as usize)
            .max(1)
    }

    pub fn fnb_repeats_for(&self, k: usize, n: usize) -> usize {
        self.fnb_repeats.unwrap_or_else(|| {
            if n < 2 || k < 2 {
                1
            } else {
                1 + ((k as f64).ln() / (n as f64).ln()).ceil() as usize
            }
        })
    }
}

/// A subset accepted after an improving add or drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedSubset {
    pub variables: Vec<usize>,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Averaged weights for SNB; the search point itself otherwise.
    pub final_w: WeightVector,
    /// Criterion of `best_w`.
    pub criterion: f64,
    /// Best point visited: a Boolean subset for SNB, equal to `final_w` for FNB.
    pub best_w: WeightVector,
    /// Empty for FNB.
    pub accepted_subsets: Vec<AcceptedSubset>,
    /// Number of single-weight criterion evaluations.
    pub evaluations: usize,
    /// FNB weights are multiples of `2^-increment_exponent`.
    pub increment_exponent: Option<u32>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn pass_rng(seed: u64, start: u64, pass: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(splitmix(seed) ^ start) ^ pass))
}

fn shuffled(k: usize, seed: u64, start: u64, pass: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut pass_rng(seed, start, pass));
    order
}

fn require_variant(spec: &RegularizerSpec, want: Variant) -> Result<(), CriterionError> {
    if spec.variant() != want {
        return Err(CriterionError::InvalidSpec(format!(
            "search needs the {want:?} prior, got {:?}",
            spec.variant()
        )));
    }
    Ok(())
}

fn subset_of(w: &[f64]) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(k, _)| k)
        .collect()
}

/// One forward-backward selection run from the empty subset. `start` selects
/// the shuffle stream.
pub fn ffwbw_boolean(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &SearchConfig,
    start: u64,
) -> Result<SearchResult, CriterionError> {
    require_variant(spec, Variant::Boolean)?;
    let k = data.num_variables();
    let mut ev = IncrementalEvaluator::new(data, spec, &vec![0.0; k])?;
    let mut accepted = Vec::new();
    let mut evaluations = 0;
    let mut pass = 0;
    for _ in 0..config.max_repeats {
        let mut moves = 0;
        for (from, to) in [(0.0, 1.0), (1.0, 0.0)] {
            for var in shuffled(k, config.seed, start, pass) {
                if ev.weights()[var] != from {
                    continue;
                }
                let cand = ev.evaluate_change(var, to)?;
                evaluations += 1;
                if cand.total < ev.current().total {
                    let now = ev.update_weight(var, to)?;
                    moves += 1;
                    accepted.push(AcceptedSubset {
                        variables: subset_of(ev.weights()),
                        criterion: now.total,
                    });
                }
            }
            ev.resync()?;
            pass += 1;
        }
        if moves == 0 {
            break;
        }
    }
    let best_w = WeightVector::from_vec(ev.weights().to_vec())?;
    Ok(SearchResult {
        final_w: best_w.clone(),
        criterion: ev.current().total,
        best_w,
        accepted_subsets: accepted,
        evaluations,
        increment_exponent: None,
    })
}

/// Averages the indicator vectors of `subsets`. Compression weighting uses
/// `max(0, 1 - criterion / null_criterion)` per subset and falls back to
/// uniform when every gain is zero.
pub fn average_subsets(
    k: usize,
    subsets: &[AcceptedSubset],
    mode: Averaging,
    null_criterion: f64,
) -> Vec<f64> {
    let mut weights: Vec<f64> = match mode {
        Averaging::Uniform => vec![1.0; subsets.len()],
        Averaging::CompressionWeighted => subsets
            .iter()
            .map(|s| (1.0 - s.criterion / null_criterion).max(0.0))
            .collect(),
    };
    if weights.iter().sum::<f64>() <= 0.0 {
        weights = vec![1.0; subsets.len()];
    }
    let total: f64 = weights.iter().sum();
    let mut avg = vec![0.0; k];
    if subsets.is_empty() {
        return avg;
    }
    for (s, a) in subsets.iter().zip(&weights) {
        for &v in &s.variables {
            avg[v] += a;
        }
    }
    for x in &mut avg {
        *x = (*x / total).clamp(0.0, 1.0);
    }
    avg
}

/// Multi-start selective naive Bayes. Starts run in parallel and are merged in
/// start order; the best subset is the lowest criterion (earliest start on
/// ties).
pub fn snb_train(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &SearchConfig,
) -> Result<SearchResult, CriterionError> {
    require_variant(spec, Variant::Boolean)?;
    let k = data.num_variables();
    let starts = config.snb_starts(k, data.num_instances());
    let runs: Vec<SearchResult> = (0..starts as u64)
        .into_par_iter()
        .map(|s| ffwbw_boolean(data, spec, config, s))
        .collect::<Result<_, _>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.criterion < runs[best].criterion {
            best = i;
        }
    }
    let null = IncrementalEvaluator::new(data, spec, &vec![0.0; k])?
        .current()
        .total;
    let accepted: Vec<AcceptedSubset> = runs
        .iter()
        .flat_map(|r| r.accepted_subsets.iter().cloned())
        .collect();
    let averaged = average_subsets(k, &accepted, config.averaging, null);
    Ok(SearchResult {
        final_w: WeightVector::from_vec(averaged)?,
        criterion: runs[best].criterion,
        best_w: runs[best].best_w.clone(),
        accepted_subsets: accepted,
        evaluations: runs.iter().map(|r| r.evaluations).sum(),
        increment_exponent: None,
    })
}

/// Increment exponents `i = 1, 2, ...` with `1 / 2^i > 1 / N`.
pub fn fnb_schedule(n: usize) -> Vec<u32> {
    (1..63u32).take_while(|&i| (1u64 << i) < n as u64).collect()
}

/// Fractional naive Bayes: forward-backward moves of `+-1/2^i` on each
/// weight, accepted only when the fractional-prior criterion strictly
/// decreases. Weights are held as integer numerators over `2^I` where `I` is
/// the finest exponent of the schedule.
pub fn fnb_train(
    data: &PreparedDataset,
    spec: &RegularizerSpec,
    config: &SearchConfig,
) -> Result<SearchResult, CriterionError> {
    require_variant(spec, Variant::Fractional)?;
    let k = data.num_variables();
    let n = data.num_instances();
    let schedule = fnb_schedule(n);
    let finest = schedule.last().copied().unwrap_or(0);
    let denom: u64 = 1 << finest;
    let repeats = config.fnb_repeats_for(k, n);
    let mut numer = vec![0u64; k];
    let mut ev = IncrementalEvaluator::new(data, spec, &vec![0.0; k])?;
    let mut evaluations = 0;
    let mut pass = 0;
    for &i in &schedule {
        let step = 1u64 << (finest - i);
        for _ in 0..repeats {
            let mut moves = 0;
            for forward in [true, false] {
                for var in shuffled(k, config.seed, 0, pass) {
                    let old = numer[var];
                    let new = if forward {
                        (old + step).min(denom)
                    } else {
                        old.saturating_sub(step)
                    };
                    if new == old {
                        continue;
                    }
                    let value = new as f64 / denom as f64;
                    let cand = ev.evaluate_change(var, value)?;
                    evaluations += 1;
                    if cand.total < ev.current().total {
                        ev.update_weight(var, value)?;
                        numer[var] = new;
                        moves += 1;
                    }
                }
                ev.resync()?;
                pass += 1;
            }
            // with nothing accepted every later cycle sees the same state
            if moves == 0 {
                break;
            }
        }
    }
    let w = WeightVector::from_vec(numer.iter().map(|&m| m as f64 / denom as f64).collect())?;
    Ok(SearchResult {
        final_w: w.clone(),
        criterion: ev.current().total,
        best_w: w,
        accepted_subsets: Vec::new(),
        evaluations,
        increment_exponent: Some(finest),
    })
}

/// Starting point for gradient refinement from a search result.
pub fn init_for_gradient(result: &SearchResult) -> WeightVector {
    result.final_w.clone()
}

/// The uniform start `w = 0.5` on every component.
pub fn uniform_init(k: usize) -> WeightVector {
    WeightVector::uniform(k, 0.5)
}
