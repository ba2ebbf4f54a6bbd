//! Fixtures shared by the benchmarks.

use wnb_core::prep::{prepare, PrepConfig};
use wnb_core::synth::informative_and_noise;
use wnb_core::{PreparedDataset, RegularizerSpec, Variant};

/// `n` instances, 10 informative and `k - 10` noise variables, discretized
/// with the default preparation.
pub fn fixture(n: usize, k: usize) -> PreparedDataset {
    let informative = k.min(10);
    let raw = informative_and_noise(42, n, informative, k - informative, 1.0);
    let rows: Vec<usize> = (0..n).collect();
    let prep = prepare(&raw, &rows, &PrepConfig::default(), None).expect("synthetic data prepares");
    prep.encode(&raw, &rows)
}

pub fn spec(data: &PreparedDataset, variant: Variant) -> RegularizerSpec {
    RegularizerSpec::with_defaults(variant, data.costs().to_vec()).expect("default costs are valid")
}
