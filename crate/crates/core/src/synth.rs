//! Synthetic datasets for tests, benchmarks and examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::prep::{Cell, PreparedDataset, RawColumn, RawDataset, VariableKind};

fn random_simplex<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A random but internally consistent prepared dataset: every variable has
/// 2 to 4 parts with random class-conditional distributions, and instance
/// parts are drawn from the conditional of the instance's class. Costs lie in
/// `[2, 5)`.
pub fn random_prepared<R: Rng>(rng: &mut R, n: usize, k: usize, j: usize) -> PreparedDataset {
    let prior = random_simplex(rng, j);
    // tables[k][class][part]
    let tables: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|_| {
            let parts = rng.random_range(2..=4);
            (0..j).map(|_| random_simplex(rng, parts)).collect()
        })
        .collect();
    let mut cache = Vec::with_capacity(n * k * j);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let c = sample_index(rng, &prior);
        y.push(c);
        for table in &tables {
            let part = sample_index(rng, &table[c]);
            for class_table in table {
                cache.push(class_table[part].ln());
            }
        }
    }
    let costs = (0..k).map(|_| rng.random_range(2.0..5.0)).collect();
    PreparedDataset::from_parts(prior.iter().map(|p| p.ln()).collect(), cache, y, costs)
        .expect("synthetic tables are valid")
}

/// Binary problem with `informative` Gaussian variables whose class means are
/// `+-shift / 2`, followed by `noise` standard Gaussian variables independent
/// of the class. Classes alternate, so the target is balanced.
pub fn informative_and_noise(
    seed: u64,
    n: usize,
    informative: usize,
    noise: usize,
    shift: f64,
) -> RawDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let targets: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let mut variables = Vec::with_capacity(informative + noise);
    for v in 0..informative + noise {
        let cells = targets
            .iter()
            .map(|&c| {
                let mean = if v < informative {
                    if c == 1 {
                        shift / 2.0
                    } else {
                        -shift / 2.0
                    }
                } else {
                    0.0
                };
                Cell::Num(mean + normal.sample(&mut rng))
            })
            .collect();
        let name = if v < informative {
            format!("info_{v}")
        } else {
            format!("noise_{}", v - informative)
        };
        variables.push(RawColumn {
            name,
            kind: VariableKind::Numerical,
            cells,
        });
    }
    RawDataset {
        variables,
        target_name: "class".into(),
        class_labels: vec!["neg".into(), "pos".into()],
        targets,
    }
}

/// Appends `copies` exact duplicates of variable `source`.
pub fn with_duplicates(mut raw: RawDataset, source: usize, copies: usize) -> RawDataset {
    for c in 0..copies {
        let mut col = raw.variables[source].clone();
        col.name = format!("{}_copy{}", col.name, c + 1);
        raw.variables.push(col);
    }
    raw
}

/// Fixed toy instance with N = 10, K = 2, J = 2: the first variable is
/// informative, the second weakly so. Costs are 2.0 and 2.5.
pub fn grid_toy() -> PreparedDataset {
    let p = |x: f64| x.ln();
    // variable tables [part][class]
    let v1 = [[p(0.7), p(0.2)], [p(0.3), p(0.8)]];
    let v2 = [[p(0.55), p(0.4)], [p(0.45), p(0.6)]];
    let rows: [(usize, usize, usize); 10] = [
        (0, 0, 0),
        (0, 0, 1),
        (0, 0, 0),
        (0, 1, 0),
        (0, 0, 1),
        (1, 1, 1),
        (1, 1, 0),
        (1, 1, 1),
        (1, 0, 1),
        (1, 1, 0),
    ];
    let mut cache = Vec::new();
    let mut y = Vec::new();
    for (class, part1, part2) in rows {
        y.push(class);
        cache.extend_from_slice(&v1[part1]);
        cache.extend_from_slice(&v2[part2]);
    }
    PreparedDataset::from_parts(vec![p(0.5), p(0.5)], cache, y, vec![2.0, 2.5])
        .expect("toy tables are valid")
}
