//! Tabular ingestion and univariate preparation.
//!
//! Raw CSV columns are typed (numerical when every non-missing cell parses as a
//! finite number, categorical otherwise), each variable is partitioned into
//! parts (equal-frequency bins or frequent-value groups), and Laplace-smoothed
//! conditional log-probabilities `log p(part | class)` are estimated on the
//! training rows only. [`Preparation::encode`] then produces the
//! [`PreparedDataset`] cache consumed by every criterion.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// CSV parsing options.
#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub delimiter: u8,
    /// Cell contents (after trimming) treated as missing.
    pub missing_markers: Vec<String>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            missing_markers: vec![String::new(), "?".to_string()],
        }
    }
}

impl ParseOptions {
    fn is_missing(&self, cell: &str) -> bool {
        self.missing_markers.iter().any(|m| m == cell)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Numerical,
    Categorical,
}

/// One typed cell of an input variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Num(f64),
    Cat(String),
}

impl Cell {
    /// Parses a raw (already missing-filtered) string for a variable of the given kind.
    pub fn parse(raw: Option<&str>, kind: VariableKind) -> Result<Cell, String> {
        match raw {
            None => Ok(Cell::Missing),
            Some(s) => match kind {
                VariableKind::Categorical => Ok(Cell::Cat(s.to_string())),
                VariableKind::Numerical => match s.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(Cell::Num(x)),
                    _ => Err(s.to_string()),
                },
            },
        }
    }
}

/// A header plus string rows, with missing markers already mapped to `None`.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Reads a delimited table. An empty input yields an empty table.
pub fn read_table<R: Read>(reader: R, options: &ParseOptions) -> Result<Table, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(
            record
                .iter()
                .map(|c| {
                    if options.is_missing(c) {
                        None
                    } else {
                        Some(c.to_string())
                    }
                })
                .collect(),
        );
    }
    Ok(Table { headers, rows })
}

pub fn read_table_path(path: &Path, options: &ParseOptions) -> Result<Table, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_table(file, options)
}

/// An input variable column.
#[derive(Debug, Clone)]
pub struct RawColumn {
    pub name: String,
    pub kind: VariableKind,
    pub cells: Vec<Cell>,
}

impl RawColumn {
    pub fn missing_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c, Cell::Missing))
            .count()
    }
}

/// Typed input variables plus an encoded categorical target.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub variables: Vec<RawColumn>,
    pub target_name: String,
    /// Distinct target labels, sorted; class index `j` refers to `class_labels[j]`.
    pub class_labels: Vec<String>,
    pub targets: Vec<usize>,
}

impl RawDataset {
    pub fn num_instances(&self) -> usize {
        self.targets.len()
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Builds a dataset from a parsed table, inferring variable kinds.
    pub fn from_table(table: &Table, target_name: &str) -> Result<Self, DataError> {
        let target_col = table
            .column_index(target_name)
            .ok_or_else(|| DataError::MissingTarget(target_name.to_string()))?;
        if table.rows.is_empty() {
            return Err(DataError::NoRows);
        }
        let mut labels = Vec::with_capacity(table.rows.len());
        for (row, r) in table.rows.iter().enumerate() {
            match &r[target_col] {
                Some(l) => labels.push(l.clone()),
                None => return Err(DataError::MissingLabel { row }),
            }
        }
        let mut class_labels: Vec<String> = labels.clone();
        class_labels.sort();
        class_labels.dedup();
        if class_labels.len() < 2 {
            return Err(DataError::DegenerateTarget(target_name.to_string()));
        }
        let targets = labels
            .iter()
            .map(|l| class_labels.binary_search(l).expect("label in label set"))
            .collect();

        let mut variables = Vec::new();
        for (c, name) in table.headers.iter().enumerate() {
            if c == target_col {
                continue;
            }
            let numeric = table.rows.iter().all(|r| match &r[c] {
                None => true,
                Some(s) => s.parse::<f64>().map(f64::is_finite).unwrap_or(false),
            });
            let kind = if numeric {
                VariableKind::Numerical
            } else {
                VariableKind::Categorical
            };
            let cells = table
                .rows
                .iter()
                .map(|r| Cell::parse(r[c].as_deref(), kind).expect("kind inferred from cells"))
                .collect();
            variables.push(RawColumn {
                name: name.clone(),
                kind,
                cells,
            });
        }
        Ok(Self {
            variables,
            target_name: target_name.to_string(),
            class_labels,
            targets,
        })
    }

    /// Restricts the dataset to the given rows (in that order).
    pub fn subset(&self, rows: &[usize]) -> RawDataset {
        RawDataset {
            variables: self
                .variables
                .iter()
                .map(|v| RawColumn {
                    name: v.name.clone(),
                    kind: v.kind,
                    cells: rows.iter().map(|&r| v.cells[r].clone()).collect(),
                })
                .collect(),
            target_name: self.target_name.clone(),
            class_labels: self.class_labels.clone(),
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
        }
    }

    /// The cells of instance `n` across all variables.
    pub fn instance(&self, n: usize) -> Vec<Cell> {
        self.variables.iter().map(|v| v.cells[n].clone()).collect()
    }
}

/// Loads a CSV file with a header row into a [`RawDataset`].
pub fn load_csv(
    path: &Path,
    target_name: &str,
    options: &ParseOptions,
) -> Result<RawDataset, DataError> {
    let table = read_table_path(path, options)?;
    RawDataset::from_table(&table, target_name)
}

/// Preparation settings. `None` fields take data-dependent defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepConfig {
    /// Maximum number of equal-frequency bins; default `min(10, floor(sqrt(N)))`.
    pub max_parts: Option<usize>,
    /// Minimum count for a categorical value to keep its own group; default `max(2, N / 100)`.
    pub group_threshold: Option<usize>,
    pub pseudo_count: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            max_parts: None,
            group_threshold: None,
            pseudo_count: 1.0,
        }
    }
}

impl PrepConfig {
    pub fn max_parts_for(&self, n: usize) -> usize {
        self.max_parts
            .unwrap_or_else(|| 10.min((n as f64).sqrt().floor() as usize))
            .max(1)
    }

    pub fn group_threshold_for(&self, n: usize) -> usize {
        self.group_threshold.unwrap_or_else(|| 2.max(n / 100))
    }

    fn validate(&self) -> Result<(), DataError> {
        if !(self.pseudo_count > 0.0 && self.pseudo_count.is_finite()) {
            return Err(DataError::Config(format!(
                "pseudo_count must be positive, got {}",
                self.pseudo_count
            )));
        }
        if self.max_parts == Some(0) {
            return Err(DataError::Config("max_parts must be at least 1".into()));
        }
        Ok(())
    }
}

/// How a variable's domain is split into parts.
///
/// Part order: numerical value bins `0..=cut_points.len()`, then the missing
/// part; categorical groups in sorted order, then the pooled "other" group,
/// then the missing part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Partition {
    Numerical {
        /// Bin `i` is `(cut[i-1], cut[i]]`; the outer bins are unbounded.
        cut_points: Vec<f64>,
        missing_part: bool,
        /// Part used for cells with no part of their own.
        fallback: usize,
    },
    Categorical {
        groups: Vec<String>,
        other_group: bool,
        missing_part: bool,
        fallback: usize,
    },
}

impl Partition {
    pub fn num_parts(&self) -> usize {
        match self {
            Partition::Numerical {
                cut_points,
                missing_part,
                ..
            } => cut_points.len() + 1 + usize::from(*missing_part),
            Partition::Categorical {
                groups,
                other_group,
                missing_part,
                ..
            } => groups.len() + usize::from(*other_group) + usize::from(*missing_part),
        }
    }

    fn fallback(&self) -> usize {
        match self {
            Partition::Numerical { fallback, .. } | Partition::Categorical { fallback, .. } => {
                *fallback
            }
        }
    }

    /// Maps a cell to its part. Total: unseen categories go to the "other"
    /// group, out-of-range numbers land in the outer bins, and anything else
    /// without a dedicated part uses the fallback part.
    pub fn part_of(&self, cell: &Cell) -> usize {
        match (self, cell) {
            (
                Partition::Numerical {
                    cut_points,
                    missing_part,
                    ..
                },
                Cell::Missing,
            ) if *missing_part => cut_points.len() + 1,
            (Partition::Numerical { cut_points, .. }, Cell::Num(x)) => {
                cut_points.partition_point(|c| c < x)
            }
            (
                Partition::Categorical {
                    groups,
                    other_group,
                    missing_part,
                    ..
                },
                Cell::Missing,
            ) if *missing_part => groups.len() + usize::from(*other_group),
            (
                Partition::Categorical {
                    groups,
                    other_group,
                    ..
                },
                Cell::Cat(s),
            ) => match groups.binary_search(s) {
                Ok(i) => i,
                Err(_) if *other_group => groups.len(),
                Err(_) => self.fallback(),
            },
            _ => self.fallback(),
        }
    }
}

/// Partition and class-conditional estimates for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariablePreparation {
    pub name: String,
    pub kind: VariableKind,
    pub partition: Partition,
    /// Training counts `[part][class]`.
    pub counts: Vec<Vec<usize>>,
    /// `log p(part | class)`, shape `[part][class]`.
    pub cond_log_prob: Vec<Vec<f64>>,
    /// Prior cost `B(X_k)` in nats.
    pub cost: f64,
}

impl VariablePreparation {
    pub fn num_parts(&self) -> usize {
        self.partition.num_parts()
    }
}

/// Default variable cost: `log K` for an equiprobable selection among `K`
/// variables plus `log(parts)` for the partition.
pub fn default_cost(num_variables: usize, num_parts: usize) -> f64 {
    (num_variables.max(1) as f64).ln() + (num_parts.max(1) as f64).ln()
}

fn equal_frequency_cuts(sorted: &[f64], max_parts: usize) -> Vec<f64> {
    let m = sorted.len();
    let parts = max_parts.min(m);
    let mut cuts: Vec<f64> = Vec::new();
    for i in 1..parts {
        let q = i * m / parts;
        // snap the quantile position to the nearest boundary of its tie run
        let v = sorted[q];
        let lower = sorted.partition_point(|x| *x < v);
        let upper = sorted.partition_point(|x| *x <= v);
        let boundary = match (lower > 0, upper < m) {
            (true, true) if upper - q < q - lower => upper,
            (true, _) => lower,
            (false, true) => upper,
            (false, false) => continue,
        };
        let (lo, hi) = (sorted[boundary - 1], sorted[boundary]);
        let mid = lo + (hi - lo) / 2.0;
        let cut = if mid < hi { mid } else { lo };
        if cuts.last().is_none_or(|&last| cut > last) {
            cuts.push(cut);
        }
    }
    cuts
}

fn largest_part(counts: &[Vec<usize>]) -> usize {
    let mut best = 0;
    let mut best_total = 0;
    for (i, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total > best_total {
            best = i;
            best_total = total;
        }
    }
    best
}

/// Partitions variable `k` using only `rows` and estimates smoothed
/// conditional log-probabilities. The cost is set to [`default_cost`].
pub fn prepare_variable(
    raw: &RawDataset,
    k: usize,
    rows: &[usize],
    config: &PrepConfig,
) -> VariablePreparation {
    let column = &raw.variables[k];
    let n = rows.len();
    let j_count = raw.num_classes();
    let has_missing = rows
        .iter()
        .any(|&r| matches!(column.cells[r], Cell::Missing));

    let mut partition = match column.kind {
        VariableKind::Numerical => {
            let mut values: Vec<f64> = rows
                .iter()
                .filter_map(|&r| match column.cells[r] {
                    Cell::Num(x) => Some(x),
                    _ => None,
                })
                .collect();
            values.sort_by(f64::total_cmp);
            Partition::Numerical {
                cut_points: equal_frequency_cuts(&values, config.max_parts_for(n)),
                missing_part: has_missing,
                fallback: 0,
            }
        }
        VariableKind::Categorical => {
            let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
            for &r in rows {
                if let Cell::Cat(s) = &column.cells[r] {
                    *freq.entry(s.as_str()).or_default() += 1;
                }
            }
            let threshold = config.group_threshold_for(n);
            let groups: Vec<String> = freq
                .iter()
                .filter(|(_, &c)| c >= threshold)
                .map(|(s, _)| s.to_string())
                .collect();
            let other_group = freq.values().any(|&c| c < threshold);
            Partition::Categorical {
                groups,
                other_group,
                missing_part: has_missing,
                fallback: 0,
            }
        }
    };

    let parts = partition.num_parts();
    let mut counts = vec![vec![0usize; j_count]; parts];
    let mut class_counts = vec![0usize; j_count];
    for &r in rows {
        let part = partition.part_of(&column.cells[r]);
        counts[part][raw.targets[r]] += 1;
        class_counts[raw.targets[r]] += 1;
    }
    let fallback = largest_part(&counts);
    match &mut partition {
        Partition::Numerical { fallback: f, .. } | Partition::Categorical { fallback: f, .. } => {
            *f = fallback
        }
    }

    let pc = config.pseudo_count;
    let cond_log_prob = counts
        .iter()
        .map(|row| {
            row.iter()
                .zip(&class_counts)
                .map(|(&c, &total)| ((c as f64 + pc) / (total as f64 + pc * parts as f64)).ln())
                .collect()
        })
        .collect();

    VariablePreparation {
        name: column.name.clone(),
        kind: column.kind,
        partition,
        counts,
        cond_log_prob,
        cost: default_cost(raw.num_variables(), parts),
    }
}

/// Per-variable cost overrides read from a two-column CSV `(variable_name, cost)`.
#[derive(Debug, Clone, Default)]
pub struct CostOverrides {
    costs: HashMap<String, f64>,
}

impl CostOverrides {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut costs = HashMap::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let name = record.get(0).unwrap_or_default().to_string();
            let value = record.get(1).unwrap_or_default();
            match value.parse::<f64>() {
                Ok(c) if c.is_finite() && c >= 0.0 => {
                    costs.insert(name, c);
                }
                // A non-numeric first row is a header.
                Err(_) if i == 0 => {}
                _ => {
                    return Err(DataError::InvalidCost {
                        name,
                        value: value.to_string(),
                    })
                }
            }
        }
        Ok(Self { costs })
    }

    pub fn from_path(path: &Path) -> Result<Self, DataError> {
        let file = File::open(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn insert(&mut self, name: impl Into<String>, cost: f64) -> Result<(), DataError> {
        let name = name.into();
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(DataError::InvalidCost {
                name,
                value: cost.to_string(),
            });
        }
        self.costs.insert(name, cost);
        Ok(())
    }

    /// Fails if any override names a variable absent from `raw`.
    pub fn validate(&self, raw: &RawDataset) -> Result<(), DataError> {
        let mut names: Vec<&String> = self.costs.keys().collect();
        names.sort();
        for name in names {
            if raw.variable_index(name).is_none() {
                return Err(DataError::UnknownCostVariable(name.clone()));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.costs.get(name).copied()
    }
}

/// Resolves the cost vector: defaults from [`default_cost`], replaced by any override.
pub fn assign_costs(
    raw: &RawDataset,
    preps: &[VariablePreparation],
    overrides: Option<&CostOverrides>,
) -> Result<Vec<f64>, DataError> {
    if let Some(o) = overrides {
        o.validate(raw)?;
    }
    let k = raw.num_variables();
    Ok(preps
        .iter()
        .map(|p| {
            overrides
                .and_then(|o| o.get(&p.name))
                .unwrap_or_else(|| default_cost(k, p.num_parts()))
        })
        .collect())
}

/// All per-variable preparations plus class priors, estimated on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preparation {
    pub target: String,
    pub class_labels: Vec<String>,
    pub class_counts: Vec<usize>,
    pub class_log_prior: Vec<f64>,
    pub variables: Vec<VariablePreparation>,
}

impl Preparation {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.cost).collect()
    }

    /// Builds the criterion cache for `rows` of `raw`.
    pub fn encode(&self, raw: &RawDataset, rows: &[usize]) -> PreparedDataset {
        let k_count = self.variables.len();
        let j_count = self.class_labels.len();
        let mut cache = Vec::with_capacity(rows.len() * k_count * j_count);
        for &r in rows {
            for (k, var) in self.variables.iter().enumerate() {
                let part = var.partition.part_of(&raw.variables[k].cells[r]);
                cache.extend_from_slice(&var.cond_log_prob[part]);
            }
        }
        PreparedDataset {
            n: rows.len(),
            k: k_count,
            j: j_count,
            class_log_prior: self.class_log_prior.clone(),
            cache,
            true_class: rows.iter().map(|&r| raw.targets[r]).collect(),
            costs: self.costs(),
        }
    }

    pub fn summary_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// Laplace-smoothed class log-priors.
pub fn class_log_priors(counts: &[usize], pseudo_count: f64) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let denom = total as f64 + pseudo_count * counts.len() as f64;
    counts
        .iter()
        .map(|&c| ((c as f64 + pseudo_count) / denom).ln())
        .collect()
}

/// Prepares every variable on `rows` (the training rows) and resolves costs.
pub fn prepare(
    raw: &RawDataset,
    rows: &[usize],
    config: &PrepConfig,
    overrides: Option<&CostOverrides>,
) -> Result<Preparation, DataError> {
    config.validate()?;
    if rows.is_empty() {
        return Err(DataError::NoRows);
    }
    let mut variables: Vec<VariablePreparation> = (0..raw.num_variables())
        .into_par_iter()
        .map(|k| prepare_variable(raw, k, rows, config))
        .collect();
    let costs = assign_costs(raw, &variables, overrides)?;
    for (v, c) in variables.iter_mut().zip(costs) {
        v.cost = c;
    }
    let mut class_counts = vec![0usize; raw.num_classes()];
    for &r in rows {
        class_counts[raw.targets[r]] += 1;
    }
    Ok(Preparation {
        target: raw.target_name.clone(),
        class_labels: raw.class_labels.clone(),
        class_log_prior: class_log_priors(&class_counts, 1.0),
        class_counts,
        variables,
    })
}

/// The cached constants of the likelihood: class log-priors and, for every
/// instance `n`, variable `k` and class `j`, `log p(x_k^n | C_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    n: usize,
    k: usize,
    j: usize,
    class_log_prior: Vec<f64>,
    /// Row-major `[n][k][j]`.
    cache: Vec<f64>,
    true_class: Vec<usize>,
    costs: Vec<f64>,
}

impl PreparedDataset {
    /// Assembles a dataset from raw arrays; `cache` is `[n][k][j]` row-major.
    pub fn from_parts(
        class_log_prior: Vec<f64>,
        cache: Vec<f64>,
        true_class: Vec<usize>,
        costs: Vec<f64>,
    ) -> Result<Self, DataError> {
        let j = class_log_prior.len();
        let n = true_class.len();
        let k = costs.len();
        if j < 2 {
            return Err(DataError::Config("at least two classes required".into()));
        }
        if cache.len() != n * k * j {
            return Err(DataError::Config(format!(
                "cache has {} entries, expected {}",
                cache.len(),
                n * k * j
            )));
        }
        if cache.iter().chain(&class_log_prior).any(|v| !v.is_finite()) {
            return Err(DataError::Config("non-finite log-probability".into()));
        }
        if true_class.iter().any(|&c| c >= j) {
            return Err(DataError::Config("class index out of range".into()));
        }
        Ok(Self {
            n,
            k,
            j,
            class_log_prior,
            cache,
            true_class,
            costs,
        })
    }

    pub fn num_instances(&self) -> usize {
        self.n
    }

    pub fn num_variables(&self) -> usize {
        self.k
    }

    pub fn num_classes(&self) -> usize {
        self.j
    }

    pub fn class_log_prior(&self) -> &[f64] {
        &self.class_log_prior
    }

    pub fn true_class(&self) -> &[usize] {
        &self.true_class
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// `[k][j]` block of instance `n`.
    #[inline]
    pub fn instance(&self, n: usize) -> &[f64] {
        let stride = self.k * self.j;
        &self.cache[n * stride..(n + 1) * stride]
    }

    /// `log p(x_k^n | C_j)` for all `j`.
    #[inline]
    pub fn cond(&self, n: usize, k: usize) -> &[f64] {
        let start = (n * self.k + k) * self.j;
        &self.cache[start..start + self.j]
    }

    /// Copy with replaced costs.
    pub fn with_costs(mut self, costs: Vec<f64>) -> Self {
        assert_eq!(costs.len(), self.k);
        self.costs = costs;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(csv: &str) -> Table {
        read_table(csv.as_bytes(), &ParseOptions::default()).unwrap()
    }

    fn all_rows(raw: &RawDataset) -> Vec<usize> {
        (0..raw.num_instances()).collect()
    }

    #[test]
    fn load_infers_kinds_and_classes() {
        let mut csv = String::from("a,b,c,class\n");
        for i in 0..150 {
            csv.push_str(&format!(
                "{},{},x{},{}\n",
                i,
                i as f64 * 0.5,
                i % 3,
                ["u", "v", "w"][i % 3]
            ));
        }
        let raw = RawDataset::from_table(&table(&csv), "class").unwrap();
        assert_eq!(raw.num_variables(), 3);
        assert_eq!(raw.num_instances(), 150);
        assert_eq!(raw.num_classes(), 3);
        assert_eq!(raw.variables[0].kind, VariableKind::Numerical);
        assert_eq!(raw.variables[2].kind, VariableKind::Categorical);
    }

    #[test]
    fn load_errors() {
        let t = table("a,class\n1,x\n2,x\n");
        assert!(matches!(
            RawDataset::from_table(&t, "class"),
            Err(DataError::DegenerateTarget(_))
        ));
        assert!(matches!(
            RawDataset::from_table(&t, "nope"),
            Err(DataError::MissingTarget(_))
        ));
        let t = table("a,class\n");
        assert!(matches!(
            RawDataset::from_table(&t, "class"),
            Err(DataError::NoRows)
        ));
        let t = table("a,class\n1,x\n2,\n");
        assert!(matches!(
            RawDataset::from_table(&t, "class"),
            Err(DataError::MissingLabel { row: 1 })
        ));
    }

    #[test]
    fn question_marks_are_missing_in_numeric_column() {
        let t = table("a,class\n1,x\n?,y\n3,x\n,y\n");
        let raw = RawDataset::from_table(&t, "class").unwrap();
        assert_eq!(raw.variables[0].kind, VariableKind::Numerical);
        assert_eq!(raw.variables[0].missing_count(), 2);
        assert_eq!(raw.variables[0].cells[1], Cell::Missing);
    }

    #[test]
    fn constant_variable_has_one_certain_part() {
        let t = table("a,class\n5,x\n5,y\n5,x\n5,y\n5,y\n");
        let raw = RawDataset::from_table(&t, "class").unwrap();
        let prep = prepare_variable(&raw, 0, &all_rows(&raw), &PrepConfig::default());
        assert_eq!(prep.num_parts(), 1);
        for &lp in &prep.cond_log_prob[0] {
            assert_eq!(lp, 0.0);
        }
    }

    #[test]
    fn laplace_smoothing_on_binary_variable() {
        // counts a:(3,1), b:(1,3)
        let t = table("v,class\na,c1\na,c1\na,c1\na,c2\nb,c1\nb,c2\nb,c2\nb,c2\n");
        let raw = RawDataset::from_table(&t, "class").unwrap();
        let prep = prepare_variable(&raw, 0, &all_rows(&raw), &PrepConfig::default());
        assert_eq!(prep.num_parts(), 2);
        assert!((prep.cond_log_prob[0][0].exp() - 2.0 / 3.0).abs() < 1e-15);
        assert!((prep.cond_log_prob[1][0].exp() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_frequency_bins() {
        let mut csv = String::from("a,class\n");
        for i in 0..100 {
            csv.push_str(&format!("{},{}\n", i, i % 2));
        }
        let raw = RawDataset::from_table(&table(&csv), "class").unwrap();
        let cfg = PrepConfig {
            max_parts: Some(10),
            ..Default::default()
        };
        let prep = prepare_variable(&raw, 0, &all_rows(&raw), &cfg);
        assert_eq!(prep.num_parts(), 10);
        for row in &prep.counts {
            assert_eq!(row.iter().sum::<usize>(), 10);
        }
        // default P_max = min(10, floor(sqrt(100)))
        let prep = prepare_variable(&raw, 0, &all_rows(&raw), &PrepConfig::default());
        assert_eq!(prep.num_parts(), 10);
    }

    #[test]
    fn ties_collapse_bins() {
        let mut csv = String::from("a,class\n");
        for i in 0..100 {
            let v = if i < 80 { 0 } else { i };
            csv.push_str(&format!("{},{}\n", v, i % 2));
        }
        let raw = RawDataset::from_table(&table(&csv), "class").unwrap();
        let prep = prepare_variable(&raw, 0, &all_rows(&raw), &PrepConfig::default());
        assert!(prep.num_parts() < 10);
        assert!(prep.num_parts() >= 2);
    }

    #[test]
    fn heavy_ties_still_split_at_run_boundaries() {
        // half the values are 1, the rest spread over 2..=10
        let mut sorted: Vec<f64> = vec![1.0; 50];
        sorted.extend((0..50).map(|i| f64::from(2 + i % 9)));
        sorted.sort_by(f64::total_cmp);
        let cuts = equal_frequency_cuts(&sorted, 10);
        assert!(cuts.len() >= 4, "{cuts:?}");
        assert_eq!(cuts[0], 1.5);
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
        assert!(equal_frequency_cuts(&[3.0; 20], 10).is_empty());
    }

    #[test]
    fn categorical_grouping_pools_rare_values() {
        let mut csv = String::from("c,class\n");
        for i in 0..20 {
            csv.push_str(&format!(
                "{},{}\n",
                if i < 9 {
                    "a"
                } else if i < 19 {
                    "b"
                } else {
                    "rare"
                },
                i % 2
            ));
        }
        csv.push_str("?,0\n");
        let raw = RawDataset::from_table(&table(&csv), "class").unwrap();
        let prep = prepare_variable(&raw, 0, &all_rows(&raw), &PrepConfig::default());
        // a, b, other, missing
        assert_eq!(prep.num_parts(), 4);
        let p = &prep.partition;
        assert_eq!(p.part_of(&Cell::Cat("a".into())), 0);
        assert_eq!(p.part_of(&Cell::Cat("rare".into())), 2);
        assert_eq!(p.part_of(&Cell::Cat("never-seen".into())), 2);
        assert_eq!(p.part_of(&Cell::Missing), 3);
    }

    #[test]
    fn conditional_columns_sum_to_one() {
        let mut csv = String::from("a,b,class\n");
        for i in 0..64 {
            csv.push_str(&format!(
                "{},{},{}\n",
                (i * 7) % 13,
                ["p", "q", "r"][i % 3],
                i % 3
            ));
        }
        let raw = RawDataset::from_table(&table(&csv), "class").unwrap();
        let prep = prepare(&raw, &all_rows(&raw), &PrepConfig::default(), None).unwrap();
        for v in &prep.variables {
            for j in 0..3 {
                let s: f64 = v.cond_log_prob.iter().map(|row| row[j].exp()).sum();
                assert!((s - 1.0).abs() < 1e-10);
            }
        }
        let s: f64 = prep.class_log_prior.iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn out_of_range_numbers_use_boundary_bins() {
        let p = Partition::Numerical {
            cut_points: vec![1.0, 2.0],
            missing_part: false,
            fallback: 1,
        };
        assert_eq!(p.part_of(&Cell::Num(-100.0)), 0);
        assert_eq!(p.part_of(&Cell::Num(1.0)), 0);
        assert_eq!(p.part_of(&Cell::Num(1.5)), 1);
        assert_eq!(p.part_of(&Cell::Num(1e9)), 2);
        assert_eq!(p.part_of(&Cell::Missing), 1);
    }

    #[test]
    #[allow(clippy::approx_constant)] // literal kept as an independent check
    fn default_costs() {
        let t = table("a,class\n1,x\n2,y\n3,x\n4,y\n");
        let raw = RawDataset::from_table(&t, "class").unwrap();
        let prep = prepare(&raw, &all_rows(&raw), &PrepConfig::default(), None).unwrap();
        // K = 1: selection part is log 1 = 0
        let parts = prep.variables[0].num_parts() as f64;
        assert!((prep.variables[0].cost - parts.ln()).abs() < 1e-15);

        let mut csv = String::from("v0,v1,v2,v3,v4,v5,v6,v7,v8,v9,class\n");
        for i in 0..10 {
            csv.push_str(&format!("7,7,7,7,7,7,7,7,7,7,{}\n", i % 2));
        }
        let raw = RawDataset::from_table(&table(&csv), "class").unwrap();
        let prep = prepare(&raw, &all_rows(&raw), &PrepConfig::default(), None).unwrap();
        for v in &prep.variables {
            // single part: only the selection component remains
            assert!((v.cost - 10f64.ln()).abs() < 1e-12);
            assert!((v.cost - 2.302585).abs() < 1e-6);
        }
    }

    #[test]
    fn cost_overrides() {
        let t = table("age,b,class\n1,1,x\n2,2,y\n3,1,x\n4,2,y\n");
        let raw = RawDataset::from_table(&t, "class").unwrap();
        let overrides = CostOverrides::from_reader("variable,cost\nage,5.0\n".as_bytes()).unwrap();
        let prep = prepare(
            &raw,
            &all_rows(&raw),
            &PrepConfig::default(),
            Some(&overrides),
        )
        .unwrap();
        assert_eq!(prep.variables[0].cost, 5.0);
        let b_parts = prep.variables[1].num_parts();
        assert_eq!(prep.variables[1].cost, default_cost(2, b_parts));

        let unknown = CostOverrides::from_reader("zzz,1.0\n".as_bytes()).unwrap();
        assert!(matches!(
            prepare(
                &raw,
                &all_rows(&raw),
                &PrepConfig::default(),
                Some(&unknown)
            ),
            Err(DataError::UnknownCostVariable(_))
        ));
        assert!(matches!(
            CostOverrides::from_reader("age,-1\n".as_bytes()),
            Err(DataError::InvalidCost { .. })
        ));
    }

    #[test]
    fn balanced_priors_and_cache_lookup() {
        let mut csv = String::from("a,class\n");
        for i in 0..100 {
            csv.push_str(&format!("{},{}\n", i, i % 2));
        }
        let raw = RawDataset::from_table(&table(&csv), "class").unwrap();
        let rows = all_rows(&raw);
        let prep = prepare(&raw, &rows, &PrepConfig::default(), None).unwrap();
        for lp in &prep.class_log_prior {
            assert!((lp - 0.5f64.ln()).abs() < 1e-15);
        }
        let data = prep.encode(&raw, &rows);
        let n = 35;
        let part = prep.variables[0]
            .partition
            .part_of(&raw.variables[0].cells[n]);
        assert_eq!(part, 3);
        assert_eq!(
            data.cond(n, 0),
            prep.variables[0].cond_log_prob[3].as_slice()
        );
        assert_eq!(data.true_class()[n], 1);
    }
}
