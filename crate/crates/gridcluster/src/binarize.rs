//! Step one of the method: every variable becomes at most `k` parts.
//!
//! Numerics get equal-frequency intervals (cuts snapped so ties are never
//! split, boundary values at midpoints of straddled data values), categoricals
//! keep their `k−1` most frequent values plus a pooled remainder. The binned
//! table then unrolls into the two-column (IdInstance, IdVarPart) pair table
//! that the co-clustering stage consumes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset, VariableSpec};
use crate::{Error, Result};

/// Serialize boundaries as decimal strings: shortest-round-trip formatting
/// guarantees the exact bit pattern survives JSON.
mod f64_strings {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let strings: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
        strings.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let strings: Vec<String> = Vec::deserialize(d)?;
        strings
            .iter()
            .map(|s| s.parse::<f64>().map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericBinning {
    /// Strictly increasing cut values; parts are `(-∞,b1], (b1,b2], …, (bL,+∞)`.
    #[serde(with = "f64_strings")]
    pub boundaries: Vec<f64>,
}

impl NumericBinning {
    pub fn n_parts(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// Interval index containing `x` (boundary values belong to the lower
    /// interval).
    pub fn part_of(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&b| b < x)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoricalGrouping {
    /// Retained tokens, most frequent first (ties lexicographic).
    pub kept_values: Vec<String>,
    /// Whether a catch-all part pools every other token.
    pub has_other: bool,
}

impl CategoricalGrouping {
    pub fn n_parts(&self) -> usize {
        self.kept_values.len() + usize::from(self.has_other)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VarBinning {
    Numeric(NumericBinning),
    Categorical(CategoricalGrouping),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    /// Missing cells get a dedicated part per variable (keeps N = n·m).
    DedicatedPart,
    /// Rows containing any missing cell are excluded from the binned table.
    DropRows,
}

#[derive(Debug, Clone)]
pub struct BinConfig {
    /// Maximum parts per variable.
    pub k: usize,
    pub missing_policy: MissingPolicy,
}

impl BinConfig {
    pub fn with_k(k: usize) -> Self {
        BinConfig { k, missing_policy: MissingPolicy::DedicatedPart }
    }
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig::with_k(10)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinningModel {
    pub k: usize,
    pub missing_policy: MissingPolicy,
    pub variables: Vec<VariableSpec>,
    /// One entry per variable, aligned with `variables`.
    pub per_variable: Vec<VarBinning>,
    /// Per variable: part labels in part-index order; a trailing missing part
    /// is present iff `missing_part` holds its index.
    pub part_labels: Vec<Vec<String>>,
    pub missing_part: Vec<Option<usize>>,
    /// Fit-time diagnostics (constant columns and the like); not persisted.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl BinningModel {
    pub fn n_parts(&self, var: usize) -> usize {
        self.part_labels[var].len()
    }

    pub fn total_parts(&self) -> usize {
        self.part_labels.iter().map(Vec::len).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<BinningModel> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let model: BinningModel = serde_json::from_reader(BufReader::new(file))?;
        validate_labels(&model.part_labels)?;
        Ok(model)
    }
}

/// The n×m table of per-variable part indices (rows possibly filtered by the
/// missing policy).
#[derive(Debug, Clone)]
pub struct BinnedDataset {
    pub model: BinningModel,
    pub instance_ids: Vec<String>,
    /// Column-major: `parts[var][row]` indexes into `model.part_labels[var]`.
    pub parts: Vec<Vec<u32>>,
}

impl BinnedDataset {
    pub fn n_rows(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn n_vars(&self) -> usize {
        self.parts.len()
    }
}

/// The unrolled co-occurrence table: one record per (instance, variable),
/// instance-major. Labels are interned; `records` holds index pairs.
#[derive(Debug, Clone)]
pub struct PairTable {
    pub instance_labels: Vec<String>,
    pub part_labels: Vec<String>,
    pub records: Vec<(u32, u32)>,
}

impl PairTable {
    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(["IdInstance", "IdVarPart"]).map_err(|e| Error::csv(path, e))?;
        for &(i, p) in &self.records {
            w.write_record([
                self.instance_labels[i as usize].as_str(),
                self.part_labels[p as usize].as_str(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
        w.into_inner()
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?
            .flush()
            .map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads any two-column CSV with a header; labels are interned in
    /// first-appearance order.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<PairTable> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(BufReader::new(file));
        let mut instances = Interner::new();
        let mut parts = Interner::new();
        let mut records = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            if record.len() != 2 {
                return Err(Error::SchemaMismatch(format!(
                    "{}: pair table rows need exactly 2 columns, got {}",
                    path.display(),
                    record.len()
                )));
            }
            records.push((instances.intern(&record[0]), parts.intern(&record[1])));
        }
        if records.is_empty() {
            return Err(Error::EmptyInput(format!("{}: no pair records", path.display())));
        }
        Ok(PairTable {
            instance_labels: instances.labels,
            part_labels: parts.labels,
            records,
        })
    }
}

struct Interner {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn new() -> Self {
        Interner { labels: Vec::new(), index: HashMap::new() }
    }

    fn intern(&mut self, label: &str) -> u32 {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), i);
        i
    }
}

/// Equal-frequency cuts: for each rank target ⌊b·n'/k⌋ take the closest
/// admissible position at or above it (falling back to the closest below),
/// never reusing a position. Admissible positions sit strictly between
/// distinct sorted values, so ties are never split; boundary values are the
/// midpoints of the straddled pair.
pub fn discretize_numeric(values: &[f64], k: usize) -> Result<NumericBinning> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("granularity k must be ≥ 2, got {k}")));
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if sorted.is_empty() {
        return Err(Error::EmptyInput("no non-missing values to discretize".into()));
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let admissible: Vec<usize> = (1..n).filter(|&p| sorted[p - 1] < sorted[p]).collect();
    let mut used = vec![false; admissible.len()];
    let mut positions = Vec::new();
    for b in 1..k {
        let target = b * n / k;
        // first admissible index at or above the rank target
        let at_or_above = admissible.partition_point(|&p| p < target);
        let pick = (at_or_above..admissible.len())
            .find(|&i| !used[i])
            .or_else(|| (0..at_or_above).rev().find(|&i| !used[i]));
        if let Some(i) = pick {
            used[i] = true;
            positions.push(admissible[i]);
        }
    }
    positions.sort_unstable();
    let boundaries = positions
        .into_iter()
        .map(|p| (sorted[p - 1] + sorted[p]) / 2.0)
        .collect();
    Ok(NumericBinning { boundaries })
}

/// Keeps each token as its own part when there are at most `k` distinct
/// tokens; otherwise the `k−1` most frequent (ties lexicographic) plus a
/// pooled remainder.
pub fn group_categorical<S: AsRef<str>>(values: &[S], k: usize) -> Result<CategoricalGrouping> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("granularity k must be ≥ 2, got {k}")));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for v in values {
        *counts.entry(v.as_ref()).or_insert(0) += 1;
    }
    if counts.is_empty() {
        return Err(Error::EmptyInput("no non-missing values to group".into()));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if ranked.len() <= k {
        Ok(CategoricalGrouping {
            kept_values: ranked.into_iter().map(|(t, _)| t.to_owned()).collect(),
            has_other: false,
        })
    } else {
        Ok(CategoricalGrouping {
            kept_values: ranked[..k - 1].iter().map(|&(t, _)| t.to_owned()).collect(),
            has_other: true,
        })
    }
}

fn fmt_boundary(x: f64) -> String {
    format!("{x}")
}

fn numeric_labels(var: &str, binning: &NumericBinning) -> Vec<String> {
    let b = &binning.boundaries;
    if b.is_empty() {
        return vec![format!("{var}]-∞;+∞[")];
    }
    let mut labels = Vec::with_capacity(b.len() + 1);
    labels.push(format!("{var}]-∞;{}]", fmt_boundary(b[0])));
    for w in b.windows(2) {
        labels.push(format!("{var}]{};{}]", fmt_boundary(w[0]), fmt_boundary(w[1])));
    }
    labels.push(format!("{var}]{};+∞[", fmt_boundary(b[b.len() - 1])));
    labels
}

fn categorical_labels(var: &str, grouping: &CategoricalGrouping) -> Vec<String> {
    let mut labels: Vec<String> =
        grouping.kept_values.iter().map(|t| format!("{var}{{{t}}}")).collect();
    if grouping.has_other {
        labels.push(format!("{var}{{other}}"));
    }
    labels
}

const MISSING_LABEL: &str = "{Missing}";

fn validate_labels(part_labels: &[Vec<String>]) -> Result<()> {
    let mut seen = HashMap::new();
    for labels in part_labels {
        for label in labels {
            if seen.insert(label.as_str(), ()).is_some() {
                return Err(Error::DuplicateColumn(format!("part label {label:?}")));
            }
        }
    }
    Ok(())
}

/// Fits every variable's binning at granularity `config.k`; variables with
/// missing cells get a dedicated trailing part when the policy keeps rows.
pub fn fit_binning(dataset: &Dataset, config: &BinConfig) -> Result<BinningModel> {
    let mut per_variable = Vec::with_capacity(dataset.n_vars());
    let mut part_labels = Vec::with_capacity(dataset.n_vars());
    let mut missing_part = Vec::with_capacity(dataset.n_vars());
    let mut warnings = Vec::new();
    for (spec, column) in dataset.schema.variables.iter().zip(&dataset.columns) {
        let var = spec.name.as_str();
        let wrap = |e: Error| Error::Variable { variable: var.to_owned(), message: e.to_string() };
        let (binning, labels) = match column {
            Column::Numeric(cells) => {
                let present: Vec<f64> = cells.iter().flatten().copied().collect();
                let binning = discretize_numeric(&present, config.k).map_err(wrap)?;
                if binning.boundaries.is_empty() {
                    warnings.push(format!("{var}: all values identical, single part"));
                }
                let labels = numeric_labels(var, &binning);
                (VarBinning::Numeric(binning), labels)
            }
            Column::Categorical { codes, dict } => {
                let present: Vec<&str> =
                    codes.iter().flatten().map(|&c| dict[c as usize].as_str()).collect();
                let grouping = group_categorical(&present, config.k).map_err(wrap)?;
                let labels = categorical_labels(var, &grouping);
                (VarBinning::Categorical(grouping), labels)
            }
        };
        let has_missing = (0..column.len()).any(|r| column.is_missing(r));
        let mut labels = labels;
        let missing_idx = if has_missing && config.missing_policy == MissingPolicy::DedicatedPart
        {
            labels.push(format!("{var}{MISSING_LABEL}"));
            Some(labels.len() - 1)
        } else {
            None
        };
        per_variable.push(binning);
        part_labels.push(labels);
        missing_part.push(missing_idx);
    }
    validate_labels(&part_labels)?;
    Ok(BinningModel {
        k: config.k,
        missing_policy: config.missing_policy,
        variables: dataset.schema.variables.clone(),
        per_variable,
        part_labels,
        missing_part,
        warnings,
    })
}

/// Maps every cell to its part index; under the drop-rows policy, rows with
/// any missing cell are excluded.
pub fn apply_binning(dataset: &Dataset, model: &BinningModel) -> Result<BinnedDataset> {
    if dataset.schema.variables.len() != model.variables.len()
        || dataset
            .schema
            .variables
            .iter()
            .zip(&model.variables)
            .any(|(a, b)| a.name != b.name || a.kind != b.kind)
    {
        return Err(Error::BinningMismatch(
            "dataset schema does not match the fitted binning".into(),
        ));
    }
    let keep_row = |row: usize| -> bool {
        model.missing_policy != MissingPolicy::DropRows
            || dataset.columns.iter().all(|c| !c.is_missing(row))
    };
    let rows: Vec<usize> = (0..dataset.n_rows()).filter(|&r| keep_row(r)).collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput("every row has missing cells; nothing to bin".into()));
    }
    let mut parts: Vec<Vec<u32>> = Vec::with_capacity(dataset.n_vars());
    for (v, column) in dataset.columns.iter().enumerate() {
        let spec = &model.variables[v];
        let missing_idx = model.missing_part[v];
        let mut out = Vec::with_capacity(rows.len());
        for &row in &rows {
            let idx = if column.is_missing(row) {
                missing_idx.ok_or_else(|| Error::Variable {
                    variable: spec.name.clone(),
                    message: "missing cell but the fitted binning has no missing part".into(),
                })?
            } else {
                match (&model.per_variable[v], column) {
                    (VarBinning::Numeric(binning), Column::Numeric(cells)) => {
                        binning.part_of(cells[row].unwrap())
                    }
                    (VarBinning::Categorical(grouping), Column::Categorical { codes, dict }) => {
                        let tok = &dict[codes[row].unwrap() as usize];
                        match grouping.kept_values.iter().position(|t| t == tok) {
                            Some(p) => p,
                            None if grouping.has_other => grouping.kept_values.len(),
                            None => {
                                return Err(Error::Variable {
                                    variable: spec.name.clone(),
                                    message: format!(
                                        "token {tok:?} unseen at fit time and no pooled part"
                                    ),
                                })
                            }
                        }
                    }
                    _ => {
                        return Err(Error::BinningMismatch(format!(
                            "variable {:?}: column kind does not match fitted binning",
                            spec.name
                        )))
                    }
                }
            };
            out.push(idx as u32);
        }
        parts.push(out);
    }
    Ok(BinnedDataset {
        model: model.clone(),
        instance_ids: rows.iter().map(|&r| dataset.instance_ids[r].clone()).collect(),
        parts,
    })
}

/// Unrolls the binned table into one record per (instance, variable),
/// instance-major with variables in schema order. Part labels are compacted
/// to those actually used.
pub fn to_pair_table(binned: &BinnedDataset) -> PairTable {
    let model = &binned.model;
    // global index of (var, local part) → compacted used index
    let offsets: Vec<usize> = model
        .part_labels
        .iter()
        .scan(0usize, |acc, l| {
            let o = *acc;
            *acc += l.len();
            Some(o)
        })
        .collect();
    let total = model.total_parts();
    let mut used = vec![false; total];
    for (v, col) in binned.parts.iter().enumerate() {
        for &p in col {
            used[offsets[v] + p as usize] = true;
        }
    }
    let mut compact = vec![u32::MAX; total];
    let mut part_labels = Vec::new();
    for (g, &u) in used.iter().enumerate() {
        if u {
            compact[g] = part_labels.len() as u32;
            let mut rest = g;
            let v = offsets.partition_point(|&o| o <= rest) - 1;
            rest -= offsets[v];
            part_labels.push(model.part_labels[v][rest].clone());
        }
    }
    let mut records = Vec::with_capacity(binned.n_rows() * binned.n_vars());
    for row in 0..binned.n_rows() {
        for (v, col) in binned.parts.iter().enumerate() {
            records.push((row as u32, compact[offsets[v] + col[row] as usize]));
        }
    }
    PairTable {
        instance_labels: binned.instance_ids.clone(),
        part_labels,
        records,
    }
}
