//! Quantitative comparison of two flat partitions: confusion matrix, mutual
//! information, chi², optimal one-to-one cluster matching, and the share of
//! mutual information the matching retains.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::{Error, Result};

/// A flat labeling of named items; labels are dense 0..k.
#[derive(Debug, Clone)]
pub struct Partition {
    pub items: Vec<String>,
    pub assignment: Vec<u32>,
    /// Display name per dense label id.
    pub label_names: Vec<String>,
}

impl Partition {
    /// Builds a partition from (item, label-name) pairs, assigning dense ids
    /// in order of first appearance.
    pub fn new<I, L>(items: Vec<String>, labels: I) -> Result<Partition>
    where
        I: IntoIterator<Item = L>,
        L: AsRef<str>,
    {
        let mut label_names: Vec<String> = Vec::new();
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut assignment = Vec::with_capacity(items.len());
        for label in labels {
            let label = label.as_ref();
            let id = *index.entry(label.to_owned()).or_insert_with(|| {
                label_names.push(label.to_owned());
                (label_names.len() - 1) as u32
            });
            assignment.push(id);
        }
        if assignment.len() != items.len() {
            return Err(Error::InvalidArgument(format!(
                "{} items but {} labels",
                items.len(),
                assignment.len()
            )));
        }
        if items.is_empty() {
            return Err(Error::EmptyInput("partition has no items".into()));
        }
        let mut seen = HashMap::new();
        for item in &items {
            if seen.insert(item.as_str(), ()).is_some() {
                return Err(Error::DuplicateId(item.clone()));
            }
        }
        Ok(Partition { items, assignment, label_names })
    }

    pub fn k(&self) -> usize {
        self.label_names.len()
    }

    /// Two-column CSV with an `item_id,label` header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "item_id,label").map_err(|e| Error::io(path, e))?;
        for (item, &g) in self.items.iter().zip(&self.assignment) {
            writeln!(w, "{item},{}", self.label_names[g as usize])
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Partition> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let mut items = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            if record.len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "partition rows need 2 fields, got {}",
                    record.len()
                )));
            }
            items.push(record[0].to_owned());
            labels.push(record[1].to_owned());
        }
        Partition::new(items, labels)
    }
}

/// Cross-tabulation of two partitions over the same items.
#[derive(Debug, Clone)]
pub struct ConfusionMatrix {
    /// Row-major ka×kb counts.
    pub counts: Vec<u64>,
    pub ka: usize,
    pub kb: usize,
    pub row_marg: Vec<u64>,
    pub col_marg: Vec<u64>,
    pub total: u64,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn at(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.kb + j]
    }

    /// Wraps a ready-made count table (fixtures, published matrices).
    pub fn from_counts(rows: Vec<Vec<u64>>) -> Result<ConfusionMatrix> {
        let ka = rows.len();
        let kb = rows.first().map_or(0, Vec::len);
        if ka == 0 || kb == 0 || rows.iter().any(|r| r.len() != kb) {
            return Err(Error::InvalidArgument("counts must be rectangular and nonempty".into()));
        }
        let counts: Vec<u64> = rows.into_iter().flatten().collect();
        let mut row_marg = vec![0u64; ka];
        let mut col_marg = vec![0u64; kb];
        for i in 0..ka {
            for j in 0..kb {
                row_marg[i] += counts[i * kb + j];
                col_marg[j] += counts[i * kb + j];
            }
        }
        let total = row_marg.iter().sum();
        Ok(ConfusionMatrix {
            counts,
            ka,
            kb,
            row_marg,
            col_marg,
            total,
            row_names: (1..=ka).map(|i| i.to_string()).collect(),
            col_names: (1..=kb).map(|j| j.to_string()).collect(),
        })
    }
}

/// Cross-tabulates two partitions, matching items by id (order-insensitive).
pub fn confusion(a: &Partition, b: &Partition) -> Result<ConfusionMatrix> {
    let b_index: HashMap<&str, usize> =
        b.items.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let only_a = a.items.iter().filter(|it| !b_index.contains_key(it.as_str())).count();
    if only_a > 0 || a.items.len() != b.items.len() {
        let only_b = b.items.len() - (a.items.len() - only_a);
        return Err(Error::ItemSetMismatch { only_a, only_b });
    }
    let (ka, kb) = (a.k(), b.k());
    let mut counts = vec![0u64; ka * kb];
    for (i, item) in a.items.iter().enumerate() {
        let j = b_index[item.as_str()];
        counts[a.assignment[i] as usize * kb + b.assignment[j] as usize] += 1;
    }
    let mut row_marg = vec![0u64; ka];
    let mut col_marg = vec![0u64; kb];
    for i in 0..ka {
        for j in 0..kb {
            row_marg[i] += counts[i * kb + j];
            col_marg[j] += counts[i * kb + j];
        }
    }
    Ok(ConfusionMatrix {
        counts,
        ka,
        kb,
        row_marg,
        col_marg,
        total: a.items.len() as u64,
        row_names: a.label_names.clone(),
        col_names: b.label_names.clone(),
    })
}

/// Mutual information in nats with its per-cell contributions (row-major;
/// empty cells contribute 0).
#[derive(Debug, Clone)]
pub struct MiTable {
    pub total: f64,
    pub cells: Vec<f64>,
}

pub fn mutual_information(m: &ConfusionMatrix) -> MiTable {
    let t = m.total as f64;
    let mut cells = Vec::with_capacity(m.counts.len());
    for i in 0..m.ka {
        for j in 0..m.kb {
            let c = m.at(i, j);
            let mi = if c == 0 {
                0.0
            } else {
                let num = c as u128 * m.total as u128;
                let den = m.row_marg[i] as u128 * m.col_marg[j] as u128;
                if num == den {
                    0.0
                } else {
                    (c as f64 / t) * ((c as f64 * t) / (m.row_marg[i] as f64 * m.col_marg[j] as f64)).ln()
                }
            };
            cells.push(mi);
        }
    }
    MiTable { total: cells.iter().sum(), cells }
}

/// Pearson chi² with its per-cell terms; cells under a zero marginal are
/// skipped and counted.
#[derive(Debug, Clone)]
pub struct Chi2Table {
    pub statistic: f64,
    pub cells: Vec<f64>,
    pub skipped: usize,
}

pub fn chi2(m: &ConfusionMatrix) -> Chi2Table {
    let t = m.total as f64;
    let mut cells = Vec::with_capacity(m.counts.len());
    let mut skipped = 0;
    for i in 0..m.ka {
        for j in 0..m.kb {
            if m.row_marg[i] == 0 || m.col_marg[j] == 0 {
                skipped += 1;
                cells.push(0.0);
                continue;
            }
            let expected = m.row_marg[i] as f64 * m.col_marg[j] as f64 / t;
            let d = m.at(i, j) as f64 - expected;
            cells.push(d * d / expected);
        }
    }
    Chi2Table { statistic: cells.iter().sum(), cells, skipped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Maximize,
    Minimize,
}

/// Optimal one-to-one assignment between rows and columns of a finite weight
/// matrix (shortest augmenting paths over potentials, O(n³)). Rectangular
/// inputs are padded square internally; the result holds min(ka, kb) pairs,
/// sorted by row.
pub fn hungarian(weights: &[Vec<f64>], objective: Objective) -> Result<Vec<(usize, usize)>> {
    let ka = weights.len();
    let kb = weights.first().map_or(0, Vec::len);
    if ka == 0 || kb == 0 || weights.iter().any(|r| r.len() != kb) {
        return Err(Error::InvalidArgument("weights must be rectangular and nonempty".into()));
    }
    if weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite".into()));
    }
    let n = ka.max(kb);
    // square minimization copy; dummy cells share a constant, so every
    // completion pays them equally and real pairs stay optimal
    let cost = |i: usize, j: usize| -> f64 {
        if i >= ka || j >= kb {
            0.0
        } else {
            match objective {
                Objective::Minimize => weights[i][j],
                Objective::Maximize => -weights[i][j],
            }
        }
    };
    // potentials over rows/cols; p[j] = row matched to column j (1-based with
    // a virtual column 0 hosting the row being inserted)
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] >= 1 && p[j] <= ka && j <= kb)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// Share of the confusion matrix's mutual information captured by a
/// one-to-one matching: positive contributions over matched cells, divided by
/// the (net) mutual information. Errors when the matrix carries none.
pub fn retained_mi(m: &ConfusionMatrix, assignment: &[(usize, usize)]) -> Result<f64> {
    let mi = mutual_information(m);
    if mi.total <= 0.0 {
        return Err(Error::DegenerateMi);
    }
    let kept: f64 = assignment.iter().map(|&(i, j)| mi.cells[i * m.kb + j].max(0.0)).sum();
    Ok(kept / mi.total)
}
