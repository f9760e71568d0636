//! Multiple correspondence analysis over the binarized parts, as a baseline
//! against the grid models: complete disjunctive table, category-side
//! eigenproblem, instance coordinates through the transition formula, inertia
//! bookkeeping, and a seeded k-means over the factor coordinates.
//!
//! The category-side operator is symmetrized as S = (1/p)·D^{-1/2}TᵗT D^{-1/2}
//! and the trivial constant axis (eigenvalue 1, eigenvector √(n_s/np)) is
//! deflated before decomposition, so tied informative axes at eigenvalue 1
//! survive intact. Category coordinates are a_s = √(npμ)·u_s/√n_s and
//! instance coordinates follow z = (1/(p√μ))·T·a; both carry weighted
//! variance μ per axis.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binarize::BinnedDataset;
use crate::{Error, Result};

/// Eigenvalues this small are treated as numerically zero axes: they stay in
/// the spectrum (for inertia bookkeeping) but get no coordinates.
const MU_FLOOR: f64 = 1e-12;

/// Complete disjunctive table in compact form: one category index per
/// (instance, kept variable). Zero-count categories are dropped, as are
/// variables left with fewer than two categories (they carry no inertia).
#[derive(Debug, Clone)]
pub struct Cdt {
    /// Row-major n×p category indices.
    cats: Vec<u32>,
    pub n: usize,
    /// Kept variable count (the indicator row sum).
    pub p: usize,
    pub labels: Vec<String>,
    /// Records per category (indicator column sums).
    pub n_s: Vec<u64>,
    /// Category → kept-variable index.
    pub var_of: Vec<usize>,
    pub variables: Vec<String>,
    pub m_per_var: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Cdt {
    pub fn m(&self) -> usize {
        self.labels.len()
    }

    /// Categories of instance `i`, one per kept variable.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.cats[i * self.p..(i + 1) * self.p]
    }

    /// n·p — the indicator grand total.
    pub fn grand_total(&self) -> u64 {
        (self.n * self.p) as u64
    }
}

/// Expands a binned dataset into its disjunctive table.
pub fn build_cdt(binned: &BinnedDataset) -> Result<Cdt> {
    let n = binned.n_rows();
    if n == 0 {
        return Err(Error::EmptyInput("no instances to expand".into()));
    }
    let mut warnings = Vec::new();
    // count per (variable, part) to find populated categories
    let mut kept_vars = Vec::new();
    for (v, parts) in binned.parts.iter().enumerate() {
        let n_parts = binned.model.part_labels[v].len();
        let mut counts = vec![0u64; n_parts];
        for &part in parts {
            counts[part as usize] += 1;
        }
        let populated: Vec<usize> = (0..n_parts).filter(|&s| counts[s] > 0).collect();
        if populated.len() < 2 {
            warnings.push(format!(
                "variable {} has a single populated part; dropped from the analysis",
                binned.model.variables[v].name
            ));
        } else {
            kept_vars.push((v, populated, counts));
        }
    }
    if kept_vars.is_empty() {
        return Err(Error::InvalidArgument(
            "every variable has a single populated part; nothing to analyze".into(),
        ));
    }
    let p = kept_vars.len();
    let mut labels = Vec::new();
    let mut n_s = Vec::new();
    let mut var_of = Vec::new();
    let mut variables = Vec::new();
    let mut m_per_var = Vec::new();
    // per kept variable: original part index → category index
    let mut cat_index: Vec<Vec<u32>> = Vec::with_capacity(p);
    for (kept, (v, populated, counts)) in kept_vars.iter().enumerate() {
        variables.push(binned.model.variables[*v].name.clone());
        m_per_var.push(populated.len());
        let mut map = vec![u32::MAX; binned.model.part_labels[*v].len()];
        for &s in populated {
            map[s] = labels.len() as u32;
            labels.push(binned.model.part_labels[*v][s].clone());
            n_s.push(counts[s]);
            var_of.push(kept);
        }
        cat_index.push(map);
    }
    let mut cats = Vec::with_capacity(n * p);
    for i in 0..n {
        for (kept, (v, _, _)) in kept_vars.iter().enumerate() {
            cats.push(cat_index[kept][binned.parts[*v][i] as usize]);
        }
    }
    Ok(Cdt { cats, n, p, labels, n_s, var_of, variables, m_per_var, warnings })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McaResult {
    /// All nontrivial eigenvalues, descending (the constant axis is removed).
    pub eigenvalues: Vec<f64>,
    /// Leading axes with eigenvalue above the numerical floor; only these
    /// carry coordinates.
    pub retained: usize,
    /// category_coords[axis][category].
    pub category_coords: Vec<Vec<f64>>,
    /// instance_coords[axis][instance].
    pub instance_coords: Vec<Vec<f64>>,
    /// m/p − 1, which the nontrivial spectrum sums to.
    pub total_inertia: f64,
    /// Axes excluded from coordinates by the eigenvalue floor.
    pub dropped_axes: usize,
}

impl McaResult {
    /// Share of total inertia on axis `h`.
    pub fn variance_fraction(&self, h: usize) -> f64 {
        self.eigenvalues[h] / self.total_inertia
    }

    pub fn cumulative_variance(&self, axes: usize) -> f64 {
        self.eigenvalues[..axes].iter().sum::<f64>() / self.total_inertia
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<McaResult> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// Solves the category eigenproblem and derives both coordinate sets.
pub fn fit_mca(cdt: &Cdt) -> Result<McaResult> {
    let m = cdt.m();
    let (n, p) = (cdt.n as f64, cdt.p as f64);
    let np = n * p;
    // TᵗT from the p-sparse rows
    let mut tt = DMatrix::<f64>::zeros(m, m);
    for i in 0..cdt.n {
        let row = cdt.row(i);
        for &s in row {
            for &t in row {
                tt[(s as usize, t as usize)] += 1.0;
            }
        }
    }
    let sqrt_ns: Vec<f64> = cdt.n_s.iter().map(|&c| (c as f64).sqrt()).collect();
    let mut sym = DMatrix::<f64>::zeros(m, m);
    for s in 0..m {
        for t in 0..m {
            sym[(s, t)] = tt[(s, t)] / (p * sqrt_ns[s] * sqrt_ns[t]);
        }
    }
    // deflate the constant axis: u0_s = √(n_s/np), eigenvalue exactly 1
    let u0: Vec<f64> = cdt.n_s.iter().map(|&c| (c as f64 / np).sqrt()).collect();
    for s in 0..m {
        for t in 0..m {
            sym[(s, t)] -= u0[s] * u0[t];
        }
    }
    let eigen = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    // the deflated constant direction is one of the ≈0 tail values
    let nontrivial = &order[..m - 1];
    let eigenvalues: Vec<f64> = nontrivial.iter().map(|&h| eigen.eigenvalues[h]).collect();
    let retained = eigenvalues.iter().take_while(|&&mu| mu > MU_FLOOR).count();

    let mut category_coords = Vec::with_capacity(retained);
    let mut instance_coords = Vec::with_capacity(retained);
    for (&h, &mu) in nontrivial.iter().zip(&eigenvalues).take(retained) {
        let u = eigen.eigenvectors.column(h);
        let scale = (np * mu).sqrt();
        let mut a: Vec<f64> = (0..m).map(|s| scale * u[s] / sqrt_ns[s]).collect();
        if let Some(first) = a.iter().find(|x| x.abs() > 1e-9) {
            if *first < 0.0 {
                for x in &mut a {
                    *x = -*x;
                }
            }
        }
        let z: Vec<f64> = (0..cdt.n)
            .map(|i| cdt.row(i).iter().map(|&s| a[s as usize]).sum::<f64>() / (p * mu.sqrt()))
            .collect();
        category_coords.push(a);
        instance_coords.push(z);
    }
    Ok(McaResult {
        dropped_axes: eigenvalues.len() - retained,
        eigenvalues,
        retained,
        category_coords,
        instance_coords,
        total_inertia: m as f64 / p - 1.0,
    })
}

/// Per-axis normalized contributions plus the per-variable inertia they
/// aggregate to.
#[derive(Debug, Clone, Serialize)]
pub struct Contributions {
    /// instance[axis][i] = z²/(n·μ); sums to 1 per axis.
    pub instance: Vec<Vec<f64>>,
    /// category[axis][s] = n_s·a²/(n·p·μ); sums to 1 per axis.
    pub category: Vec<Vec<f64>>,
    /// variable[axis][j] — its categories' contributions summed.
    pub variable: Vec<Vec<f64>>,
    /// Σ_axes μ·variable share, which equals (m_j−1)/p per variable.
    pub variable_inertia: Vec<f64>,
}

pub fn contributions(result: &McaResult, cdt: &Cdt) -> Contributions {
    let (n, p) = (cdt.n as f64, cdt.p as f64);
    let mut instance = Vec::with_capacity(result.retained);
    let mut category = Vec::with_capacity(result.retained);
    let mut variable = Vec::with_capacity(result.retained);
    let mut variable_inertia = vec![0.0; cdt.variables.len()];
    for h in 0..result.retained {
        let mu = result.eigenvalues[h];
        instance.push(result.instance_coords[h].iter().map(|z| z * z / (n * mu)).collect());
        let cat: Vec<f64> = result.category_coords[h]
            .iter()
            .zip(&cdt.n_s)
            .map(|(a, &ns)| ns as f64 * a * a / (n * p * mu))
            .collect();
        let mut var = vec![0.0; cdt.variables.len()];
        for (s, c) in cat.iter().enumerate() {
            var[cdt.var_of[s]] += c;
        }
        for (j, share) in var.iter().enumerate() {
            variable_inertia[j] += mu * share;
        }
        category.push(cat);
        variable.push(var);
    }
    Contributions { instance, category, variable, variable_inertia }
}

/// Joint k-means over instances and categories in the leading factor axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorKmeans {
    pub k: usize,
    pub axes: usize,
    pub n_instances: usize,
    /// Cluster per point — instances first, then categories.
    pub assignments: Vec<u32>,
    pub centers: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances, per cluster.
    pub withinss: Vec<f64>,
    /// Objective after each update pass (non-increasing).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FactorKmeans {
    pub fn instance_assignments(&self) -> &[u32] {
        &self.assignments[..self.n_instances]
    }

    pub fn category_assignments(&self) -> &[u32] {
        &self.assignments[self.n_instances..]
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded center-based clustering: one random first center, then
/// farthest-point seeding, then assignment/update passes until assignments
/// stabilize (at most 300 passes). Instances and categories share the space.
pub fn kmeans_factor(
    result: &McaResult,
    k: usize,
    axes: usize,
    seed: u64,
) -> Result<FactorKmeans> {
    if axes < 1 || axes > result.retained {
        return Err(Error::InvalidArgument(format!(
            "axes must be in 1..={}, got {axes}",
            result.retained
        )));
    }
    let n_instances = result.instance_coords[0].len();
    let m = result.category_coords[0].len();
    let total = n_instances + m;
    if k < 1 || k > total {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={total}, got {k}"
        )));
    }
    let point = |idx: usize| -> Vec<f64> {
        (0..axes)
            .map(|h| {
                if idx < n_instances {
                    result.instance_coords[h][idx]
                } else {
                    result.category_coords[h][idx - n_instances]
                }
            })
            .collect()
    };
    let points: Vec<Vec<f64>> = (0..total).map(point).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.random_range(0..total)].clone()];
    let mut min_d: Vec<f64> = points.iter().map(|pt| dist2(pt, &centers[0])).collect();
    while centers.len() < k {
        let far = (0..total)
            .max_by(|&a, &b| min_d[a].total_cmp(&min_d[b]).then_with(|| b.cmp(&a)))
            .unwrap();
        centers.push(points[far].clone());
        let c = centers.last().unwrap();
        for (d, pt) in min_d.iter_mut().zip(&points) {
            *d = d.min(dist2(pt, c));
        }
    }

    let mut assignments = vec![0u32; total];
    let mut objective_trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 300 {
        iterations += 1;
        let mut changed = false;
        let mut objective = 0.0;
        for (idx, pt) in points.iter().enumerate() {
            let (best, d) = centers
                .iter()
                .enumerate()
                .map(|(c, center)| (c as u32, dist2(pt, center)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)))
                .unwrap();
            if assignments[idx] != best {
                assignments[idx] = best;
                changed = true;
            }
            objective += d;
        }
        objective_trace.push(objective);
        if !changed && iterations > 1 {
            converged = true;
            break;
        }
        let mut sums = vec![vec![0.0; axes]; k];
        let mut counts = vec![0usize; k];
        for (idx, pt) in points.iter().enumerate() {
            let c = assignments[idx] as usize;
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(pt) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in &mut sums[c] {
                    *s /= counts[c] as f64;
                }
                centers[c] = sums[c].clone();
            }
        }
    }
    let mut withinss = vec![0.0; k];
    for (idx, pt) in points.iter().enumerate() {
        withinss[assignments[idx] as usize] += dist2(pt, &centers[assignments[idx] as usize]);
    }
    Ok(FactorKmeans {
        k,
        axes,
        n_instances,
        assignments,
        centers,
        withinss,
        objective_trace,
        iterations,
        converged,
    })
}
