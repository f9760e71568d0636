//! Merge hierarchy from an optimized grid down to the 1×1 baseline.
//!
//! Each coarsening step applies the single merge (over both dimensions) with
//! the smallest criterion change, so walking the hierarchy yields the
//! least-divergent simplified grid at every size. The information rate of a
//! model normalizes its criterion gap to the 1×1 baseline: 1.0 at the
//! optimized grid, 0.0 at the baseline.
//!
//! The cost path usually rises as the grid coarsens, but not always: a merge
//! in one dimension can leave two groups of the other dimension carrying the
//! same profile, at which point merging those two lowers the criterion. The
//! recorded steps keep such dips as they are rather than smoothing them.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::modl::{delta_merge_unchecked, null_model, CoclusterModel, CoocStats, Dim};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeStep {
    pub dim: Dim,
    /// Group ids at the time the step is applied (replay in order).
    pub a: u32,
    pub b: u32,
    pub cost_after: f64,
    /// Information rate after this step; not clamped.
    pub info_after: f64,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub base: CoclusterModel,
    pub steps: Vec<MergeStep>,
    pub null_cost: f64,
    pub base_cost: f64,
    pub warnings: Vec<String>,
}

/// Greedily merges the pair (row or column) with minimal criterion change
/// until the grid is 1×1. Ties go to the smaller delta, then rows before
/// columns, then the lowest group-id pair.
pub fn build_hierarchy(model: &CoclusterModel, stats: &CoocStats) -> Hierarchy {
    let null_cost = null_model(stats).cost();
    let base_cost = model.cost();
    let mut warnings = Vec::new();
    if (null_cost - base_cost).abs() <= 1e-9 * null_cost.abs().max(1.0)
        && (model.rows() > 1 || model.cols() > 1)
    {
        warnings.push(
            "base cost equals the 1×1 baseline; information rates default to 1.0".to_owned(),
        );
    }
    let gap = null_cost - base_cost;
    let info_of = move |cost: f64| -> f64 {
        if gap.abs() <= 1e-9 * null_cost.abs().max(1.0) {
            1.0
        } else {
            (null_cost - cost) / gap
        }
    };

    let mut cur = model.clone();
    let mut steps = Vec::with_capacity(cur.rows() + cur.cols() - 2);
    while cur.rows() + cur.cols() > 2 {
        // (delta, dim rank: rows first, a, b)
        let mut best: Option<(f64, u8, u32, u32)> = None;
        for (rank, dim) in [(0u8, Dim::Row), (1u8, Dim::Col)] {
            let k = cur.n_groups(dim) as u32;
            for a in 0..k {
                for b in a + 1..k {
                    let delta = delta_merge_unchecked(stats, &cur, dim, a, b);
                    let key = (delta, rank, a, b);
                    let better = match best {
                        None => true,
                        Some(cand) => {
                            key.0 < cand.0
                                || (key.0 == cand.0
                                    && (key.1, key.2, key.3) < (cand.1, cand.2, cand.3))
                        }
                    };
                    if better {
                        best = Some(key);
                    }
                }
            }
        }
        let (_, rank, a, b) = best.expect("a grid larger than 1×1 has a mergeable pair");
        let dim = if rank == 0 { Dim::Row } else { Dim::Col };
        cur.apply_merge(stats, dim, a, b).expect("enumerated pair is legal");
        steps.push(MergeStep {
            dim,
            a,
            b,
            cost_after: cur.cost(),
            info_after: info_of(cur.cost()),
        });
    }
    debug_assert!(
        (cur.cost() - null_cost).abs() <= 1e-9 * null_cost.abs().max(1.0),
        "hierarchy must end at the baseline cost"
    );
    Hierarchy { base: model.clone(), steps, null_cost, base_cost, warnings }
}

/// Fraction of the optimized model's criterion gap that `cost` retains:
/// (null − cost) / (null − base). A degenerate hierarchy (base at the
/// baseline cost) rates everything 1.0.
pub fn info_rate(cost: f64, hierarchy: &Hierarchy) -> f64 {
    let gap = hierarchy.null_cost - hierarchy.base_cost;
    if gap.abs() <= 1e-9 * hierarchy.null_cost.abs().max(1.0) {
        1.0
    } else {
        (hierarchy.null_cost - cost) / gap
    }
}

fn replay(hierarchy: &Hierarchy, stats: &CoocStats, steps: usize) -> CoclusterModel {
    let mut model = hierarchy.base.clone();
    for step in &hierarchy.steps[..steps] {
        model.apply_merge(stats, step.dim, step.a, step.b).expect("recorded step is legal");
    }
    model
}

/// The coarsest model along the hierarchy whose information rate is still at
/// least `target`.
pub fn model_at_info(hierarchy: &Hierarchy, stats: &CoocStats, target: f64) -> CoclusterModel {
    let mut keep = 0;
    for (idx, step) in hierarchy.steps.iter().enumerate() {
        if step.info_after >= target - 1e-12 {
            keep = idx + 1;
        }
    }
    replay(hierarchy, stats, keep)
}

/// Walks the hierarchy until both dimensions fit the requested sizes.
pub fn model_at_size(
    hierarchy: &Hierarchy,
    stats: &CoocStats,
    rows: usize,
    cols: usize,
) -> Result<CoclusterModel> {
    let (i0, j0) = (hierarchy.base.rows(), hierarchy.base.cols());
    if rows < 1 || rows > i0 || cols < 1 || cols > j0 {
        return Err(Error::InvalidArgument(format!(
            "requested {rows}×{cols} grid outside the hierarchy range {i0}×{j0} … 1×1"
        )));
    }
    let mut model = hierarchy.base.clone();
    for step in &hierarchy.steps {
        if model.rows() <= rows && model.cols() <= cols {
            break;
        }
        model.apply_merge(stats, step.dim, step.a, step.b).expect("recorded step is legal");
    }
    Ok(model)
}

/// Serialized form: costs plus the ordered steps (the base model is saved
/// separately as a model file).
#[derive(Serialize, Deserialize)]
struct HierarchyFile {
    null_cost: f64,
    base_cost: f64,
    steps: Vec<MergeStep>,
}

impl Hierarchy {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let out = HierarchyFile {
            null_cost: self.null_cost,
            base_cost: self.base_cost,
            steps: self.steps.clone(),
        };
        serde_json::to_writer_pretty(BufWriter::new(file), &out)?;
        Ok(())
    }

    /// Loads the step list back, re-anchored on `base` (which must be the
    /// model the hierarchy was built from).
    pub fn load(
        path: impl AsRef<Path>,
        base: &CoclusterModel,
        stats: &CoocStats,
    ) -> Result<Hierarchy> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed: HierarchyFile = serde_json::from_reader(BufReader::new(file))?;
        let tol = 1e-9 * parsed.base_cost.abs().max(1.0);
        if (parsed.base_cost - base.cost()).abs() > tol {
            return Err(Error::ModelMismatch(format!(
                "hierarchy was built from a model costing {}, got {}",
                parsed.base_cost,
                base.cost()
            )));
        }
        if parsed.steps.len() != base.rows() + base.cols() - 2 {
            return Err(Error::ModelMismatch(format!(
                "hierarchy has {} steps, base grid needs {}",
                parsed.steps.len(),
                base.rows() + base.cols() - 2
            )));
        }
        let _ = stats;
        Ok(Hierarchy {
            base: base.clone(),
            steps: parsed.steps,
            null_cost: parsed.null_cost,
            base_cost: parsed.base_cost,
            warnings: Vec::new(),
        })
    }
}
