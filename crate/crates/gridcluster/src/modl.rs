//! The co-clustering model family and its exact selection criterion.
//!
//! A model partitions the distinct values of each pair-table column into
//! groups, inducing a grid of cells over the records. The criterion is the
//! exact negative log posterior of the grid (in nats, lower is better) under
//! a uniform hierarchical prior: partition priors via partial Bell numbers,
//! one multinomial-allocation term for the grid and one per group, and a
//! likelihood ranking term built from factorials of cell and margin counts.
//! The MAP model minimizes it; the 1×1 grid is the independence baseline.
//!
//! Everything is evaluated in log space. Factorials come from an exact
//! cumulative table with an asymptotic-series tail for arguments beyond it;
//! search-time updates use incremental deltas that touch only the affected
//! terms and agree with a full recomputation to 1e-9 relative.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Mutex;

use crate::binarize::PairTable;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dim {
    Row,
    Col,
}

impl Dim {
    pub fn opposite(self) -> Dim {
        match self {
            Dim::Row => Dim::Col,
            Dim::Col => Dim::Row,
        }
    }

    fn idx(self) -> usize {
        match self {
            Dim::Row => 0,
            Dim::Col => 1,
        }
    }
}

/// ln(n!) via an exact Kahan-summed table, falling back to the Stirling
/// series beyond it (the fallback is only reachable for the grid-allocation
/// term, whose argument can exceed N + V + W).
pub(crate) struct LnFact {
    table: Vec<f64>,
}

impl LnFact {
    pub(crate) fn new(max_n: usize) -> LnFact {
        let mut table = Vec::with_capacity(max_n + 1);
        table.push(0.0);
        let (mut sum, mut carry) = (0.0f64, 0.0f64);
        for i in 1..=max_n {
            let term = (i as f64).ln() - carry;
            let next = sum + term;
            carry = (next - sum) - term;
            sum = next;
            table.push(sum);
        }
        LnFact { table }
    }

    #[inline]
    pub(crate) fn get(&self, n: u64) -> f64 {
        match self.table.get(n as usize) {
            Some(&v) => v,
            None => {
                let x = n as f64;
                let x2 = x * x;
                x * x.ln() - x
                    + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
                    + 1.0 / (12.0 * x)
                    - 1.0 / (360.0 * x2 * x)
                    + 1.0 / (1260.0 * x2 * x2 * x)
            }
        }
    }

    /// ln C(a, b); degenerate b (0 or a) gives 0.
    #[inline]
    pub(crate) fn ln_binom(&self, a: u64, b: u64) -> f64 {
        debug_assert!(b <= a, "binomial C({a},{b}) out of range");
        if b == 0 || b >= a {
            return 0.0;
        }
        self.get(a) - self.get(b) - self.get(a - b)
    }
}

#[inline]
fn logadd(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln S(n, k) for k = 0..=kmax (Stirling numbers of the second kind), via the
/// recurrence S(n,k) = k·S(n−1,k) + S(n−1,k−1) run in log space.
fn ln_stirling2_row(n: usize, kmax: usize) -> Vec<f64> {
    let kmax = kmax.min(n);
    let mut row = vec![f64::NEG_INFINITY; kmax + 1];
    if kmax >= 1 {
        row[1] = 0.0;
    }
    let ln_k: Vec<f64> = (0..=kmax).map(|k| (k.max(1) as f64).ln()).collect();
    for m in 2..=n {
        for k in (1..=kmax.min(m)).rev() {
            row[k] = logadd(ln_k[k] + row[k], row[k - 1]);
        }
    }
    row
}

/// ln B(V, I) where B(V, I) = Σ_{i=1..I} S(V, i) counts the partitions of V
/// items into at most I nonempty groups. Monotone non-decreasing in I;
/// B(V, 1) = 1 and B(V, V) is the Bell number.
pub fn log_bell_partial(v: usize, i: usize) -> Result<f64> {
    if i < 1 || i > v {
        return Err(Error::InvalidArgument(format!(
            "partial Bell B({v},{i}) needs 1 ≤ I ≤ V"
        )));
    }
    let row = ln_stirling2_row(v, i);
    Ok(row[1..=i].iter().copied().fold(f64::NEG_INFINITY, logadd))
}

/// Cache of ln B(V, i) for one fixed V, grown geometrically on demand.
struct BellMemo {
    n: usize,
    /// lnb[i] = ln B(n, i) for i = 1..lnb.len() (index 0 unused).
    lnb: Vec<f64>,
}

impl BellMemo {
    fn new(n: usize) -> BellMemo {
        BellMemo { n, lnb: Vec::new() }
    }

    fn get(&mut self, i: usize) -> f64 {
        debug_assert!((1..=self.n).contains(&i));
        if i >= self.lnb.len() {
            let kmax = (2 * self.lnb.len()).max(i).max(8).min(self.n);
            let row = ln_stirling2_row(self.n, kmax);
            let mut lnb = vec![f64::NEG_INFINITY; kmax + 1];
            let mut acc = f64::NEG_INFINITY;
            for (k, &s) in row.iter().enumerate().skip(1) {
                acc = logadd(acc, s);
                lnb[k] = acc;
            }
            self.lnb = lnb;
        }
        self.lnb[i]
    }
}

/// Contingency sufficient statistics of a pair table: marginal counts, both
/// sparse adjacency views, and the shared factorial/Bell caches the criterion
/// needs.
pub struct CoocStats {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub n: u64,
    /// n_v. — records per distinct row value.
    pub row_marg: Vec<u64>,
    /// n_.w — records per distinct column value.
    pub col_marg: Vec<u64>,
    /// Per row value: sorted (col value, count) with count > 0.
    pub row_adj: Vec<Vec<(u32, u32)>>,
    /// Per column value: sorted (row value, count).
    pub col_adj: Vec<Vec<(u32, u32)>>,
    lnfact: LnFact,
    bell: [Mutex<BellMemo>; 2],
}

impl CoocStats {
    pub fn v(&self) -> usize {
        self.row_labels.len()
    }

    pub fn w(&self) -> usize {
        self.col_labels.len()
    }

    pub fn labels(&self, dim: Dim) -> &[String] {
        match dim {
            Dim::Row => &self.row_labels,
            Dim::Col => &self.col_labels,
        }
    }

    pub fn n_values(&self, dim: Dim) -> usize {
        self.labels(dim).len()
    }

    fn marg(&self, dim: Dim) -> &[u64] {
        match dim {
            Dim::Row => &self.row_marg,
            Dim::Col => &self.col_marg,
        }
    }

    fn adj(&self, dim: Dim) -> &[Vec<(u32, u32)>] {
        match dim {
            Dim::Row => &self.row_adj,
            Dim::Col => &self.col_adj,
        }
    }

    fn ln_bell(&self, dim: Dim, groups: usize) -> f64 {
        self.bell[dim.idx()].lock().unwrap().get(groups)
    }

    #[inline]
    pub(crate) fn lnfact(&self) -> &LnFact {
        &self.lnfact
    }
}

/// Aggregates a pair table into its contingency statistics.
pub fn build_stats(pairs: &PairTable) -> CoocStats {
    let v = pairs.instance_labels.len();
    let w = pairs.part_labels.len();
    let mut counts: HashMap<(u32, u32), u32> = HashMap::with_capacity(pairs.records.len());
    let mut row_marg = vec![0u64; v];
    let mut col_marg = vec![0u64; w];
    for &(a, b) in &pairs.records {
        *counts.entry((a, b)).or_insert(0) += 1;
        row_marg[a as usize] += 1;
        col_marg[b as usize] += 1;
    }
    let mut row_adj: Vec<Vec<(u32, u32)>> = vec![Vec::new(); v];
    let mut col_adj: Vec<Vec<(u32, u32)>> = vec![Vec::new(); w];
    for (&(a, b), &c) in &counts {
        row_adj[a as usize].push((b, c));
        col_adj[b as usize].push((a, c));
    }
    for adj in row_adj.iter_mut().chain(col_adj.iter_mut()) {
        adj.sort_unstable();
    }
    let n = pairs.records.len() as u64;
    let lnfact = LnFact::new(n as usize + v + w + 2);
    CoocStats {
        row_labels: pairs.instance_labels.clone(),
        col_labels: pairs.part_labels.clone(),
        n,
        row_marg,
        col_marg,
        row_adj,
        col_adj,
        lnfact,
        bell: [Mutex::new(BellMemo::new(v)), Mutex::new(BellMemo::new(w))],
    }
}

/// A grid model: one group id per value on each dimension, with all derived
/// counts and the cached criterion value.
#[derive(Debug, Clone)]
pub struct CoclusterModel {
    assign: [Vec<u32>; 2],
    groups: [usize; 2],
    /// N_ij, dense row-major I×J.
    cells: Vec<u64>,
    /// N_i. / N_.j per group.
    group_n: [Vec<u64>; 2],
    /// m_i. / m_.j — number of values per group.
    group_m: [Vec<u32>; 2],
    cost: f64,
}

/// ln of the per-group allocation term: ways to distribute `n` records over
/// `m` parts, as the criterion counts them. Zero-record groups contribute
/// nothing.
#[inline]
fn ln_group_alloc(lnfact: &LnFact, n: u64, m: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        lnfact.ln_binom(n + m - 1, n - 1)
    }
}

/// Full evaluation of the criterion, in nats.
pub fn criterion(model: &CoclusterModel, stats: &CoocStats) -> f64 {
    let lf = stats.lnfact();
    let (i, j) = (model.groups[0], model.groups[1]);
    let g = (i * j) as u64;
    let mut c = (stats.v() as f64).ln() + (stats.w() as f64).ln();
    c += stats.ln_bell(Dim::Row, i) + stats.ln_bell(Dim::Col, j);
    c += lf.ln_binom(stats.n + g - 1, g - 1);
    for dim in [Dim::Row, Dim::Col] {
        let d = dim.idx();
        for (&n, &m) in model.group_n[d].iter().zip(&model.group_m[d]) {
            c += ln_group_alloc(lf, n, m as u64);
            c += lf.get(n);
        }
    }
    c += lf.get(stats.n);
    for &cell in &model.cells {
        c -= lf.get(cell);
    }
    for &n in stats.row_marg.iter().chain(stats.col_marg.iter()) {
        c -= lf.get(n);
    }
    debug_assert!(c.is_finite());
    c
}

impl CoclusterModel {
    /// Builds a model from explicit group assignments. Group ids must be
    /// dense (every id in 0..max+1 used at least once).
    pub fn from_assignments(
        stats: &CoocStats,
        row_assign: Vec<u32>,
        col_assign: Vec<u32>,
    ) -> Result<CoclusterModel> {
        if row_assign.len() != stats.v() || col_assign.len() != stats.w() {
            return Err(Error::ModelMismatch(format!(
                "assignment lengths {}×{} do not match stats {}×{}",
                row_assign.len(),
                col_assign.len(),
                stats.v(),
                stats.w()
            )));
        }
        let assign = [row_assign, col_assign];
        let mut groups = [0usize; 2];
        let mut group_m: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
        let mut group_n: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
        for dim in [Dim::Row, Dim::Col] {
            let d = dim.idx();
            let k = match assign[d].iter().max() {
                Some(&m) => m as usize + 1,
                None => {
                    return Err(Error::ModelMismatch("empty assignment".into()));
                }
            };
            let mut m = vec![0u32; k];
            let mut n = vec![0u64; k];
            for (value, &grp) in assign[d].iter().enumerate() {
                m[grp as usize] += 1;
                n[grp as usize] += stats.marg(dim)[value];
            }
            if let Some(empty) = m.iter().position(|&c| c == 0) {
                return Err(Error::ModelMismatch(format!(
                    "group ids are not dense: group {empty} is empty"
                )));
            }
            groups[d] = k;
            group_m[d] = m;
            group_n[d] = n;
        }
        let (i, j) = (groups[0], groups[1]);
        let mut cells = vec![0u64; i * j];
        for (v, adj) in stats.row_adj.iter().enumerate() {
            let gi = assign[0][v] as usize;
            for &(w, c) in adj {
                cells[gi * j + assign[1][w as usize] as usize] += c as u64;
            }
        }
        let mut model = CoclusterModel { assign, groups, cells, group_n, group_m, cost: 0.0 };
        model.cost = criterion(&model, stats);
        Ok(model)
    }

    pub fn rows(&self) -> usize {
        self.groups[0]
    }

    pub fn cols(&self) -> usize {
        self.groups[1]
    }

    pub fn n_groups(&self, dim: Dim) -> usize {
        self.groups[dim.idx()]
    }

    /// Cached criterion value in nats.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn assignments(&self, dim: Dim) -> &[u32] {
        &self.assign[dim.idx()]
    }

    pub fn group_of(&self, dim: Dim, value: u32) -> u32 {
        self.assign[dim.idx()][value as usize]
    }

    /// N_ij for grid cell (i, j).
    pub fn cell(&self, i: usize, j: usize) -> u64 {
        self.cells[i * self.groups[1] + j]
    }

    /// N_i. / N_.j for one group.
    pub fn group_records(&self, dim: Dim, g: usize) -> u64 {
        self.group_n[dim.idx()][g]
    }

    /// m_i. / m_.j — how many values one group holds.
    pub fn group_size(&self, dim: Dim, g: usize) -> u32 {
        self.group_m[dim.idx()][g]
    }

    /// Values belonging to group `g` of `dim`, ascending.
    pub fn members(&self, dim: Dim, g: u32) -> Vec<u32> {
        self.assign[dim.idx()]
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a == g)
            .map(|(v, _)| v as u32)
            .collect()
    }

    /// Re-evaluates the criterion from scratch and replaces the cached cost
    /// (clearing any accumulated floating-point drift). Returns the change.
    pub fn resync_cost(&mut self, stats: &CoocStats) -> f64 {
        let fresh = criterion(self, stats);
        let drift = fresh - self.cost;
        self.cost = fresh;
        drift
    }

    #[inline]
    fn cell_at(&self, dim: Dim, g: usize, opp: usize) -> u64 {
        match dim {
            Dim::Row => self.cells[g * self.groups[1] + opp],
            Dim::Col => self.cells[opp * self.groups[1] + g],
        }
    }

    #[inline]
    fn cell_at_mut(&mut self, dim: Dim, g: usize, opp: usize) -> &mut u64 {
        match dim {
            Dim::Row => &mut self.cells[g * self.groups[1] + opp],
            Dim::Col => &mut self.cells[opp * self.groups[1] + g],
        }
    }

    /// Rebuilds the dense cell matrix after groups of `dim` were renumbered
    /// by `map` (old id → new id), shrinking the group count to `new_len`.
    fn remap_groups(&mut self, dim: Dim, map: &[u32], new_len: usize) {
        let d = dim.idx();
        let (i, j) = (self.groups[0], self.groups[1]);
        let (ni, nj) = match dim {
            Dim::Row => (new_len, j),
            Dim::Col => (i, new_len),
        };
        let mut cells = vec![0u64; ni * nj];
        for gi in 0..i {
            for gj in 0..j {
                let (ti, tj) = match dim {
                    Dim::Row => (map[gi] as usize, gj),
                    Dim::Col => (gi, map[gj] as usize),
                };
                cells[ti * nj + tj] += self.cells[gi * j + gj];
            }
        }
        self.cells = cells;
        self.groups = [ni, nj];
        for a in self.assign[d].iter_mut() {
            *a = map[*a as usize];
        }
        let mut n = vec![0u64; new_len];
        let mut m = vec![0u32; new_len];
        for (old, &new) in map.iter().enumerate() {
            n[new as usize] += self.group_n[d][old];
            m[new as usize] += self.group_m[d][old];
        }
        self.group_n[d] = n;
        self.group_m[d] = m;
    }
}

/// Everything about moving one value out of its group that does not depend on
/// the destination: its record count, its profile over the opposite
/// dimension's groups, and the criterion change contributed by the source
/// side. Build once per value, then price every candidate target in
/// O(profile). The value must not be alone in its group — removing a group is
/// a merge, not a move.
pub struct MoveContext {
    pub dim: Dim,
    pub value: u32,
    pub source: u32,
    /// n_v. of the moving value.
    pub weight: u64,
    /// Opposite-dimension groups the value touches, with its count there.
    touched: Vec<(u32, u64)>,
    /// Criterion change from emptying the source side.
    base_delta: f64,
}

impl MoveContext {
    pub fn new(stats: &CoocStats, model: &CoclusterModel, dim: Dim, value: u32) -> MoveContext {
        let d = dim.idx();
        let lf = stats.lnfact();
        let source = model.assign[d][value as usize];
        let s = source as usize;
        let weight = stats.marg(dim)[value as usize];
        let opp = dim.opposite();
        let opp_assign = &model.assign[opp.idx()];

        let mut profile = vec![0u64; model.groups[opp.idx()]];
        let mut touched = Vec::new();
        for &(o, c) in &stats.adj(dim)[value as usize] {
            let g = opp_assign[o as usize] as usize;
            if profile[g] == 0 {
                touched.push(g as u32);
            }
            profile[g] += c as u64;
        }
        touched.sort_unstable();
        let touched: Vec<(u32, u64)> =
            touched.into_iter().map(|g| (g, profile[g as usize])).collect();

        let (n_s, m_s) = (model.group_n[d][s], model.group_m[d][s]);
        debug_assert!(m_s >= 2, "moving a value that is alone in its group empties it");
        let mut base_delta = 0.0;
        // source group allocation + factorial terms
        base_delta -= ln_group_alloc(lf, n_s, m_s as u64) + lf.get(n_s);
        base_delta += ln_group_alloc(lf, n_s - weight, (m_s - 1) as u64) + lf.get(n_s - weight);
        // source-side cells (criterion carries −Σ ln N_ij!)
        for &(g, p) in &touched {
            let cur = model.cell_at(dim, s, g as usize);
            base_delta += lf.get(cur) - lf.get(cur - p);
        }
        MoveContext { dim, value, source, weight, touched, base_delta }
    }

    /// Criterion change if the value joins `target` (≠ source).
    pub fn delta_to(&self, stats: &CoocStats, model: &CoclusterModel, target: u32) -> f64 {
        debug_assert_ne!(target, self.source);
        let d = self.dim.idx();
        let t = target as usize;
        let lf = stats.lnfact();
        let (n_t, m_t) = (model.group_n[d][t], model.group_m[d][t]);
        let mut delta = self.base_delta;
        delta += ln_group_alloc(lf, n_t + self.weight, (m_t + 1) as u64)
            - ln_group_alloc(lf, n_t, m_t as u64);
        delta += lf.get(n_t + self.weight) - lf.get(n_t);
        for &(g, p) in &self.touched {
            let cur = model.cell_at(self.dim, t, g as usize);
            delta += lf.get(cur) - lf.get(cur + p);
        }
        delta
    }
}

fn check_move(
    stats: &CoocStats,
    model: &CoclusterModel,
    dim: Dim,
    value: u32,
    target: u32,
) -> Result<()> {
    let d = dim.idx();
    if value as usize >= stats.n_values(dim) {
        return Err(Error::InvalidArgument(format!("unknown value index {value}")));
    }
    if target as usize >= model.groups[d] || target == model.assign[d][value as usize] {
        return Err(Error::InvalidArgument(format!("invalid move target {target}")));
    }
    if model.group_m[d][model.assign[d][value as usize] as usize] == 1 {
        return Err(Error::InvalidArgument(
            "move would empty its source group; merge the groups instead".into(),
        ));
    }
    Ok(())
}

/// Criterion change if `value` moves from its current group to `target`.
/// Moves that would empty the source group are rejected — that change in
/// group count is a merge.
pub fn delta_move_value(
    stats: &CoocStats,
    model: &CoclusterModel,
    dim: Dim,
    value: u32,
    target: u32,
) -> Result<f64> {
    check_move(stats, model, dim, value, target)?;
    Ok(MoveContext::new(stats, model, dim, value).delta_to(stats, model, target))
}

/// Criterion change if groups `a` and `b` of `dim` merge. Symmetric in its
/// group arguments.
pub fn delta_merge(
    stats: &CoocStats,
    model: &CoclusterModel,
    dim: Dim,
    a: u32,
    b: u32,
) -> Result<f64> {
    let k = model.groups[dim.idx()];
    if a == b || a as usize >= k || b as usize >= k {
        return Err(Error::InvalidArgument(format!(
            "merge needs two distinct groups below {k}, got {a} and {b}"
        )));
    }
    Ok(delta_merge_unchecked(stats, model, dim, a, b))
}

pub(crate) fn delta_merge_unchecked(
    stats: &CoocStats,
    model: &CoclusterModel,
    dim: Dim,
    a: u32,
    b: u32,
) -> f64 {
    debug_assert_ne!(a, b);
    let d = dim.idx();
    let (a, b) = (a as usize, b as usize);
    let lf = stats.lnfact();
    let (i, j) = (model.groups[0], model.groups[1]);
    let (groups, opp_groups) = match dim {
        Dim::Row => (i, j),
        Dim::Col => (j, i),
    };
    let mut delta = stats.ln_bell(dim, groups - 1) - stats.ln_bell(dim, groups);
    let g_old = (groups * opp_groups) as u64;
    let g_new = g_old - opp_groups as u64;
    delta += lf.ln_binom(stats.n + g_new - 1, g_new - 1)
        - lf.ln_binom(stats.n + g_old - 1, g_old - 1);
    let (n_a, m_a) = (model.group_n[d][a], model.group_m[d][a]);
    let (n_b, m_b) = (model.group_n[d][b], model.group_m[d][b]);
    delta += ln_group_alloc(lf, n_a + n_b, (m_a + m_b) as u64)
        - ln_group_alloc(lf, n_a, m_a as u64)
        - ln_group_alloc(lf, n_b, m_b as u64);
    delta += lf.get(n_a + n_b) - lf.get(n_a) - lf.get(n_b);
    for g in 0..opp_groups {
        let ca = model.cell_at(dim, a, g);
        let cb = model.cell_at(dim, b, g);
        delta += lf.get(ca) + lf.get(cb) - lf.get(ca + cb);
    }
    delta
}

impl CoclusterModel {
    /// Moves `value` to `target`, updating counts and the cached cost.
    /// Rejects moves that would empty the source group.
    pub fn apply_move_value(
        &mut self,
        stats: &CoocStats,
        dim: Dim,
        value: u32,
        target: u32,
    ) -> Result<()> {
        check_move(stats, self, dim, value, target)?;
        let ctx = MoveContext::new(stats, self, dim, value);
        let delta = ctx.delta_to(stats, self, target);
        self.apply_prepared_move(&ctx, target, delta);
        Ok(())
    }

    /// Applies a move already priced through its [`MoveContext`], reusing the
    /// computed profile and delta.
    pub(crate) fn apply_prepared_move(&mut self, ctx: &MoveContext, target: u32, delta: f64) {
        let d = ctx.dim.idx();
        let (s, t) = (ctx.source as usize, target as usize);
        for &(g, p) in &ctx.touched {
            *self.cell_at_mut(ctx.dim, s, g as usize) -= p;
            *self.cell_at_mut(ctx.dim, t, g as usize) += p;
        }
        self.group_n[d][s] -= ctx.weight;
        self.group_n[d][t] += ctx.weight;
        self.group_m[d][s] -= 1;
        self.group_m[d][t] += 1;
        self.assign[d][ctx.value as usize] = target;
        self.cost += delta;
    }

    /// Merges group `b` into group `a` (order irrelevant), compacting ids and
    /// updating the cached cost.
    pub fn apply_merge(&mut self, stats: &CoocStats, dim: Dim, a: u32, b: u32) -> Result<()> {
        let delta = delta_merge(stats, self, dim, a, b)?;
        let d = dim.idx();
        let (keep, gone) = (a.min(b) as usize, a.max(b) as usize);
        let k = self.groups[d];
        let mut map: Vec<u32> = (0..k as u32).collect();
        map[gone] = keep as u32;
        if gone != k - 1 {
            map[k - 1] = gone as u32;
        }
        self.remap_groups(dim, &map, k - 1);
        self.cost += delta;
        Ok(())
    }
}

/// The 1×1 independence baseline.
pub fn null_model(stats: &CoocStats) -> CoclusterModel {
    CoclusterModel::from_assignments(
        stats,
        vec![0; stats.v()],
        vec![0; stats.w()],
    )
    .expect("1×1 model is always valid")
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ModelFile {
    cost: f64,
    rows: BTreeMap<String, u32>,
    cols: BTreeMap<String, u32>,
}

impl CoclusterModel {
    pub fn save(&self, path: impl AsRef<Path>, stats: &CoocStats) -> Result<()> {
        let path = path.as_ref();
        let to_map = |dim: Dim| -> BTreeMap<String, u32> {
            stats
                .labels(dim)
                .iter()
                .cloned()
                .zip(self.assign[dim.idx()].iter().copied())
                .collect()
        };
        let file = ModelFile { cost: self.cost, rows: to_map(Dim::Row), cols: to_map(Dim::Col) };
        let out = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(out), &file)?;
        Ok(())
    }

    /// Loads a model and verifies it against `stats`: label sets must match
    /// exactly and the stored cost must agree with a recomputation.
    pub fn load(path: impl AsRef<Path>, stats: &CoocStats) -> Result<CoclusterModel> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed: ModelFile = serde_json::from_reader(BufReader::new(file))?;
        let assign_of = |dim: Dim, map: &BTreeMap<String, u32>| -> Result<Vec<u32>> {
            let labels = stats.labels(dim);
            let only_b: Vec<String> = map
                .keys()
                .filter(|k| !labels.iter().any(|l| l == *k))
                .cloned()
                .collect();
            let mut assign = Vec::with_capacity(labels.len());
            let mut only_a = Vec::new();
            for label in labels {
                match map.get(label) {
                    Some(&g) => assign.push(g),
                    None => only_a.push(label.clone()),
                }
            }
            if !only_a.is_empty() || !only_b.is_empty() {
                return Err(Error::ItemSetMismatch {
                    only_a: only_a.len(),
                    only_b: only_b.len(),
                });
            }
            Ok(assign)
        };
        let rows = assign_of(Dim::Row, &parsed.rows)?;
        let cols = assign_of(Dim::Col, &parsed.cols)?;
        let model = CoclusterModel::from_assignments(stats, rows, cols)?;
        let tol = 1e-9 * model.cost.abs().max(1.0);
        if (model.cost - parsed.cost).abs() > tol {
            return Err(Error::ModelMismatch(format!(
                "stored cost {} disagrees with recomputed {}",
                parsed.cost, model.cost
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Four records over two row values and two column values:
    /// (v1,w1)×2, (v1,w2), (v2,w2).
    pub(crate) fn d0() -> CoocStats {
        let pairs = PairTable {
            instance_labels: vec!["v1".into(), "v2".into()],
            part_labels: vec!["w1".into(), "w2".into()],
            records: vec![(0, 0), (0, 0), (0, 1), (1, 1)],
        };
        build_stats(&pairs)
    }

    #[test]
    fn d0_marginals() {
        let stats = d0();
        assert_eq!((stats.v(), stats.w(), stats.n), (2, 2, 4));
        assert_eq!(stats.row_marg, vec![3, 1]);
        assert_eq!(stats.col_marg, vec![2, 2]);
        assert_eq!(stats.row_adj[0], vec![(0, 2), (1, 1)]);
        assert_eq!(stats.col_adj[1], vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn single_record_stats() {
        let pairs = PairTable {
            instance_labels: vec!["a".into()],
            part_labels: vec!["b".into()],
            records: vec![(0, 0)],
        };
        let stats = build_stats(&pairs);
        assert_eq!((stats.v(), stats.w(), stats.n), (1, 1, 1));
        let model = null_model(&stats);
        assert_relative_eq!(model.cost(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lnfact_matches_direct_sum() {
        let lf = LnFact::new(50);
        let mut direct = 0.0;
        for n in 1..=50u64 {
            direct += (n as f64).ln();
            assert_relative_eq!(lf.get(n), direct, max_relative = 1e-13);
        }
        // beyond the table, the series tail is consistent with the table
        let big = LnFact::new(2000);
        let small = LnFact::new(100);
        for n in [150u64, 500, 1999] {
            assert_relative_eq!(small.get(n), big.get(n), max_relative = 1e-12);
        }
    }

    #[test]
    fn binomials() {
        let lf = LnFact::new(100);
        assert_relative_eq!(lf.ln_binom(5, 3), 10f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(lf.ln_binom(7, 3), 35f64.ln(), max_relative = 1e-12);
        assert_eq!(lf.ln_binom(4, 0), 0.0);
        assert_eq!(lf.ln_binom(4, 4), 0.0);
    }

    #[test]
    fn partial_bell_small_values() {
        for v in 1..=8 {
            assert_eq!(log_bell_partial(v, 1).unwrap(), 0.0);
        }
        assert_relative_eq!(log_bell_partial(4, 2).unwrap(), 8f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(log_bell_partial(3, 3).unwrap(), 5f64.ln(), max_relative = 1e-12);
        // monotone non-decreasing in I
        let mut prev = f64::NEG_INFINITY;
        for i in 1..=10 {
            let b = log_bell_partial(10, i).unwrap();
            assert!(b >= prev);
            prev = b;
        }
        assert!(log_bell_partial(3, 4).is_err());
        assert!(log_bell_partial(3, 0).is_err());
    }

    #[test]
    fn d0_null_cost_is_ln_9600() {
        let stats = d0();
        let model = null_model(&stats);
        assert_relative_eq!(model.cost(), 9600f64.ln(), max_relative = 1e-9);
    }

    #[test]
    fn d0_finest_cost_is_ln_80640() {
        let stats = d0();
        let model = CoclusterModel::from_assignments(&stats, vec![0, 1], vec![0, 1]).unwrap();
        assert_relative_eq!(model.cost(), 80640f64.ln(), max_relative = 1e-9);
    }

    #[test]
    fn relabeling_groups_leaves_cost_unchanged() {
        let stats = d0();
        let a = CoclusterModel::from_assignments(&stats, vec![0, 1], vec![0, 1]).unwrap();
        let b = CoclusterModel::from_assignments(&stats, vec![1, 0], vec![1, 0]).unwrap();
        assert_relative_eq!(a.cost(), b.cost(), max_relative = 1e-12);
    }

    #[test]
    fn from_assignments_rejects_sparse_ids() {
        let stats = d0();
        assert!(CoclusterModel::from_assignments(&stats, vec![0, 2], vec![0, 1]).is_err());
        assert!(CoclusterModel::from_assignments(&stats, vec![0], vec![0, 1]).is_err());
    }

    /// Eight records over three row and three column values, plus one row
    /// value (v4) that appears in no record.
    fn d1() -> CoocStats {
        let pairs = PairTable {
            instance_labels: vec!["v1".into(), "v2".into(), "v3".into(), "v4".into()],
            part_labels: vec!["w1".into(), "w2".into(), "w3".into()],
            records: vec![(0, 0), (0, 0), (0, 1), (1, 1), (1, 1), (1, 1), (2, 2), (2, 0)],
        };
        build_stats(&pairs)
    }

    #[test]
    fn move_delta_matches_recomputation() {
        let stats = d1();
        let model =
            CoclusterModel::from_assignments(&stats, vec![0, 0, 1, 1], vec![0, 1, 1]).unwrap();
        for (dim, value, target) in
            [(Dim::Row, 0u32, 1u32), (Dim::Row, 1, 1), (Dim::Col, 1, 0), (Dim::Col, 2, 0)]
        {
            let delta = delta_move_value(&stats, &model, dim, value, target).unwrap();
            let mut moved = model.clone();
            moved.apply_move_value(&stats, dim, value, target).unwrap();
            let fresh = criterion(&moved, &stats);
            assert_relative_eq!(model.cost() + delta, fresh, max_relative = 1e-9);
            assert_relative_eq!(moved.cost(), fresh, max_relative = 1e-9);
        }
    }

    #[test]
    fn move_then_move_back_sums_to_zero() {
        let stats = d1();
        let mut model =
            CoclusterModel::from_assignments(&stats, vec![0, 0, 1, 1], vec![0, 1, 1]).unwrap();
        let there = delta_move_value(&stats, &model, Dim::Row, 0, 1).unwrap();
        model.apply_move_value(&stats, Dim::Row, 0, 1).unwrap();
        let back = delta_move_value(&stats, &model, Dim::Row, 0, 0).unwrap();
        assert!((there + back).abs() < 1e-9, "deltas {there} + {back}");
    }

    #[test]
    fn zero_count_value_moves_touch_only_size_terms() {
        let stats = d1();
        assert_eq!(stats.row_marg[3], 0);
        let model =
            CoclusterModel::from_assignments(&stats, vec![0, 0, 1, 1], vec![0, 1, 1]).unwrap();
        let delta = delta_move_value(&stats, &model, Dim::Row, 3, 0).unwrap();
        let mut moved = model.clone();
        moved.apply_move_value(&stats, Dim::Row, 3, 0).unwrap();
        // cells and record counts unchanged; only the m-dependent terms moved
        assert_eq!(moved.group_records(Dim::Row, 0), model.group_records(Dim::Row, 0));
        assert_relative_eq!(
            model.cost() + delta,
            criterion(&moved, &stats),
            max_relative = 1e-9
        );
    }

    #[test]
    fn illegal_moves_are_rejected() {
        let stats = d1();
        let model =
            CoclusterModel::from_assignments(&stats, vec![0, 0, 1, 2], vec![0, 1, 1]).unwrap();
        // v3 is alone in row group 1
        assert!(delta_move_value(&stats, &model, Dim::Row, 2, 0).is_err());
        // unknown value / bad target / no-op target
        assert!(delta_move_value(&stats, &model, Dim::Row, 9, 0).is_err());
        assert!(delta_move_value(&stats, &model, Dim::Row, 0, 5).is_err());
        assert!(delta_move_value(&stats, &model, Dim::Row, 0, 0).is_err());
    }

    #[test]
    fn merge_delta_matches_recomputation() {
        let stats = d0();
        let model = CoclusterModel::from_assignments(&stats, vec![0, 1], vec![0, 1]).unwrap();
        for dim in [Dim::Row, Dim::Col] {
            let delta = delta_merge(&stats, &model, dim, 0, 1).unwrap();
            // symmetric in group order
            assert_eq!(delta, delta_merge(&stats, &model, dim, 1, 0).unwrap());
            let mut merged = model.clone();
            merged.apply_merge(&stats, dim, 0, 1).unwrap();
            assert_relative_eq!(
                model.cost() + delta,
                criterion(&merged, &stats),
                max_relative = 1e-9
            );
            assert_relative_eq!(merged.cost(), criterion(&merged, &stats), max_relative = 1e-9);
            assert_eq!(merged.n_groups(dim), 1);
        }
        assert!(delta_merge(&stats, &model, Dim::Row, 1, 1).is_err());
    }

    #[test]
    fn merging_everything_reaches_null_cost() {
        let stats = d0();
        let mut model = CoclusterModel::from_assignments(&stats, vec![0, 1], vec![0, 1]).unwrap();
        model.apply_merge(&stats, Dim::Row, 0, 1).unwrap();
        model.apply_merge(&stats, Dim::Col, 1, 0).unwrap();
        assert_relative_eq!(model.cost(), 9600f64.ln(), max_relative = 1e-9);
    }

    #[test]
    fn model_json_round_trip() {
        let stats = d0();
        let model = CoclusterModel::from_assignments(&stats, vec![0, 1], vec![0, 1]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        model.save(f.path(), &stats).unwrap();
        let back = CoclusterModel::load(f.path(), &stats).unwrap();
        assert_eq!(back.assignments(Dim::Row), model.assignments(Dim::Row));
        assert_eq!(back.assignments(Dim::Col), model.assignments(Dim::Col));
        assert_relative_eq!(back.cost(), model.cost(), max_relative = 1e-12);
    }

    #[test]
    fn model_load_rejects_tampered_cost() {
        let stats = d0();
        let model = null_model(&stats);
        let f = tempfile::NamedTempFile::new().unwrap();
        model.save(f.path(), &stats).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        let tampered = text.replace(&format!("{}", model.cost()), "1.0");
        std::fs::write(f.path(), tampered).unwrap();
        assert!(matches!(
            CoclusterModel::load(f.path(), &stats),
            Err(Error::ModelMismatch(_))
        ));
    }

    #[test]
    fn model_load_rejects_label_mismatch() {
        let stats = d0();
        let model = null_model(&stats);
        let f = tempfile::NamedTempFile::new().unwrap();
        model.save(f.path(), &stats).unwrap();
        let other = build_stats(&PairTable {
            instance_labels: vec!["v1".into(), "vX".into()],
            part_labels: vec!["w1".into(), "w2".into()],
            records: vec![(0, 0), (0, 0), (0, 1), (1, 1)],
        });
        assert!(matches!(
            CoclusterModel::load(f.path(), &other),
            Err(Error::ItemSetMismatch { .. })
        ));
    }

    #[test]
    fn resync_clears_drift() {
        let stats = d1();
        let mut model =
            CoclusterModel::from_assignments(&stats, vec![0, 0, 1, 1], vec![0, 1, 1]).unwrap();
        model.apply_move_value(&stats, Dim::Col, 1, 0).unwrap();
        let drift = model.resync_cost(&stats);
        assert!(drift.abs() < 1e-9);
    }
}
