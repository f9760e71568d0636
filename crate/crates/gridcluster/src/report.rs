//! Exploratory artifacts for a fitted grid: per-cell mutual-information
//! contrasts, cluster characterization, and json/csv/svg exports.
//!
//! The contrast of cell (i, j) is its contribution to the mutual information
//! between the two cluster partitions, (N_ij/N)·ln(N_ij·N/(N_i.·N_.j)) nats —
//! positive where the cell is over-represented relative to independence,
//! negative where under-represented, and 0 for empty cells by the p·ln p
//! limit convention.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use serde::Serialize;

use crate::modl::{CoclusterModel, CoocStats, Dim};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Over,
    Under,
    Neutral,
}

/// Dense row-major I×J contrast grid.
#[derive(Debug, Clone)]
pub struct CellContrast {
    pub rows: usize,
    pub cols: usize,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
    /// Signed mutual-information contribution, nats.
    pub mi: Vec<f64>,
    pub sign: Vec<Sign>,
}

impl CellContrast {
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    /// Mutual information of the cluster pair (sum of all cells).
    pub fn total_mi(&self) -> f64 {
        self.mi.iter().sum()
    }
}

pub fn cell_contrast(model: &CoclusterModel, stats: &CoocStats) -> CellContrast {
    let (rows, cols) = (model.rows(), model.cols());
    let n = stats.n as f64;
    let mut out = CellContrast {
        rows,
        cols,
        observed: Vec::with_capacity(rows * cols),
        expected: Vec::with_capacity(rows * cols),
        mi: Vec::with_capacity(rows * cols),
        sign: Vec::with_capacity(rows * cols),
    };
    for i in 0..rows {
        let ni = model.group_records(Dim::Row, i);
        for j in 0..cols {
            let nj = model.group_records(Dim::Col, j);
            let obs = model.cell(i, j);
            let expected = ni as f64 * nj as f64 / n;
            // observed ⋛ expected ⟺ N_ij·N ⋛ N_i.·N_.j, compared exactly
            let sign = match (obs as u128 * stats.n as u128).cmp(&(ni as u128 * nj as u128)) {
                Ordering::Greater => Sign::Over,
                Ordering::Less => Sign::Under,
                Ordering::Equal => Sign::Neutral,
            };
            let mi = if obs == 0 || sign == Sign::Neutral {
                0.0
            } else {
                (obs as f64 / n) * (obs as f64 * n / (ni as f64 * nj as f64)).ln()
            };
            out.observed.push(obs);
            out.expected.push(expected);
            out.mi.push(mi);
            out.sign.push(sign);
        }
    }
    out
}

/// One opposite-dimension cluster as seen from a profiled cluster.
#[derive(Debug, Clone, Serialize)]
pub struct OppositeContrast {
    pub cluster: u32,
    /// Contrast of the shared cell, nats.
    pub mi: f64,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterProfile {
    pub cluster: u32,
    /// Records in the cluster (its grid marginal).
    pub records: u64,
    pub members: Vec<String>,
    /// Opposite-dimension clusters by descending shared-cell contrast.
    pub top: Vec<OppositeContrast>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Characterization {
    pub rows: Vec<ClusterProfile>,
    pub cols: Vec<ClusterProfile>,
}

fn member_labels(model: &CoclusterModel, stats: &CoocStats, dim: Dim, g: u32) -> Vec<String> {
    let labels = stats.labels(dim);
    model.members(dim, g).into_iter().map(|v| labels[v as usize].clone()).collect()
}

fn profiles_of(
    model: &CoclusterModel,
    stats: &CoocStats,
    contrast: &CellContrast,
    dim: Dim,
    top_t: usize,
) -> Vec<ClusterProfile> {
    let (own_n, opp_n, opp_dim) = match dim {
        Dim::Row => (contrast.rows, contrast.cols, Dim::Col),
        Dim::Col => (contrast.cols, contrast.rows, Dim::Row),
    };
    let cell_mi = |own: usize, opp: usize| match dim {
        Dim::Row => contrast.mi[contrast.idx(own, opp)],
        Dim::Col => contrast.mi[contrast.idx(opp, own)],
    };
    (0..own_n)
        .map(|g| {
            // rank ties by member sets, not ids, so relabeling cannot reorder
            let mut ranked: Vec<(u32, f64, Vec<u32>)> = (0..opp_n)
                .map(|o| (o as u32, cell_mi(g, o), model.members(opp_dim, o as u32)))
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.2.cmp(&b.2)));
            let top = ranked
                .into_iter()
                .take(top_t)
                .map(|(o, mi, _)| OppositeContrast {
                    cluster: o,
                    mi,
                    members: member_labels(model, stats, opp_dim, o),
                })
                .collect();
            ClusterProfile {
                cluster: g as u32,
                records: model.group_records(dim, g),
                members: member_labels(model, stats, dim, g as u32),
                top,
            }
        })
        .collect()
}

/// Profiles every cluster of both dimensions: its members plus the `top_t`
/// opposite clusters ranked by the shared cell's contrast.
pub fn characterize_clusters(
    model: &CoclusterModel,
    stats: &CoocStats,
    top_t: usize,
) -> Characterization {
    let contrast = cell_contrast(model, stats);
    Characterization {
        rows: profiles_of(model, stats, &contrast, Dim::Row, top_t),
        cols: profiles_of(model, stats, &contrast, Dim::Col, top_t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
    Svg,
}

#[derive(Serialize)]
struct CellOut {
    row: usize,
    col: usize,
    observed: u64,
    expected: f64,
    mi: f64,
    sign: Sign,
}

#[derive(Serialize)]
struct ContrastOut {
    rows: usize,
    cols: usize,
    total_mi: f64,
    cells: Vec<CellOut>,
}

#[derive(Serialize)]
struct GridReport {
    model: ModelOut,
    contrast: ContrastOut,
}

#[derive(Serialize)]
struct ModelOut {
    cost: f64,
    rows: BTreeMap<String, u32>,
    cols: BTreeMap<String, u32>,
}

fn float_cell(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the contrast grid in the requested format: `json` carries the model
/// and every cell, `csv` the signed contrast matrix, `svg` a heatmap with one
/// rectangle per cell (red over, blue under, white at zero, intensity
/// proportional to |mi| over the grid maximum).
pub fn export_grid(
    model: &CoclusterModel,
    stats: &CoocStats,
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let contrast = cell_contrast(model, stats);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        ExportFormat::Json => {
            let to_map = |dim: Dim| -> BTreeMap<String, u32> {
                stats
                    .labels(dim)
                    .iter()
                    .cloned()
                    .zip(model.assignments(dim).iter().copied())
                    .collect()
            };
            let cells = (0..contrast.rows)
                .flat_map(|i| (0..contrast.cols).map(move |j| (i, j)))
                .map(|(i, j)| {
                    let k = contrast.idx(i, j);
                    CellOut {
                        row: i,
                        col: j,
                        observed: contrast.observed[k],
                        expected: contrast.expected[k],
                        mi: contrast.mi[k],
                        sign: contrast.sign[k],
                    }
                })
                .collect();
            let report = GridReport {
                model: ModelOut {
                    cost: model.cost(),
                    rows: to_map(Dim::Row),
                    cols: to_map(Dim::Col),
                },
                contrast: ContrastOut {
                    rows: contrast.rows,
                    cols: contrast.cols,
                    total_mi: contrast.total_mi(),
                    cells,
                },
            };
            serde_json::to_writer_pretty(&mut w, &report)?;
        }
        ExportFormat::Csv => {
            let header: Vec<String> =
                (0..contrast.cols).map(|j| format!("c{j}")).collect();
            writeln!(w, "cluster,{}", header.join(",")).map_err(|e| Error::io(path, e))?;
            for i in 0..contrast.rows {
                let cells: Vec<String> = (0..contrast.cols)
                    .map(|j| float_cell(contrast.mi[contrast.idx(i, j)]))
                    .collect();
                writeln!(w, "r{i},{}", cells.join(",")).map_err(|e| Error::io(path, e))?;
            }
        }
        ExportFormat::Svg => {
            const CELL: usize = 40;
            let (width, height) = (contrast.cols * CELL, contrast.rows * CELL);
            let max = contrast.mi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            writeln!(
                w,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
                 width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
            )
            .map_err(|e| Error::io(path, e))?;
            for i in 0..contrast.rows {
                for j in 0..contrast.cols {
                    let k = contrast.idx(i, j);
                    let t = if max > 0.0 { contrast.mi[k].abs() / max } else { 0.0 };
                    let c = (255.0 * (1.0 - t)).round() as u8;
                    let fill = match contrast.sign[k] {
                        Sign::Over => format!("rgb(255,{c},{c})"),
                        Sign::Under => format!("rgb({c},{c},255)"),
                        Sign::Neutral => "rgb(255,255,255)".to_owned(),
                    };
                    writeln!(
                        w,
                        "  <rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" \
                         fill=\"{fill}\"/>",
                        j * CELL,
                        i * CELL,
                    )
                    .map_err(|e| Error::io(path, e))?;
                }
            }
            writeln!(w, "</svg>").map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
