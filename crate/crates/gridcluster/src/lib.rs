//! Exploratory co-clustering of mixed-type data tables.
//!
//! Tables mixing numeric and categorical columns don't fit most co-clustering
//! methods, which want a homogeneous value domain. The approach implemented
//! here sidesteps that in two steps:
//!
//! 1. **Binarize** every variable into at most `k` parts — equal-frequency
//!    intervals for numeric columns, most-frequent-value groups for
//!    categorical ones ([`binarize`]). The table then becomes a long list of
//!    `(instance, variable-part)` pairs, `n·m` records in total.
//! 2. **Co-cluster** the pair table: instances and variable parts are
//!    simultaneously partitioned into a grid of blocks, scored by an exact
//!    Bayesian (MAP) criterion in log space ([`modl`]) and optimized by an
//!    anytime greedy search with restarts ([`search`]).
//!
//! The criterion is parameter-free and regularized: on structureless data it
//! selects the 1×1 grid rather than hallucinating clusters. The optimal grid
//! can afterwards be simplified along a best-merge hierarchy to any
//! information level ([`coarsen`]), rendered as per-cell mutual-information
//! contrasts ([`report`]), and compared against a multiple-correspondence
//! baseline ([`mca`]) with confusion/assignment tooling ([`compare`]).
//!
//! The `gridcluster` binary chains these stages through files; every stage is
//! also callable as a library:
//!
//! ```no_run
//! use gridcluster::{binarize, dataset, modl, search};
//!
//! let schema = dataset::infer_schema("iris.csv", 1000, None)?;
//! let data = dataset::load_dataset("iris.csv", &schema, &Default::default())?;
//! let binning = binarize::fit_binning(&data, &binarize::BinConfig::with_k(5))?;
//! let pairs = binarize::to_pair_table(&binarize::apply_binning(&data, &binning)?);
//! let stats = modl::build_stats(&pairs);
//! let result = search::optimize(&stats, &search::SearchConfig::default());
//! println!("{} x {} grid, cost {:.3} nats",
//!          result.best_model.rows(), result.best_model.cols(), result.best_model.cost());
//! # Ok::<(), gridcluster::Error>(())
//! ```

pub mod binarize;
pub mod cli;
pub mod coarsen;
pub mod compare;
pub mod dataset;
mod error;
pub mod mca;
pub mod modl;
pub mod report;
pub mod search;

pub use error::{Error, Result};
