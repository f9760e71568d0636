//! File-based pipeline CLI: every stage reads the previous stage's artifact
//! and writes its own, so a whole experiment is a replayable shell script.
//!
//! Each successful invocation is appended to a run manifest (`--manifest`,
//! default `gridcluster-manifest.json`) holding the tool version, the argv,
//! salient parameters, SHA-256 digests of all inputs and outputs, and a
//! timestamp. Timestamps live only in the manifest: re-running a command on
//! identical inputs with the same seed reproduces every JSON artifact byte
//! for byte (for `cocluster` this assumes the budget did not truncate the
//! search). Entry ids are digests of (version, argv, input hashes), so
//! identical runs share an id.
//!
//! Exit codes: 0 success, 1 usage error (bad flags/subcommands), 2 data
//! error (anything raised as [`crate::Error`]).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binarize::{
    apply_binning, fit_binning, to_pair_table, BinConfig, BinningModel, MissingPolicy, PairTable,
};
use crate::coarsen::{build_hierarchy, model_at_info, model_at_size};
use crate::compare::{
    chi2, confusion, hungarian, mutual_information, retained_mi, Objective, Partition,
};
use crate::dataset::{infer_schema, load_dataset, LoadOptions, Schema};
use crate::mca::{build_cdt, contributions, fit_mca, kmeans_factor, McaResult};
use crate::modl::{build_stats, CoclusterModel, CoocStats, Dim};
use crate::report::{cell_contrast, characterize_clusters, export_grid, ExportFormat};
use crate::search::{optimize, SearchConfig};
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gridcluster",
    version,
    propagate_version = true,
    about = "Co-cluster mixed-type data tables via binarization and a parameter-free MAP grid criterion",
    after_help = "Set GRIDCLUSTER_THREADS to cap worker threads during search."
)]
struct Cli {
    /// Run manifest to append to (created if absent).
    #[arg(long, global = true, default_value = "gridcluster-manifest.json")]
    manifest: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset schema operations.
    Schema {
        #[command(subcommand)]
        cmd: SchemaCmd,
    },
    /// Fit a binning model: ≤ k parts per variable.
    Bin(BinArgs),
    /// Expand a binned dataset into the (instance, variable-part) pair table.
    Pairs(PairsArgs),
    /// Optimize a co-clustering grid over a pair table.
    Cocluster(CoclusterArgs),
    /// Simplify a grid model along its best-merge hierarchy.
    Coarsen(CoarsenArgs),
    /// Render a grid model as per-cell mutual-information contrasts.
    Report(ReportArgs),
    /// Correspondence analysis of the binned table.
    Mca(McaArgs),
    /// k-means over factor coordinates (instances and categories jointly).
    Kmeans(KmeansArgs),
    /// Compare two partitions of the same items.
    Compare(CompareArgs),
}

#[derive(Subcommand)]
enum SchemaCmd {
    /// Infer variable kinds from a CSV sample.
    Infer(SchemaInferArgs),
}

#[derive(Args)]
struct SchemaInferArgs {
    /// Input CSV with a header row.
    data: PathBuf,
    /// Where to write the schema JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Data rows to sample; a column is numeric iff every sampled non-empty
    /// cell parses as a finite number.
    #[arg(long, default_value_t = 1000)]
    sample_rows: usize,
    /// Column holding instance ids (excluded from the variables).
    #[arg(long)]
    id_column: Option<String>,
}

#[derive(Args)]
struct BinArgs {
    /// Input CSV with a header row.
    data: PathBuf,
    /// Maximum parts per variable.
    #[arg(long, short)]
    k: usize,
    /// Where to write the binning model JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Schema JSON; inferred from the whole file when omitted.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Column holding instance ids.
    #[arg(long)]
    id_column: Option<String>,
    #[arg(long, value_enum, default_value_t = MissingPolicyArg::DedicatedPart)]
    missing_policy: MissingPolicyArg,
}

#[derive(Args)]
struct PairsArgs {
    /// Input CSV with a header row.
    data: PathBuf,
    /// Binning model JSON from `bin`.
    #[arg(long)]
    binning: PathBuf,
    /// Where to write the pair CSV (IdInstance,IdVarPart).
    #[arg(long, short)]
    out: PathBuf,
    /// Column holding instance ids.
    #[arg(long)]
    id_column: Option<String>,
}

#[derive(Args)]
struct CoclusterArgs {
    /// Pair CSV from `pairs`.
    pairs: PathBuf,
    /// Where to write the grid model JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Generator seed; identical seeds reproduce identical models.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Wall-clock budget; 0 means unlimited.
    #[arg(long, default_value_t = 60.0)]
    budget_seconds: f64,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Cap on initial groups per dimension (default ⌈√N⌉).
    #[arg(long)]
    initial_groups: Option<usize>,
    /// Periodically write the best model so far here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Write the best-so-far trace as CSV (elapsed_s,cost,I,J).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the instance partition as CSV (item_id,label).
    #[arg(long)]
    row_partition: Option<PathBuf>,
    /// Write the variable-part partition as CSV (item_id,label).
    #[arg(long)]
    col_partition: Option<PathBuf>,
}

#[derive(Args)]
struct CoarsenArgs {
    /// Grid model JSON from `cocluster`.
    model: PathBuf,
    /// Pair CSV the model was fitted on.
    #[arg(long)]
    pairs: PathBuf,
    /// Where to write the coarsened model JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Keep the coarsest model retaining at least this information rate
    /// (1 = full model, 0 = null model).
    #[arg(long, conflicts_with_all = ["rows", "cols"], required_unless_present = "rows")]
    info: Option<f64>,
    /// Target instance-cluster count (use with --cols).
    #[arg(long, requires = "cols", conflicts_with = "info")]
    rows: Option<usize>,
    /// Target part-cluster count (use with --rows).
    #[arg(long, requires = "rows", conflicts_with = "info")]
    cols: Option<usize>,
    /// Also write the full merge hierarchy as JSON.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Write the coarsened instance partition as CSV.
    #[arg(long)]
    row_partition: Option<PathBuf>,
    /// Write the coarsened variable-part partition as CSV.
    #[arg(long)]
    col_partition: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Grid model JSON.
    model: PathBuf,
    /// Pair CSV the model was fitted on.
    #[arg(long)]
    pairs: PathBuf,
    /// Report file; extension-independent, the format is --format.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Opposite clusters listed per profile.
    #[arg(long, default_value_t = 3)]
    top: usize,
    /// Also write per-cluster profiles (typicality-ranked members and the
    /// strongest over/under-represented opposite clusters) as JSON.
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Args)]
struct McaArgs {
    /// Input CSV with a header row.
    data: PathBuf,
    /// Binning model JSON from `bin`.
    #[arg(long)]
    binning: PathBuf,
    /// Where to write the factor-analysis artifact JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Column holding instance ids.
    #[arg(long)]
    id_column: Option<String>,
    /// Principal axes kept in the artifact and used as the default subspace
    /// for `kmeans`; defaults to every retained axis. Coordinates beyond this
    /// are dropped from the artifact (the full spectrum is kept), which keeps
    /// the file small on wide datasets.
    #[arg(long)]
    axes: Option<usize>,
    /// Write scree data as CSV (axis,eigenvalue,variance_fraction,cumulative).
    #[arg(long)]
    scree: Option<PathBuf>,
    /// Write normalized contributions per axis as JSON.
    #[arg(long)]
    contributions: Option<PathBuf>,
}

#[derive(Args)]
struct KmeansArgs {
    /// Factor-analysis artifact JSON from `mca`.
    mca: PathBuf,
    /// Cluster count.
    #[arg(long, short)]
    k: usize,
    /// Where to write the clustering JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Principal axes to cluster in; defaults to the artifact's subspace.
    #[arg(long)]
    axes: Option<usize>,
    /// Generator seed; identical seeds reproduce identical clusterings.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the instance partition as CSV (item_id,label).
    #[arg(long)]
    instance_partition: Option<PathBuf>,
    /// Write the category partition as CSV (item_id,label).
    #[arg(long)]
    category_partition: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// First partition CSV (item_id,label).
    a: PathBuf,
    /// Second partition CSV (item_id,label).
    b: PathBuf,
    /// Comparison report JSON; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Cell weights for the optimal cluster matching.
    #[arg(long, value_enum, default_value_t = WeightsArg::Mi)]
    weights: WeightsArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MissingPolicyArg {
    /// Missing cells get a dedicated part per variable.
    DedicatedPart,
    /// Rows with any missing cell are dropped.
    DropRows,
}

impl From<MissingPolicyArg> for MissingPolicy {
    fn from(a: MissingPolicyArg) -> MissingPolicy {
        match a {
            MissingPolicyArg::DedicatedPart => MissingPolicy::DedicatedPart,
            MissingPolicyArg::DropRows => MissingPolicy::DropRows,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Svg,
}

impl From<FormatArg> for ExportFormat {
    fn from(a: FormatArg) -> ExportFormat {
        match a {
            FormatArg::Json => ExportFormat::Json,
            FormatArg::Csv => ExportFormat::Csv,
            FormatArg::Svg => ExportFormat::Svg,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightsArg {
    /// Per-cell mutual-information contributions.
    Mi,
    /// Per-cell chi-squared contributions.
    Chi2,
}

/// Parses argv, runs the command, and maps the outcome to an exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<String> = argv
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(raw.iter()) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command).and_then(|record| log_run(&cli.manifest, &raw, record)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// What one stage touched, for the manifest.
struct StageRecord {
    params: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl StageRecord {
    fn new() -> StageRecord {
        StageRecord { params: BTreeMap::new(), inputs: Vec::new(), outputs: Vec::new() }
    }

    fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.insert(key.to_owned(), value.to_string());
        self
    }

    fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_owned());
        self
    }

    fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_owned());
        self
    }

    fn output_opt(&mut self, path: &Option<PathBuf>) -> &mut Self {
        if let Some(p) = path {
            self.outputs.push(p.clone());
        }
        self
    }
}

#[derive(Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Digest of (version, argv, input hashes); identical runs share an id.
    pub id: String,
    pub unix_time: u64,
    pub command: Vec<String>,
    pub params: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let read = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        hasher.update(&buf[..read]);
    }
    let out = hasher.finalize();
    Ok(hex(&out[..]))
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn digest_all(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| Ok(FileDigest { path: p.display().to_string(), sha256: sha256_file(p)? }))
        .collect()
}

/// Appends one entry to the manifest, creating the file on first use.
fn log_run(manifest_path: &Path, argv: &[String], record: StageRecord) -> Result<()> {
    let inputs = digest_all(&record.inputs)?;
    let outputs = digest_all(&record.outputs)?;
    let version = env!("CARGO_PKG_VERSION");

    let mut hasher = Sha256::new();
    hasher.update(version.as_bytes());
    for arg in argv {
        hasher.update([0]);
        hasher.update(arg.as_bytes());
    }
    for input in &inputs {
        hasher.update([0]);
        hasher.update(input.sha256.as_bytes());
    }
    let digest = hasher.finalize();
    let id = hex(&digest[..])[..16].to_owned();

    let mut manifest = if manifest_path.exists() {
        let file = File::open(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        serde_json::from_reader(BufReader::new(file))?
    } else {
        RunManifest {
            tool: "gridcluster".to_owned(),
            version: version.to_owned(),
            entries: Vec::new(),
        }
    };
    manifest.entries.push(ManifestEntry {
        id: id.clone(),
        unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        command: argv.to_vec(),
        params: record.params,
        inputs,
        outputs,
    });
    let file = File::create(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.flush().map_err(|e| Error::io(manifest_path, e))?;
    eprintln!("logged {} -> {}", id, manifest_path.display());
    Ok(())
}

fn dispatch(command: &Command) -> Result<StageRecord> {
    match command {
        Command::Schema { cmd: SchemaCmd::Infer(args) } => schema_infer(args),
        Command::Bin(args) => bin(args),
        Command::Pairs(args) => pairs(args),
        Command::Cocluster(args) => cocluster(args),
        Command::Coarsen(args) => coarsen(args),
        Command::Report(args) => report(args),
        Command::Mca(args) => mca(args),
        Command::Kmeans(args) => kmeans(args),
        Command::Compare(args) => compare(args),
    }
}

fn load_opts(id_column: &Option<String>) -> LoadOptions {
    LoadOptions { id_column: id_column.clone(), ..LoadOptions::default() }
}

/// Loads a dataset typed by the binning model's own schema.
fn load_binned(
    data: &Path,
    binning: &Path,
    id_column: &Option<String>,
) -> Result<(BinningModel, crate::binarize::BinnedDataset)> {
    let model = BinningModel::load(binning)?;
    let schema = Schema { variables: model.variables.clone() };
    let dataset = load_dataset(data, &schema, &load_opts(id_column))?;
    warn_load(&dataset);
    let binned = apply_binning(&dataset, &model)?;
    Ok((model, binned))
}

fn warn_load(dataset: &crate::dataset::Dataset) {
    for w in dataset.warnings.iter().take(5) {
        eprintln!("warning: row {}, column {:?}: unparseable {:?} treated as missing", w.row, w.column, w.token);
    }
    if dataset.warnings.len() > 5 {
        eprintln!("warning: ... and {} more unparseable cells", dataset.warnings.len() - 5);
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn read_pairs(path: &Path) -> Result<(PairTable, CoocStats)> {
    let table = PairTable::read_csv(path)?;
    if table.records.is_empty() {
        return Err(Error::EmptyInput(format!("{}: no pair records", path.display())));
    }
    let stats = build_stats(&table);
    Ok((table, stats))
}

/// Writes one side of a grid model as an (item_id,label) partition CSV,
/// naming group g `c<g>`.
fn write_grid_partition(
    model: &CoclusterModel,
    stats: &CoocStats,
    dim: Dim,
    path: &Path,
) -> Result<()> {
    let labels = model.assignments(dim).iter().map(|g| format!("c{g}"));
    let partition = Partition::new(stats.labels(dim).to_vec(), labels)?;
    partition.write_csv(path)
}

fn schema_infer(args: &SchemaInferArgs) -> Result<StageRecord> {
    let schema = infer_schema(&args.data, args.sample_rows.max(1), args.id_column.as_deref())?;
    schema.save(&args.out)?;
    let numeric = schema
        .variables
        .iter()
        .filter(|v| v.kind == crate::dataset::VarKind::Numeric)
        .count();
    println!(
        "schema: {} variables ({} numeric, {} categorical) -> {}",
        schema.len(),
        numeric,
        schema.len() - numeric,
        args.out.display()
    );
    let mut rec = StageRecord::new();
    rec.param("sample_rows", args.sample_rows).input(&args.data).output(&args.out);
    Ok(rec)
}

fn bin(args: &BinArgs) -> Result<StageRecord> {
    let schema = match &args.schema {
        Some(path) => Schema::load(path)?,
        None => infer_schema(&args.data, usize::MAX, args.id_column.as_deref())?,
    };
    let dataset = load_dataset(&args.data, &schema, &load_opts(&args.id_column))?;
    warn_load(&dataset);
    let config = BinConfig { k: args.k, missing_policy: args.missing_policy.into() };
    let model = fit_binning(&dataset, &config)?;
    warn_all(&model.warnings);
    model.save(&args.out)?;
    println!(
        "binning: {} variables, {} parts (k={}) -> {}",
        model.variables.len(),
        model.total_parts(),
        args.k,
        args.out.display()
    );
    let mut rec = StageRecord::new();
    rec.param("k", args.k).input(&args.data).output(&args.out);
    if let Some(path) = &args.schema {
        rec.input(path);
    }
    Ok(rec)
}

fn pairs(args: &PairsArgs) -> Result<StageRecord> {
    let (model, binned) = load_binned(&args.data, &args.binning, &args.id_column)?;
    let table = to_pair_table(&binned);
    table.write_csv(&args.out)?;
    println!(
        "pairs: {} records ({} instances x {} variables) -> {}",
        table.n_records(),
        binned.n_rows(),
        model.variables.len(),
        args.out.display()
    );
    let mut rec = StageRecord::new();
    rec.input(&args.data).input(&args.binning).output(&args.out);
    Ok(rec)
}

fn cocluster(args: &CoclusterArgs) -> Result<StageRecord> {
    let (_, stats) = read_pairs(&args.pairs)?;
    let config = SearchConfig {
        seed: args.seed,
        budget_seconds: args.budget_seconds,
        restarts: args.restarts,
        initial_groups: args.initial_groups,
        checkpoint_path: args.checkpoint.clone(),
        ..SearchConfig::default()
    };
    let result = optimize(&stats, &config);
    warn_all(&result.warnings);
    let model = &result.best_model;
    model.save(&args.out, &stats)?;
    if let Some(path) = &args.trace {
        result.write_trace_csv(path)?;
    }
    if let Some(path) = &args.row_partition {
        write_grid_partition(model, &stats, Dim::Row, path)?;
    }
    if let Some(path) = &args.col_partition {
        write_grid_partition(model, &stats, Dim::Col, path)?;
    }
    println!(
        "grid: {} x {}, cost {:.4} nats, {}/{} restarts completed -> {}",
        model.rows(),
        model.cols(),
        model.cost(),
        result.restarts_completed,
        args.restarts.max(1),
        args.out.display()
    );
    let mut rec = StageRecord::new();
    rec.param("seed", args.seed)
        .param("budget_seconds", args.budget_seconds)
        .param("restarts", args.restarts)
        .input(&args.pairs)
        .output(&args.out)
        .output_opt(&args.trace)
        .output_opt(&args.row_partition)
        .output_opt(&args.col_partition);
    if let Some(g) = args.initial_groups {
        rec.param("initial_groups", g);
    }
    rec.output_opt(&args.checkpoint);
    Ok(rec)
}

fn coarsen(args: &CoarsenArgs) -> Result<StageRecord> {
    let (_, stats) = read_pairs(&args.pairs)?;
    let model = CoclusterModel::load(&args.model, &stats)?;
    let hierarchy = build_hierarchy(&model, &stats);
    warn_all(&hierarchy.warnings);
    let mut rec = StageRecord::new();
    let coarse = match (args.info, args.rows, args.cols) {
        (Some(info), _, _) => {
            if !(0.0..=1.0).contains(&info) {
                return Err(Error::InvalidArgument(format!(
                    "--info must be in [0, 1], got {info}"
                )));
            }
            rec.param("info", info);
            model_at_info(&hierarchy, &stats, info)
        }
        (None, Some(rows), Some(cols)) => {
            rec.param("rows", rows).param("cols", cols);
            model_at_size(&hierarchy, &stats, rows, cols)?
        }
        _ => unreachable!("clap enforces --info xor --rows/--cols"),
    };
    coarse.save(&args.out, &stats)?;
    if let Some(path) = &args.hierarchy {
        hierarchy.save(path)?;
    }
    if let Some(path) = &args.row_partition {
        write_grid_partition(&coarse, &stats, Dim::Row, path)?;
    }
    if let Some(path) = &args.col_partition {
        write_grid_partition(&coarse, &stats, Dim::Col, path)?;
    }
    println!(
        "coarsened: {} x {} (from {} x {}), cost {:.4} nats, info {:.4} -> {}",
        coarse.rows(),
        coarse.cols(),
        model.rows(),
        model.cols(),
        coarse.cost(),
        crate::coarsen::info_rate(coarse.cost(), &hierarchy),
        args.out.display()
    );
    rec.input(&args.model)
        .input(&args.pairs)
        .output(&args.out)
        .output_opt(&args.hierarchy)
        .output_opt(&args.row_partition)
        .output_opt(&args.col_partition);
    Ok(rec)
}

fn report(args: &ReportArgs) -> Result<StageRecord> {
    let (_, stats) = read_pairs(&args.pairs)?;
    let model = CoclusterModel::load(&args.model, &stats)?;
    export_grid(&model, &stats, args.format.into(), &args.out)?;
    if let Some(path) = &args.profiles {
        let characterization = characterize_clusters(&model, &stats, args.top);
        write_json(path, &characterization)?;
    }
    let contrast = cell_contrast(&model, &stats);
    println!(
        "report: {} x {} grid, total MI {:.4} nats -> {}",
        model.rows(),
        model.cols(),
        contrast.total_mi(),
        args.out.display()
    );
    let format_name = match args.format {
        FormatArg::Json => "json",
        FormatArg::Csv => "csv",
        FormatArg::Svg => "svg",
    };
    let mut rec = StageRecord::new();
    rec.param("format", format_name)
        .param("top", args.top)
        .input(&args.model)
        .input(&args.pairs)
        .output(&args.out)
        .output_opt(&args.profiles);
    Ok(rec)
}

/// The `mca` artifact: factor result plus the labels needed downstream.
#[derive(Serialize, Deserialize)]
pub struct McaArtifact {
    pub instance_ids: Vec<String>,
    /// Category labels, aligned with the result's category coordinates.
    pub categories: Vec<String>,
    pub variables: Vec<String>,
    /// categories[s] belongs to variables[var_of[s]].
    pub var_of: Vec<usize>,
    /// Default principal-axis count for downstream clustering; the stored
    /// coordinates are truncated to this many axes.
    pub axes: usize,
    pub result: McaResult,
}

impl McaArtifact {
    pub fn load(path: impl AsRef<Path>) -> Result<McaArtifact> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_scree(path: &Path, result: &McaResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["axis", "eigenvalue", "variance_fraction", "cumulative"])
        .map_err(|e| Error::csv(path, e))?;
    let mut cumulative = 0.0;
    for (h, mu) in result.eigenvalues.iter().enumerate() {
        let share = result.variance_fraction(h);
        cumulative += share;
        w.write_record([
            (h + 1).to_string(),
            format!("{mu:.16e}"),
            format!("{share:.16e}"),
            format!("{cumulative:.16e}"),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct ContributionsOut<'a> {
    variables: &'a [String],
    categories: &'a [String],
    contributions: crate::mca::Contributions,
}

fn mca(args: &McaArgs) -> Result<StageRecord> {
    let (_, binned) = load_binned(&args.data, &args.binning, &args.id_column)?;
    let cdt = build_cdt(&binned)?;
    warn_all(&cdt.warnings);
    let mut result = fit_mca(&cdt)?;
    let retained_full = result.retained;
    let axes = match args.axes {
        Some(a) if a < 1 => {
            return Err(Error::InvalidArgument("--axes must be at least 1".into()))
        }
        Some(a) => a.min(result.retained),
        None => result.retained,
    };
    if let Some(path) = &args.scree {
        write_scree(path, &result)?;
    }
    if let Some(path) = &args.contributions {
        let out = ContributionsOut {
            variables: &cdt.variables,
            categories: &cdt.labels,
            contributions: contributions(&result, &cdt),
        };
        write_json(path, &out)?;
    }
    let leading = result.cumulative_variance(axes.min(2).min(result.retained));
    if axes < result.retained {
        result.category_coords.truncate(axes);
        result.instance_coords.truncate(axes);
        result.retained = axes;
    }
    let artifact = McaArtifact {
        instance_ids: binned.instance_ids.clone(),
        categories: cdt.labels.clone(),
        variables: cdt.variables.clone(),
        var_of: cdt.var_of.clone(),
        axes,
        result,
    };
    write_json(&args.out, &artifact)?;
    println!(
        "mca: {} categories over {} variables, {} retained axes ({} kept), first {} axes carry {:.1}% of inertia -> {}",
        cdt.m(),
        cdt.variables.len(),
        retained_full,
        axes,
        axes.min(2),
        100.0 * leading,
        args.out.display()
    );
    let mut rec = StageRecord::new();
    rec.param("axes", axes)
        .input(&args.data)
        .input(&args.binning)
        .output(&args.out)
        .output_opt(&args.scree)
        .output_opt(&args.contributions);
    Ok(rec)
}

#[derive(Serialize)]
struct KmeansOut<'a> {
    k: usize,
    axes: usize,
    seed: u64,
    iterations: usize,
    converged: bool,
    objective: f64,
    objective_trace: &'a [f64],
    clusters: Vec<KmeansCluster>,
}

#[derive(Serialize)]
struct KmeansCluster {
    cluster: usize,
    size: usize,
    withinss: f64,
    instances: Vec<String>,
    categories: Vec<String>,
}

fn kmeans(args: &KmeansArgs) -> Result<StageRecord> {
    let artifact = McaArtifact::load(&args.mca)?;
    let axes = args.axes.unwrap_or(artifact.axes);
    let clustering = kmeans_factor(&artifact.result, args.k, axes, args.seed)?;
    let mut clusters: Vec<KmeansCluster> = (0..args.k)
        .map(|c| KmeansCluster {
            cluster: c,
            size: 0,
            withinss: clustering.withinss[c],
            instances: Vec::new(),
            categories: Vec::new(),
        })
        .collect();
    for (i, &c) in clustering.instance_assignments().iter().enumerate() {
        clusters[c as usize].instances.push(artifact.instance_ids[i].clone());
    }
    for (s, &c) in clustering.category_assignments().iter().enumerate() {
        clusters[c as usize].categories.push(artifact.categories[s].clone());
    }
    for cluster in &mut clusters {
        cluster.size = cluster.instances.len() + cluster.categories.len();
    }
    let out = KmeansOut {
        k: args.k,
        axes,
        seed: args.seed,
        iterations: clustering.iterations,
        converged: clustering.converged,
        objective: *clustering.objective_trace.last().unwrap_or(&0.0),
        objective_trace: &clustering.objective_trace,
        clusters,
    };
    write_json(&args.out, &out)?;
    if let Some(path) = &args.instance_partition {
        let labels = clustering.instance_assignments().iter().map(|c| format!("c{c}"));
        Partition::new(artifact.instance_ids.clone(), labels)?.write_csv(path)?;
    }
    if let Some(path) = &args.category_partition {
        let labels = clustering.category_assignments().iter().map(|c| format!("c{c}"));
        Partition::new(artifact.categories.clone(), labels)?.write_csv(path)?;
    }
    println!(
        "kmeans: k={} over {} axes, objective {:.4}, {} passes{} -> {}",
        args.k,
        axes,
        out.objective,
        out.iterations,
        if out.converged { "" } else { " (not converged)" },
        args.out.display()
    );
    let mut rec = StageRecord::new();
    rec.param("k", args.k)
        .param("axes", axes)
        .param("seed", args.seed)
        .input(&args.mca)
        .output(&args.out)
        .output_opt(&args.instance_partition)
        .output_opt(&args.category_partition);
    Ok(rec)
}

#[derive(Serialize)]
struct ComparisonReport {
    items: u64,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    counts: Vec<Vec<u64>>,
    total_mi: f64,
    chi2_statistic: f64,
    weights: String,
    assignment: Vec<AssignedPair>,
    /// Fraction of the confusion matrix's mutual information kept by the
    /// matching; absent when total MI is zero.
    retained_mi: Option<f64>,
}

#[derive(Serialize)]
struct AssignedPair {
    row: String,
    col: String,
    count: u64,
    mi: f64,
    chi2: f64,
}

fn compare(args: &CompareArgs) -> Result<StageRecord> {
    let a = Partition::read_csv(&args.a)?;
    let b = Partition::read_csv(&args.b)?;
    let m = confusion(&a, &b)?;
    let mi = mutual_information(&m);
    let x2 = chi2(&m);
    let weight_name = match args.weights {
        WeightsArg::Mi => "mi",
        WeightsArg::Chi2 => "chi2",
    };
    let cells = match args.weights {
        WeightsArg::Mi => &mi.cells,
        WeightsArg::Chi2 => &x2.cells,
    };
    let grid: Vec<Vec<f64>> =
        (0..m.ka).map(|i| cells[i * m.kb..(i + 1) * m.kb].to_vec()).collect();
    let matching = hungarian(&grid, Objective::Maximize)?;
    let retained = match retained_mi(&m, &matching) {
        Ok(f) => Some(f),
        Err(Error::DegenerateMi) => {
            eprintln!("warning: zero mutual information; retained fraction omitted");
            None
        }
        Err(e) => return Err(e),
    };
    let report = ComparisonReport {
        items: m.total,
        row_labels: m.row_names.clone(),
        col_labels: m.col_names.clone(),
        counts: (0..m.ka).map(|i| (0..m.kb).map(|j| m.at(i, j)).collect()).collect(),
        total_mi: mi.total,
        chi2_statistic: x2.statistic,
        weights: weight_name.to_owned(),
        assignment: matching
            .iter()
            .map(|&(i, j)| AssignedPair {
                row: m.row_names[i].clone(),
                col: m.col_names[j].clone(),
                count: m.at(i, j),
                mi: mi.cells[i * m.kb + j],
                chi2: x2.cells[i * m.kb + j],
            })
            .collect(),
        retained_mi: retained,
    };
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w).map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    let summary = match retained {
        Some(f) => format!(", retained {:.1}%", 100.0 * f),
        None => String::new(),
    };
    eprintln!(
        "compare: {} x {} confusion over {} items, MI {:.4} nats, chi2 {:.2}{}",
        m.ka, m.kb, m.total, mi.total, x2.statistic, summary
    );
    let mut rec = StageRecord::new();
    rec.param("weights", weight_name).input(&args.a).input(&args.b);
    if let Some(path) = &args.out {
        rec.output(path);
    }
    Ok(rec)
}
