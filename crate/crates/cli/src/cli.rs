use std::io::Write;
use std::path::{Path, PathBuf};

use cdnerr::cluster::{decode_labels, Algorithm, ClusterModel, KMeansInit, KModesInit};
use cdnerr::features::{write_matrix, Method, TargetKind};
use cdnerr::ingest::{open_input, RecordStream, Schema, StreamOptions};
use cdnerr::log_model::{Field, LogRecord};
use cdnerr::report::{ExportFormat, ReportConfig};
use cdnerr::synth::{generate_files, preset, SynthSpec};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{
    parse_grid, ClusterSection, IngestSection, PipelineConfig, ResolvedCluster, ResolvedConfig, SelectionSection,
    DEFAULT_FEATURES,
};
use crate::error::CliError;
use crate::pipeline::{self, Artifacts, Fitted};

/// Cluster the HTTP error records of CDN proxy logs.
#[derive(Debug, Parser)]
#[command(name = "cdnerr", version, propagate_version = true)]
pub struct Cli {
    /// Worker threads for parallel stages; results do not depend on it.
    #[arg(long, global = true, env = "CDNERR_THREADS")]
    pub threads: Option<usize>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse logs, keep error lines and split them into per-host partitions.
    Ingest(IngestArgs),
    /// Rank fields by relevance to the status code.
    Select(SelectArgs),
    /// Fit K-means or K-modes on one partition.
    Cluster(ClusterArgs),
    /// Summarise a fitted model as JSON, CSV and SVG.
    Report(ReportArgs),
    /// Generate a synthetic log with planted error clusters.
    Synth(SynthArgs),
    /// Run ingest, select, cluster and report end to end.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Column layout (TOML); defaults to the canonical 28-column TSV.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Keep only lines with status >= 400 (the default).
    #[arg(long, default_value_t = true, overrides_with = "all_lines")]
    pub errors_only: bool,
    /// Keep every parsed line.
    #[arg(long)]
    pub all_lines: bool,
    #[arg(long, default_value = "auto", value_parser = parse_format)]
    pub format: cdnerr::ingest::InputFormat,
    /// Hosts need strictly more error records than this.
    #[arg(long, default_value_t = cdnerr::ingest::DEFAULT_MIN_HOST_COUNT)]
    pub min_host_count: u64,
    /// Comma-separated host allowlist.
    #[arg(long, value_delimiter = ',')]
    pub hosts: Option<Vec<String>>,
    #[arg(long, env = "CDNERR_OUT")]
    pub out: PathBuf,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Partition file written by `ingest`.
    #[arg(long)]
    pub records: PathBuf,
    /// chi2, corr, xtrees, forward or all; comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub method: Vec<String>,
    #[arg(long, default_value_t = 13)]
    pub target_size: usize,
    #[arg(long, default_value = "status_code", value_parser = parse_target)]
    pub target: TargetKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// Also write the encoded candidate matrix (`matrix.bin` + `matrix.json`).
    #[arg(long)]
    pub export_matrix: bool,
    #[arg(long, env = "CDNERR_OUT")]
    pub out: PathBuf,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long = "algo", default_value = "kmeans", value_parser = parse_algo)]
    pub algorithm: Algorithm,
    /// Number of clusters; defaults to 6 for K-means and 8 for K-modes.
    #[arg(long, conflicts_with = "grid")]
    pub k: Option<usize>,
    /// Search k in `lo:hi` by silhouette.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// A `selection.json` or a comma-separated field list; defaults to the
    /// fixed default feature list.
    #[arg(long)]
    pub features: Option<String>,
    /// Do not add the status code to the clustering features.
    #[arg(long)]
    pub no_status: bool,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// k-means++ or random for K-means; huang or random for K-modes.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long, env = "CDNERR_OUT")]
    pub out: PathBuf,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Label file; defaults to `labels.bin` next to the model.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "json,csv,svg", value_parser = parse_export)]
    pub format: Vec<ExportFormat>,
    /// Host name shown in the report; defaults to the records' host.
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long, default_value_t = 10)]
    pub min_size: usize,
    #[arg(long, env = "CDNERR_OUT")]
    pub out: PathBuf,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// host1_overload, host3_web_forbidden or host7_crawler.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub preset: Option<String>,
    /// Spec file (TOML).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub lines: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Log file to write.
    #[arg(long, required_unless_present = "print_spec")]
    pub out: Option<PathBuf>,
    /// Ground-truth file; defaults to `<out>.truth.tsv`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Print the effective spec as TOML and exit.
    #[arg(long)]
    pub print_spec: bool,
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Pipeline config (TOML); every key has a default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input files; replace the config's `inputs`.
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, env = "CDNERR_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Search k in `lo:hi` instead of using the fixed defaults.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub dry_run: bool,
}

fn parse_format(s: &str) -> Result<cdnerr::ingest::InputFormat, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown input format `{s}` (auto, delimited, jsonl)"))
}

fn parse_target(s: &str) -> Result<TargetKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown target `{s}` (status_code, error_class)"))
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: cdnerr::cluster::ClusterError| e.to_string())
}

fn parse_export(s: &str) -> Result<ExportFormat, String> {
    s.parse().map_err(|e: cdnerr::report::ReportError| e.to_string())
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    writeln!(out, "{text}").map_err(CliError::io(Path::new("<stdout>")))
}

fn read_partition(path: &Path) -> Result<Vec<LogRecord>, CliError> {
    let options = StreamOptions {
        errors_only: false,
        ..StreamOptions::default()
    };
    let mut stream = RecordStream::new(open_input(path)?, Schema::default(), options);
    let records = stream.by_ref().collect::<Result<Vec<_>, _>>()?;
    if stream.stats().parsed == 0 {
        return Err(CliError::NoParseableLines {
            lines: stream.stats().total_lines,
            rejected: stream.stats().rejected,
        });
    }
    Ok(records)
}

fn parse_methods(raw: &[String]) -> Result<std::collections::BTreeSet<Method>, CliError> {
    let mut out = std::collections::BTreeSet::new();
    for m in raw {
        if m.trim().eq_ignore_ascii_case("all") {
            out.extend(Method::ALL);
        } else {
            out.insert(m.parse::<Method>()?);
        }
    }
    Ok(out)
}

fn parse_fields(list: &str) -> Result<Vec<Field>, CliError> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<Field>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Select(a) => select(a),
        Command::Cluster(a) => cluster(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
    }
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let schema = match &a.schema {
        Some(p) => Schema::from_file(p)?,
        None => Schema::default(),
    };
    let section = IngestSection {
        min_host_count: a.min_host_count,
        hosts: a.hosts.clone(),
        format: a.format,
        ..IngestSection::default()
    };
    let errors_only = a.errors_only && !a.all_lines;
    if a.dry_run {
        return print_json(&serde_json::json!({
            "schema": schema,
            "inputs": a.input,
            "errors_only": errors_only,
            "ingest": section,
            "out": a.out,
        }));
    }
    let mut art = Artifacts::new(&a.out)?;
    let summary = pipeline::ingest_to(&mut art, &a.input, &schema, &section, errors_only)?;
    print_json(&summary)
}

fn select(a: SelectArgs) -> Result<(), CliError> {
    let section = SelectionSection {
        methods: parse_methods(&a.method)?,
        target_size: a.target_size,
        target: a.target,
        n_trees: a.n_trees,
        folds: a.folds,
        ..SelectionSection::default()
    };
    let mut config = section.to_config(0);
    config.seed = a.seed;
    if a.dry_run {
        return print_json(&serde_json::json!({ "records": a.records, "selection": config, "out": a.out }));
    }
    let records = read_partition(&a.records)?;
    let selection = pipeline::run_selection(&records, &config)?;
    let mut art = Artifacts::new(&a.out)?;
    art.write_json("selection.json", &selection.document())?;
    if a.export_matrix {
        let matrix = pipeline::encode_for_kmeans(&records, &config.candidate_fields(), config.cardinality_cap)?;
        write_matrix(&matrix, &art.path(Path::new("matrix.bin")), &art.path(Path::new("matrix.json")))?;
    }
    print_json(&serde_json::json!({ "selected": selection.selected, "fallback": selection.fallback }))
}

fn cluster_settings(a: &ClusterArgs) -> Result<ResolvedCluster, CliError> {
    let mut section = ClusterSection {
        algorithms: vec![a.algorithm],
        grid: a.grid.as_deref().map(parse_grid).transpose()?,
        include_status: !a.no_status,
        ..ClusterSection::default()
    };
    if let Some(k) = a.k {
        section.kmeans.n_clusters = k;
        section.kmodes.n_clusters = k;
    }
    if let Some(n) = a.n_init {
        section.kmeans.n_init = n;
        section.kmodes.n_init = n;
    }
    if let Some(n) = a.max_iter {
        section.kmeans.max_iter = n;
        section.kmodes.max_iter = n;
    }
    if let Some(init) = &a.init {
        let v = serde_json::Value::String(init.to_ascii_lowercase());
        let bad = |_| CliError::Usage(format!("init `{init}` does not apply to {}", a.algorithm));
        match a.algorithm {
            Algorithm::KMeans => section.kmeans.init = serde_json::from_value::<KMeansInit>(v).map_err(bad)?,
            Algorithm::KModes => section.kmodes.init = serde_json::from_value::<KModesInit>(v).map_err(bad)?,
        }
    }
    ResolvedCluster::from_section(&section, a.seed)
}

fn cluster(a: ClusterArgs) -> Result<(), CliError> {
    let settings = cluster_settings(&a)?;
    let chosen = match &a.features {
        Some(spec) if Path::new(spec).is_file() => pipeline::read_selected(Path::new(spec))?,
        Some(list) => parse_fields(list)?,
        None => DEFAULT_FEATURES.to_vec(),
    };
    let features = settings.clustering_features(&chosen);
    let params = match a.algorithm {
        Algorithm::KMeans => serde_json::to_value(&settings.kmeans),
        Algorithm::KModes => serde_json::to_value(&settings.kmodes),
    }
    .expect("params serialize");
    if a.dry_run {
        return print_json(&serde_json::json!({
            "records": a.records,
            "algorithm": a.algorithm,
            "params": params,
            "grid": settings.grid,
            "features": features,
            "cardinality_cap": settings.cardinality_cap,
            "out": a.out,
        }));
    }
    let records = read_partition(&a.records)?;
    let fitted = pipeline::fit(&records, &features, a.algorithm, &settings)?;
    let mut art = Artifacts::new(&a.out)?;
    pipeline::write_model(&mut art, Path::new(""), &fitted)?;
    print_json(&serde_json::json!({
        "algorithm": a.algorithm,
        "k": fitted.model.k(),
        "cost": fitted.model.cost,
        "silhouette": fitted.silhouette,
        "cluster_sizes": fitted.model.cluster_sizes,
    }))
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let config = ReportConfig {
        top_n: a.top_n,
        min_size: a.min_size,
        ..ReportConfig::default()
    };
    let labels_path = a
        .labels
        .clone()
        .unwrap_or_else(|| a.model.parent().unwrap_or(Path::new("")).join("labels.bin"));
    if a.dry_run {
        return print_json(&serde_json::json!({
            "model": a.model,
            "labels": labels_path,
            "records": a.records,
            "formats": a.format,
            "report": config,
            "out": a.out,
        }));
    }
    let text = std::fs::read_to_string(&a.model).map_err(CliError::io(&a.model))?;
    let mut model: ClusterModel = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: a.model.display().to_string(),
        source,
    })?;
    let bytes = std::fs::read(&labels_path).map_err(CliError::io(&labels_path))?;
    model.labels = decode_labels(&bytes)?;
    let records = read_partition(&a.records)?;
    let host = a.host.clone().unwrap_or_else(|| records[0].host.clone());
    let fitted = Fitted {
        model,
        silhouette: None,
        grid: None,
    };
    let report = pipeline::build_report(&fitted, &records, &host, &config, None)?;
    let mut art = Artifacts::new(&a.out)?;
    pipeline::write_report(&mut art, Path::new(""), &report, &a.format)?;
    print_json(&serde_json::json!({ "host": host, "clusters": report.summaries.len(), "rows": report.total_rows() }))
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut spec = match (&a.preset, &a.spec) {
        (Some(name), _) => preset(name)?,
        (None, Some(path)) => SynthSpec::from_file(path)?,
        (None, None) => return Err(CliError::Usage("give --preset or --spec".into())),
    };
    if let Some(n) = a.lines {
        spec.total_lines = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    spec.validate()?;
    if a.print_spec {
        print!("{}", spec.to_toml());
        return Ok(());
    }
    let out = a.out.clone().ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let truth = a.truth.clone().unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".truth.tsv");
        PathBuf::from(s)
    });
    if a.dry_run {
        return print_json(&serde_json::json!({ "spec": spec, "out": out, "truth": truth }));
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    let summary = generate_files(&spec, &out, Some(&truth))?;
    print_json(&summary)
}

/// Merge a config file with command-line overrides.
pub fn resolve_run(a: &RunArgs) -> Result<ResolvedConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if !a.input.is_empty() {
        cfg.inputs = a.input.clone();
    }
    if let Some(out) = &a.out {
        cfg.output_dir = out.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(g) = &a.grid {
        cfg.cluster.grid = Some(parse_grid(g)?);
    }
    ResolvedConfig::resolve(&cfg)
}

fn run(a: RunArgs) -> Result<(), CliError> {
    let cfg = resolve_run(&a)?;
    if a.dry_run {
        return print_json(&cfg);
    }
    let manifest = pipeline::run_pipeline(&cfg)?;
    print_json(&serde_json::json!({
        "output_dir": cfg.output_dir,
        "hosts": manifest.hosts.iter().map(|h| &h.host).collect::<Vec<_>>(),
        "excluded": manifest.excluded.len(),
        "artifacts": manifest.artifacts.len(),
    }))
}
