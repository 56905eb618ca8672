//! Stages shared by the subcommands and by `run`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cdnerr::cluster::{
    encode_labels, grid_search_kmeans, grid_search_kmodes, kmeans_fit, kmodes_fit, silhouette_euclidean,
    silhouette_matching, Algorithm, CategoricalMatrix, ClusterError, ClusterModel, GridRow,
};
use cdnerr::features::{one_hot_encode, select_features, FeatureError, FeatureMatrix, SelectionConfig, SelectionResult};
use cdnerr::ingest::{
    open_input, partition_by_host, write_records, CorpusStats, ExcludedHost, HostPartition, PartitionOutcome,
    RecordStream, Schema, StreamOptions,
};
use cdnerr::log_model::{Field, LogRecord};
use cdnerr::report::{export_report, summarize, ClusterReport, ExportFormat, ReportConfig, SourceStats};
use cdnerr::seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{IngestSection, ResolvedCluster, ResolvedConfig, DEFAULT_FEATURES};
use crate::error::CliError;

/// Files written under one output root, tracked for the manifest.
pub struct Artifacts {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(root: &Path) -> Result<Artifacts, CliError> {
        fs::create_dir_all(root).map_err(CliError::io(root))?;
        Ok(Artifacts {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    fn prepare(&self, rel: &Path) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        Ok(path)
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<(), CliError> {
        let rel = rel.as_ref();
        let path = self.prepare(rel)?;
        fs::write(&path, bytes).map_err(CliError::io(&path))?;
        self.written.push(rel.to_path_buf());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn write_partition(&mut self, rel: impl AsRef<Path>, records: &[LogRecord]) -> Result<(), CliError> {
        let rel = rel.as_ref();
        let path = self.prepare(rel)?;
        let file = fs::File::create(&path).map_err(CliError::io(&path))?;
        write_records(BufWriter::new(file), records, &Schema::default()).map_err(CliError::io(&path))?;
        self.written.push(rel.to_path_buf());
        Ok(())
    }

    /// Record files some other writer produced under `prefix`.
    pub fn adopt(&mut self, prefix: &Path, rels: Vec<PathBuf>) {
        self.written.extend(rels.into_iter().map(|r| prefix.join(r)));
    }

    /// Every tracked file with its size and SHA-256, sorted by path.
    pub fn hashed(&self) -> Result<Vec<Artifact>, CliError> {
        let mut out = Vec::with_capacity(self.written.len());
        let paths: BTreeSet<String> = self.written.iter().map(|p| portable(p)).collect();
        for rel in paths {
            let path = self.root.join(&rel);
            let bytes = fs::read(&path).map_err(CliError::io(&path))?;
            out.push(Artifact {
                path: rel,
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        Ok(out)
    }
}

/// Relative path with `/` separators.
fn portable(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Parse every input in order, keeping error records only when
/// `errors_only`. Fails with [`CliError::NoParseableLines`] when nothing
/// parsed.
pub fn load_records(
    inputs: &[PathBuf],
    schema: &Schema,
    ingest: &IngestSection,
    errors_only: bool,
) -> Result<(Vec<LogRecord>, CorpusStats), CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage("no input files given".into()));
    }
    let mut records = Vec::new();
    let mut stats = CorpusStats::default();
    for path in inputs {
        let options = StreamOptions {
            format: ingest.format,
            errors_only,
            parallel: true,
            max_line_bytes: ingest.max_line_bytes,
        };
        let mut stream = RecordStream::new(open_input(path)?, schema.clone(), options);
        for rec in stream.by_ref() {
            records.push(rec?);
        }
        if stream.stats().rejected > 0 {
            log::warn!(
                "{}: {} of {} lines rejected; first: {:?}",
                path.display(),
                stream.stats().rejected,
                stream.stats().total_lines,
                stream.sample_failures().first()
            );
        }
        stats.merge(stream.stats());
    }
    if stats.parsed == 0 {
        return Err(CliError::NoParseableLines {
            lines: stats.total_lines,
            rejected: stats.rejected,
        });
    }
    Ok((records, stats))
}

pub fn partition(records: Vec<LogRecord>, ingest: &IngestSection) -> PartitionOutcome {
    let allow: Option<BTreeSet<String>> = ingest.hosts.as_ref().map(|h| h.iter().cloned().collect());
    partition_by_host(records, ingest.min_host_count, allow.as_ref())
}

/// File-system-safe, unique directory names for hosts.
pub fn host_dir_names<'a>(hosts: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut used = BTreeSet::new();
    hosts
        .into_iter()
        .map(|h| {
            let mut base: String = h
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
                .collect();
            if base.is_empty() || base.starts_with('.') {
                base.insert(0, '_');
            }
            let mut name = base.clone();
            let mut n = 1;
            while !used.insert(name.clone()) {
                n += 1;
                name = format!("{base}-{n}");
            }
            name
        })
        .collect()
}

/// Outcome of the selection stage for one host.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub selected: Vec<Field>,
    pub result: Option<SelectionResult>,
    /// Why the default feature list was used instead of running selection.
    pub fallback: Option<String>,
}

impl Selection {
    pub fn fixed(features: Vec<Field>) -> Selection {
        Selection {
            selected: features,
            result: None,
            fallback: None,
        }
    }

    /// The JSON document stored as `selection.json`.
    pub fn document(&self) -> serde_json::Value {
        match (&self.result, &self.fallback) {
            (Some(r), _) => serde_json::to_value(r).expect("selection serializes"),
            (None, reason) => serde_json::json!({ "selected": self.selected, "fallback": reason }),
        }
    }
}

/// Run selection, falling back to [`DEFAULT_FEATURES`] when the target has a
/// single class.
pub fn run_selection(records: &[LogRecord], config: &SelectionConfig) -> Result<Selection, CliError> {
    match select_features(records, config) {
        Ok(result) => Ok(Selection {
            selected: result.selected.clone(),
            result: Some(result),
            fallback: None,
        }),
        Err(e @ FeatureError::SingleClass(_)) => {
            log::warn!("selection skipped: {e}");
            Ok(Selection {
                selected: DEFAULT_FEATURES.to_vec(),
                result: None,
                fallback: Some(e.to_string()),
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Read the `selected` list of a `selection.json`.
pub fn read_selected(path: &Path) -> Result<Vec<Field>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let json = |source| CliError::Json {
        path: path.display().to_string(),
        source,
    };
    let v: serde_json::Value = serde_json::from_str(&text).map_err(json)?;
    serde_json::from_value(v.get("selected").cloned().unwrap_or_default()).map_err(json)
}

/// One-hot matrix K-means runs on.
pub fn encode_for_kmeans(records: &[LogRecord], features: &[Field], cap: usize) -> Result<FeatureMatrix, CliError> {
    let (numeric, categorical): (Vec<Field>, Vec<Field>) = features.iter().partition(|f| f.is_numeric());
    Ok(one_hot_encode(records, &categorical, &numeric, cap)?)
}

/// A fitted model with its diagnostics.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: ClusterModel,
    pub silhouette: Option<f64>,
    pub grid: Option<Vec<GridRow>>,
}

fn optional_score(r: Result<f64, ClusterError>) -> Result<Option<f64>, CliError> {
    match r {
        Ok(s) => Ok(Some(s)),
        Err(ClusterError::SingleCluster) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Grid bounds clipped to what `rows` can support.
fn grid_bounds([lo, hi]: [usize; 2], rows: usize) -> Result<(usize, usize), CliError> {
    if rows <= lo {
        return Err(ClusterError::TooFewRows { k: lo, rows }.into());
    }
    let top = hi.min(rows - 1);
    if top < hi {
        log::warn!("grid upper bound {hi} lowered to {top} for {rows} rows");
    }
    Ok((lo, top))
}

pub fn fit(records: &[LogRecord], features: &[Field], algorithm: Algorithm, cfg: &ResolvedCluster) -> Result<Fitted, CliError> {
    if features.is_empty() {
        return Err(CliError::Usage("no features to cluster on".into()));
    }
    match algorithm {
        Algorithm::KMeans => {
            let matrix = encode_for_kmeans(records, features, cfg.cardinality_cap)?;
            let view = matrix.values.view();
            let (mut model, grid) = match cfg.grid {
                Some(g) => {
                    let (lo, hi) = grid_bounds(g, matrix.rows())?;
                    let res = grid_search_kmeans(view, lo, hi, &cfg.kmeans)?;
                    (res.best, Some(res.rows))
                }
                None => (kmeans_fit(view, &cfg.kmeans)?, None),
            };
            let sil_seed = seed::derive_named(cfg.kmeans.random_state, "silhouette");
            let silhouette = optional_score(silhouette_euclidean(view, &model.labels, sil_seed))?;
            model.columns = matrix.columns.iter().map(|c| c.label()).collect();
            model.features = features.to_vec();
            Ok(Fitted { model, silhouette, grid })
        }
        Algorithm::KModes => {
            let data = CategoricalMatrix::from_records(records, features);
            let (model, grid) = match cfg.grid {
                Some(g) => {
                    let (lo, hi) = grid_bounds(g, data.n_rows())?;
                    let res = grid_search_kmodes(&data, lo, hi, &cfg.kmodes)?;
                    (res.best, Some(res.rows))
                }
                None => (kmodes_fit(&data, &cfg.kmodes)?, None),
            };
            let sil_seed = seed::derive_named(cfg.kmodes.random_state, "silhouette");
            let silhouette = optional_score(silhouette_matching(&data, &model.labels, sil_seed))?;
            Ok(Fitted { model, silhouette, grid })
        }
    }
}

/// Write `model.json`, `labels.bin` and, after a grid search, `grid.json`
/// under `dir`.
pub fn write_model(art: &mut Artifacts, dir: &Path, fitted: &Fitted) -> Result<(), CliError> {
    art.write_json(dir.join("model.json"), &fitted.model)?;
    art.write(dir.join("labels.bin"), &encode_labels(&fitted.model.labels))?;
    if let Some(rows) = &fitted.grid {
        art.write_json(dir.join("grid.json"), rows)?;
    }
    Ok(())
}

pub fn build_report(
    fitted: &Fitted,
    records: &[LogRecord],
    host: &str,
    config: &ReportConfig,
    stats: Option<&CorpusStats>,
) -> Result<ClusterReport, CliError> {
    let mut report = summarize(&fitted.model, records, host, config)?;
    report.silhouette = fitted.silhouette;
    report.source_stats = stats.map(SourceStats::from);
    Ok(report)
}

pub fn write_report(art: &mut Artifacts, dir: &Path, report: &ClusterReport, formats: &[ExportFormat]) -> Result<(), CliError> {
    let abs = art.path(dir);
    let files = export_report(report, formats, &abs)?;
    art.adopt(dir, files);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub algorithm: Algorithm,
    pub k: usize,
    pub cost: f64,
    pub silhouette: Option<f64>,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostEntry {
    pub host: String,
    pub dir: String,
    pub records: u64,
    pub status_histogram: BTreeMap<u16, u64>,
    pub features: Vec<Field>,
    pub selection_fallback: Option<String>,
    pub models: Vec<ModelEntry>,
}

/// Top-level index of a run. Contains nothing that depends on the output
/// location or the thread count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: serde_json::Value,
    pub stats: CorpusStats,
    pub hosts: Vec<HostEntry>,
    pub excluded: Vec<ExcludedHost>,
    pub artifacts: Vec<Artifact>,
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub stats: CorpusStats,
    pub retained: Vec<RetainedHost>,
    pub excluded: Vec<ExcludedHost>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedHost {
    pub host: String,
    pub records: u64,
    pub partition: String,
    pub status_histogram: BTreeMap<u16, u64>,
}

fn retained(p: &HostPartition, partition: String) -> RetainedHost {
    RetainedHost {
        host: p.host.clone(),
        records: p.records.len() as u64,
        partition,
        status_histogram: p.status_histogram.clone(),
    }
}

/// The `ingest` stage: one partition file per retained host plus
/// `ingest_stats.json`.
pub fn ingest_to(
    art: &mut Artifacts,
    inputs: &[PathBuf],
    schema: &Schema,
    ingest: &IngestSection,
    errors_only: bool,
) -> Result<IngestSummary, CliError> {
    let (records, stats) = load_records(inputs, schema, ingest, errors_only)?;
    let outcome = partition(records, ingest);
    let names = host_dir_names(outcome.partitions.iter().map(|p| p.host.as_str()));
    let mut kept = Vec::new();
    for (p, name) in outcome.partitions.iter().zip(names) {
        let rel = format!("{name}.tsv");
        art.write_partition(&rel, &p.records)?;
        kept.push(retained(p, rel));
    }
    let summary = IngestSummary {
        stats,
        retained: kept,
        excluded: outcome.excluded,
    };
    art.write_json("ingest_stats.json", &summary)?;
    Ok(summary)
}

/// The whole pipeline. Per retained host `h` it writes, under
/// `hosts/<h>/`: `partition.tsv`, `selection.json`, and for each algorithm
/// `<algo>/model.json`, `<algo>/labels.bin` and `<algo>/report/`. The
/// manifest at the root lists every artifact with its SHA-256.
pub fn run_pipeline(cfg: &ResolvedConfig) -> Result<Manifest, CliError> {
    let (records, stats) = load_records(&cfg.inputs, &cfg.schema, &cfg.ingest, true)?;
    let outcome = partition(records, &cfg.ingest);
    let mut art = Artifacts::new(&cfg.output_dir)?;
    let names = host_dir_names(outcome.partitions.iter().map(|p| p.host.as_str()));
    let mut hosts = Vec::new();
    for (p, name) in outcome.partitions.iter().zip(names) {
        log::info!("host {}: {} error records", p.host, p.records.len());
        let dir = PathBuf::from("hosts").join(&name);
        art.write_partition(dir.join("partition.tsv"), &p.records)?;

        let selection = match &cfg.selection {
            Some(sel) => run_selection(&p.records, sel)?,
            None => Selection::fixed(cfg.cluster.features.clone().unwrap_or_else(|| DEFAULT_FEATURES.to_vec())),
        };
        art.write_json(dir.join("selection.json"), &selection.document())?;
        let features = cfg.cluster.clustering_features(&selection.selected);

        let mut models = Vec::new();
        for &algo in &cfg.cluster.algorithms {
            let adir = dir.join(algo.to_string());
            let fitted = fit(&p.records, &features, algo, &cfg.cluster)?;
            write_model(&mut art, &adir, &fitted)?;
            let report = build_report(&fitted, &p.records, &p.host, &cfg.report, Some(&stats))?;
            write_report(&mut art, &adir.join("report"), &report, &cfg.formats)?;
            models.push(ModelEntry {
                algorithm: algo,
                k: fitted.model.k(),
                cost: fitted.model.cost,
                silhouette: fitted.silhouette,
                dir: portable(&adir),
            });
        }
        hosts.push(HostEntry {
            host: p.host.clone(),
            dir: portable(&dir),
            records: p.records.len() as u64,
            status_histogram: p.status_histogram.clone(),
            features,
            selection_fallback: selection.fallback,
            models,
        });
    }
    for e in &outcome.excluded {
        log::info!("host {} excluded ({} error records, {:?})", e.host, e.count, e.reason);
    }
    let manifest = Manifest {
        tool: "cdnerr".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.manifest_value(),
        stats,
        hosts,
        excluded: outcome.excluded,
        artifacts: art.hashed()?,
    };
    let path = art.root().join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let mut f = fs::File::create(&path).map_err(CliError::io(&path))?;
    f.write_all(text.as_bytes()).map_err(CliError::io(&path))?;
    Ok(manifest)
}
