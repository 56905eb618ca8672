//! Pipeline configuration file (TOML).
//!
//! Every key is optional. A complete file with the default values:
//!
//! ```toml
//! inputs = ["logs/edge-01.tsv.gz"]
//! output_dir = "cdnerr-out"
//! seed = 0                      # root of every random stream
//! formats = ["json", "csv", "svg"]
//! # schema = "schema.toml"     # column layout, see `Schema::from_toml`
//!
//! [ingest]
//! min_host_count = 1000         # hosts need strictly more error records
//! # hosts = ["host1", "host7"] # optional allowlist
//! format = "auto"               # auto | delimited | jsonl
//!
//! [selection]
//! enabled = true
//! methods = ["chi_square", "correlation", "extra_trees", "forward"]
//! target_size = 13
//! target = "status_code"        # status_code | error_class
//! cardinality_cap = 50
//! n_trees = 100
//! folds = 3
//! max_depth = 5
//!
//! [cluster]
//! algorithms = ["kmeans", "kmodes"]
//! # grid = [2, 12]             # search k by silhouette instead of fixing it
//! # features = ["method", "path"]  # skip selection and use these
//! include_status = true         # cluster on the status code as well
//! cardinality_cap = 50
//! kmeans = { n_clusters = 6, init = "k-means++", max_iter = 300, n_init = 10 }
//! kmodes = { n_clusters = 8, init = "huang", n_init = 5, max_iter = 100 }
//!
//! [report]
//! top_n = 10
//! many_threshold = 10
//! min_size = 10
//! ```
//!
//! Clustering uses `seed` as its random state; feature selection uses a
//! seed derived from it.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cdnerr::cluster::{Algorithm, KMeansInit, KMeansParams, KModesInit, KModesParams};
use cdnerr::features::{Method, SelectionConfig, TargetKind, DEFAULT_CARDINALITY_CAP};
use cdnerr::ingest::{InputFormat, Schema, DEFAULT_MAX_LINE_BYTES, DEFAULT_MIN_HOST_COUNT};
use cdnerr::log_model::Field;
use cdnerr::report::{ExportFormat, ReportConfig};
use cdnerr::seed;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Features selected on every reference host, status code
/// aside. Used when selection cannot run.
pub const DEFAULT_FEATURES: [Field; 12] = [
    Field::Protocol,
    Field::ContentLength,
    Field::TimeFirstByte,
    Field::TimeToServ,
    Field::OsFamily,
    Field::UaMajor,
    Field::UaFamily,
    Field::DeviceFamily,
    Field::Path,
    Field::DeviceBrand,
    Field::Method,
    Field::LiveChannel,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub min_host_count: u64,
    pub hosts: Option<Vec<String>>,
    pub format: InputFormat,
    pub max_line_bytes: usize,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            min_host_count: DEFAULT_MIN_HOST_COUNT,
            hosts: None,
            format: InputFormat::Auto,
            max_line_bytes: DEFAULT_MAX_LINE_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub enabled: bool,
    pub methods: BTreeSet<Method>,
    pub target_size: usize,
    pub target: TargetKind,
    pub candidates: Option<Vec<Field>>,
    pub cardinality_cap: usize,
    pub n_trees: usize,
    pub folds: usize,
    pub max_depth: usize,
}

impl Default for SelectionSection {
    fn default() -> Self {
        let d = SelectionConfig::default();
        SelectionSection {
            enabled: true,
            methods: d.methods,
            target_size: d.target_size,
            target: d.target,
            candidates: d.candidates,
            cardinality_cap: d.cardinality_cap,
            n_trees: d.n_trees,
            folds: d.folds,
            max_depth: d.max_depth,
        }
    }
}

impl SelectionSection {
    pub fn to_config(&self, root_seed: u64) -> SelectionConfig {
        SelectionConfig {
            methods: self.methods.clone(),
            target_size: self.target_size,
            target: self.target,
            candidates: self.candidates.clone(),
            cardinality_cap: self.cardinality_cap,
            n_trees: self.n_trees,
            folds: self.folds,
            max_depth: self.max_depth,
            seed: seed::derive_named(root_seed, "select"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansSection {
    pub n_clusters: usize,
    pub init: KMeansInit,
    pub max_iter: usize,
    pub n_init: usize,
}

impl Default for KMeansSection {
    fn default() -> Self {
        let d = KMeansParams::default();
        KMeansSection {
            n_clusters: d.n_clusters,
            init: d.init,
            max_iter: d.max_iter,
            n_init: d.n_init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KModesSection {
    pub n_clusters: usize,
    pub init: KModesInit,
    pub n_init: usize,
    pub max_iter: usize,
}

impl Default for KModesSection {
    fn default() -> Self {
        let d = KModesParams::default();
        KModesSection {
            n_clusters: d.n_clusters,
            init: d.init,
            n_init: d.n_init,
            max_iter: d.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub algorithms: Vec<Algorithm>,
    pub grid: Option<[usize; 2]>,
    pub features: Option<Vec<Field>>,
    pub include_status: bool,
    pub cardinality_cap: usize,
    pub kmeans: KMeansSection,
    pub kmodes: KModesSection,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            algorithms: vec![Algorithm::KMeans, Algorithm::KModes],
            grid: None,
            features: None,
            include_status: true,
            cardinality_cap: DEFAULT_CARDINALITY_CAP,
            kmeans: KMeansSection::default(),
            kmodes: KModesSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub formats: Vec<ExportFormat>,
    pub ingest: IngestSection,
    pub selection: SelectionSection,
    pub cluster: ClusterSection,
    pub report: ReportConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema: None,
            inputs: Vec::new(),
            output_dir: PathBuf::from("cdnerr-out"),
            seed: 0,
            formats: vec![ExportFormat::Json, ExportFormat::Csv, ExportFormat::Svg],
            ingest: IngestSection::default(),
            selection: SelectionSection::default(),
            cluster: ClusterSection::default(),
            report: ReportConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<PipelineConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Load a config file. Relative `schema` and `inputs` paths are taken
    /// relative to the file's directory.
    pub fn from_file(path: &Path) -> Result<PipelineConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut cfg = PipelineConfig::from_toml(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.inputs.iter_mut().for_each(rebase);
        if let Some(s) = cfg.schema.as_mut() {
            rebase(s);
        }
        Ok(cfg)
    }
}

/// Parse `lo:hi` into a grid range.
pub fn parse_grid(text: &str) -> Result<[usize; 2], CliError> {
    let bad = || CliError::Usage(format!("grid range `{text}` must look like 2:12"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo = lo.trim().parse().map_err(|_| bad())?;
    let hi = hi.trim().parse().map_err(|_| bad())?;
    check_grid([lo, hi])?;
    Ok([lo, hi])
}

fn check_grid([lo, hi]: [usize; 2]) -> Result<(), CliError> {
    if lo < 2 || lo > hi {
        return Err(CliError::Usage(format!("grid range {lo}:{hi} needs 2 <= lo <= hi")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedCluster {
    pub algorithms: Vec<Algorithm>,
    pub grid: Option<[usize; 2]>,
    pub features: Option<Vec<Field>>,
    pub include_status: bool,
    pub cardinality_cap: usize,
    pub kmeans: KMeansParams,
    pub kmodes: KModesParams,
}

impl ResolvedCluster {
    pub fn from_section(section: &ClusterSection, root_seed: u64) -> Result<ResolvedCluster, CliError> {
        if section.algorithms.is_empty() {
            return Err(CliError::Usage("no clustering algorithm requested".into()));
        }
        if let Some(g) = section.grid {
            check_grid(g)?;
        }
        if section.cardinality_cap == 0 {
            return Err(CliError::Usage("cardinality_cap must be at least 1".into()));
        }
        let kmeans = KMeansParams {
            n_clusters: section.kmeans.n_clusters,
            init: section.kmeans.init,
            max_iter: section.kmeans.max_iter,
            n_init: section.kmeans.n_init,
            random_state: root_seed,
        };
        let kmodes = KModesParams {
            n_clusters: section.kmodes.n_clusters,
            init: section.kmodes.init,
            n_init: section.kmodes.n_init,
            max_iter: section.kmodes.max_iter,
            random_state: root_seed,
        };
        kmeans.validate()?;
        kmodes.validate()?;
        let mut algorithms = section.algorithms.clone();
        algorithms.dedup();
        Ok(ResolvedCluster {
            algorithms,
            grid: section.grid,
            features: section.features.clone(),
            include_status: section.include_status,
            cardinality_cap: section.cardinality_cap,
            kmeans,
            kmodes,
        })
    }

    /// Fields to cluster on, given the output of selection.
    pub fn clustering_features(&self, selected: &[Field]) -> Vec<Field> {
        let chosen = self.features.as_deref().unwrap_or(selected);
        let mut out = Vec::with_capacity(chosen.len() + 1);
        if self.include_status {
            out.push(Field::StatusCode);
        }
        for &f in chosen {
            if !out.contains(&f) {
                out.push(f);
            }
        }
        out
    }
}

/// The configuration a run actually uses, as echoed by `--dry-run`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub schema: Schema,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub formats: Vec<ExportFormat>,
    pub ingest: IngestSection,
    pub selection: Option<SelectionConfig>,
    pub cluster: ResolvedCluster,
    pub report: ReportConfig,
}

impl ResolvedConfig {
    pub fn resolve(cfg: &PipelineConfig) -> Result<ResolvedConfig, CliError> {
        let schema = match &cfg.schema {
            Some(p) => Schema::from_file(p)?,
            None => Schema::default(),
        };
        if cfg.formats.is_empty() {
            return Err(CliError::Usage("no report format requested".into()));
        }
        let selection = if cfg.selection.enabled && cfg.cluster.features.is_none() {
            if cfg.selection.methods.is_empty() {
                return Err(CliError::Usage("selection enabled with no methods".into()));
            }
            if cfg.selection.target_size == 0 {
                return Err(CliError::Usage("selection target_size must be at least 1".into()));
            }
            Some(cfg.selection.to_config(cfg.seed))
        } else {
            None
        };
        let mut formats = cfg.formats.clone();
        formats.sort();
        formats.dedup();
        Ok(ResolvedConfig {
            schema,
            inputs: cfg.inputs.clone(),
            output_dir: cfg.output_dir.clone(),
            seed: cfg.seed,
            formats,
            ingest: cfg.ingest.clone(),
            selection,
            cluster: ResolvedCluster::from_section(&cfg.cluster, cfg.seed)?,
            report: cfg.report.clone(),
        })
    }

    /// JSON form without the output directory, so manifests of identical
    /// runs written to different places compare equal.
    pub fn manifest_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        v
    }
}
