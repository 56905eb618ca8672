//! K-means over the encoded matrix and K-modes over raw categories, with
//! multi-restart fitting, silhouette scoring and grid search over `k`.
//!
//! Every fit is a pure function of the data and the parameters. Restart `r`
//! draws from a generator seeded with `derive_seed(random_state, r)` and the
//! lowest-cost restart wins (ties go to the lower restart index), so the
//! outcome never depends on the number of worker threads.

mod grid;
mod kmeans;
mod kmodes;
mod labels;
mod metrics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log_model::Field;

pub use grid::{grid_search_kmeans, grid_search_kmodes, GridResult, GridRow, DEFAULT_K_RANGE};
pub use kmeans::{kmeans_fit, kmeans_run, kmeanspp_init, random_init, wcss, KMeansRun};
pub use kmodes::{
    huang_init, kmodes_cost, kmodes_fit, kmodes_run, matching_dissimilarity, CategoricalMatrix,
    KModesRun,
};
pub use labels::{decode_labels, encode_labels};
pub use metrics::{adjusted_rand_index, silhouette_euclidean, silhouette_matching, SILHOUETTE_SAMPLE};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot form {k} clusters from {rows} rows")]
    TooFewRows { k: usize, rows: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("tuples of arity {left} and {right} cannot be compared")]
    ArityMismatch { left: usize, right: usize },
    #[error("silhouette needs at least two non-empty clusters")]
    SingleCluster,
    #[error("{labels} labels for {rows} rows")]
    LengthMismatch { labels: usize, rows: usize },
    #[error("malformed label file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    KMeans,
    KModes,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::KModes => "kmodes",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "kmeans" => Ok(Algorithm::KMeans),
            "kmodes" => Ok(Algorithm::KModes),
            _ => Err(ClusterError::InvalidParameter(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KMeansInit {
    #[serde(rename = "k-means++", alias = "kmeanspp")]
    KMeansPlusPlus,
    #[serde(rename = "random")]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KModesInit {
    #[serde(alias = "Huang")]
    Huang,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansParams {
    pub n_clusters: usize,
    pub init: KMeansInit,
    pub max_iter: usize,
    pub n_init: usize,
    pub random_state: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            n_clusters: 6,
            init: KMeansInit::KMeansPlusPlus,
            max_iter: 300,
            n_init: 10,
            random_state: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KModesParams {
    pub n_clusters: usize,
    pub init: KModesInit,
    pub n_init: usize,
    pub max_iter: usize,
    pub random_state: u64,
}

impl Default for KModesParams {
    fn default() -> Self {
        KModesParams {
            n_clusters: 8,
            init: KModesInit::Huang,
            n_init: 5,
            max_iter: 100,
            random_state: 0,
        }
    }
}

fn validate_common(k: usize, max_iter: usize, n_init: usize) -> Result<(), ClusterError> {
    let bad = |what: &str| Err(ClusterError::InvalidParameter(format!("{what} must be at least 1")));
    if k == 0 {
        return bad("n_clusters");
    }
    if max_iter == 0 {
        return bad("max_iter");
    }
    if n_init == 0 {
        return bad("n_init");
    }
    Ok(())
}

impl KMeansParams {
    pub fn validate(&self) -> Result<(), ClusterError> {
        validate_common(self.n_clusters, self.max_iter, self.n_init)
    }
}

impl KModesParams {
    pub fn validate(&self) -> Result<(), ClusterError> {
        validate_common(self.n_clusters, self.max_iter, self.n_init)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum ModelParams {
    KMeans(KMeansParams),
    KModes(KModesParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centers {
    Means(Vec<Vec<f64>>),
    Modes(Vec<Vec<String>>),
}

impl Centers {
    pub fn len(&self) -> usize {
        match self {
            Centers::Means(c) => c.len(),
            Centers::Modes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A fitted clustering. Labels are stored separately from the JSON document
/// (see [`encode_labels`]) because they scale with the row count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub params: ModelParams,
    pub centers: Centers,
    #[serde(skip)]
    pub labels: Vec<u32>,
    pub cluster_sizes: Vec<usize>,
    /// WCSS for K-means, total matching dissimilarity for K-modes.
    pub cost: f64,
    pub n_iter: usize,
    pub cost_history: Vec<f64>,
    pub seed_of_best_run: u64,
    /// Cluster ids without members in the final labelling.
    pub empty_clusters: Vec<usize>,
    /// Empty clusters refilled during the winning run.
    pub repaired_empty: usize,
    /// Set when initialisation ran out of distinct rows and reused some.
    pub init_fallback: bool,
    /// Column labels of the center coordinates.
    pub columns: Vec<String>,
    /// Source fields the model was fitted on.
    #[serde(default)]
    pub features: Vec<Field>,
}

impl ClusterModel {
    pub fn algorithm(&self) -> Algorithm {
        match self.params {
            ModelParams::KMeans(_) => Algorithm::KMeans,
            ModelParams::KModes(_) => Algorithm::KModes,
        }
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub(crate) fn sizes_and_empty(labels: &[u32], k: usize) -> (Vec<usize>, Vec<usize>) {
        let mut sizes = vec![0; k];
        for &l in labels {
            sizes[l as usize] += 1;
        }
        let empty = (0..k).filter(|&c| sizes[c] == 0).collect();
        (sizes, empty)
    }
}

/// Index of the lowest-cost run, ties to the lower index.
pub(crate) fn best_run(costs: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, c) in costs.into_iter().enumerate() {
        if c < best.1 {
            best = (i, c);
        }
    }
    best.0
}
