use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{
    kmeans_fit, kmodes_fit, silhouette_euclidean, silhouette_matching, CategoricalMatrix,
    ClusterError, ClusterModel, KMeansParams, KModesParams,
};
use crate::seed;

pub const DEFAULT_K_RANGE: (usize, usize) = (2, 12);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub k: usize,
    /// `None` when the fit left fewer than two non-empty clusters.
    pub silhouette: Option<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best_k: usize,
    pub rows: Vec<GridRow>,
    pub best: ClusterModel,
}

fn check_range(k_min: usize, k_max: usize, rows: usize) -> Result<(), ClusterError> {
    if k_min < 2 || k_min > k_max || k_max + 1 > rows {
        return Err(ClusterError::InvalidParameter(format!(
            "k range {k_min}..={k_max} must lie within 2..={}",
            rows.saturating_sub(1)
        )));
    }
    Ok(())
}

fn search(
    k_min: usize,
    k_max: usize,
    mut fit: impl FnMut(usize) -> Result<(ClusterModel, Option<f64>), ClusterError>,
) -> Result<GridResult, ClusterError> {
    let mut rows = Vec::new();
    let mut best: Option<(f64, ClusterModel)> = None;
    for k in k_min..=k_max {
        let (model, score) = fit(k)?;
        rows.push(GridRow {
            k,
            silhouette: score,
            cost: model.cost,
        });
        let s = score.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, model));
        }
    }
    let (_, best) = best.expect("range is non-empty");
    Ok(GridResult {
        best_k: best.k(),
        rows,
        best,
    })
}

fn score(result: Result<f64, ClusterError>) -> Result<Option<f64>, ClusterError> {
    match result {
        Ok(s) => Ok(Some(s)),
        Err(ClusterError::SingleCluster) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Fit every `k` in `k_min..=k_max` and keep the one with the highest
/// Euclidean silhouette; ties go to the smaller `k`.
pub fn grid_search_kmeans(
    data: ArrayView2<f64>,
    k_min: usize,
    k_max: usize,
    base: &KMeansParams,
) -> Result<GridResult, ClusterError> {
    check_range(k_min, k_max, data.nrows())?;
    let sil_seed = seed::derive_named(base.random_state, "silhouette");
    search(k_min, k_max, |k| {
        let model = kmeans_fit(data, &KMeansParams { n_clusters: k, ..base.clone() })?;
        let s = score(silhouette_euclidean(data, &model.labels, sil_seed))?;
        Ok((model, s))
    })
}

/// As [`grid_search_kmeans`] with K-modes and the matching silhouette.
pub fn grid_search_kmodes(
    data: &CategoricalMatrix,
    k_min: usize,
    k_max: usize,
    base: &KModesParams,
) -> Result<GridResult, ClusterError> {
    check_range(k_min, k_max, data.n_rows())?;
    let sil_seed = seed::derive_named(base.random_state, "silhouette");
    search(k_min, k_max, |k| {
        let model = kmodes_fit(data, &KModesParams { n_clusters: k, ..base.clone() })?;
        let s = score(silhouette_matching(data, &model.labels, sil_seed))?;
        Ok((model, s))
    })
}
