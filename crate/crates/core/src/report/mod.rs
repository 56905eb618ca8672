//! Operator-facing summaries of a fitted clustering: per-cluster sizes,
//! status-code breakdowns, dominant attribute values and per-feature
//! distribution tables, exported as JSON, CSV and SVG.

mod export;
mod svg;

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterModel, ModelParams};
use crate::features::categorical_view;
use crate::ingest::CorpusStats;
use crate::log_model::{Field, LogRecord, StatusClass};

pub use export::{export_report, read_report, ExportFormat, OTHER_CATEGORY};
pub use svg::render_bar_chart;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{labels} labels for {records} records")]
    LengthMismatch { labels: usize, records: usize },
    #[error("feature `{0}` is not profiled in this report")]
    UnknownFeature(Field),
    #[error("unknown export format `{0}`")]
    UnknownFormat(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Categories listed per attribute.
    pub top_n: usize,
    /// More distinct categories than this in a cluster marks the attribute
    /// as "many".
    pub many_threshold: usize,
    /// Clusters smaller than this are left out of distribution charts.
    pub min_size: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            top_n: 10,
            many_threshold: 10,
            min_size: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: String,
    pub count: u64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeProfile {
    pub feature: Field,
    pub distinct: usize,
    pub many: bool,
    /// True when categories beyond `top_n` were dropped from `top`.
    pub truncated: bool,
    /// Sorted by count, then category.
    pub top: Vec<CategoryShare>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorClassSplit {
    pub client_error: u64,
    pub server_error: u64,
    /// Rows below 400; zero for error-only input.
    pub other: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub size: u64,
    pub status_histogram: BTreeMap<u16, u64>,
    pub attribute_profiles: Vec<AttributeProfile>,
    pub error_class_split: ErrorClassSplit,
}

impl ClusterSummary {
    pub fn profile(&self, feature: Field) -> Option<&AttributeProfile> {
        self.attribute_profiles.iter().find(|p| p.feature == feature)
    }
}

/// Counts carried over from ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub total_lines: u64,
    pub parsed: u64,
    pub rejected: u64,
    pub error_lines: u64,
}

impl From<&CorpusStats> for SourceStats {
    fn from(s: &CorpusStats) -> Self {
        SourceStats {
            total_lines: s.total_lines,
            parsed: s.parsed,
            rejected: s.rejected,
            error_lines: s.error_lines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub host: String,
    pub params: ModelParams,
    pub features: Vec<Field>,
    pub summaries: Vec<ClusterSummary>,
    pub silhouette: Option<f64>,
    /// Latest timestamp among the summarised records, so reruns on the same
    /// data produce the same bytes.
    pub generated_at: DateTime<Utc>,
    pub source_stats: Option<SourceStats>,
    pub config: ReportConfig,
}

impl ClusterReport {
    pub fn total_rows(&self) -> u64 {
        self.summaries.iter().map(|s| s.size).sum()
    }

    /// Status histogram over all clusters.
    pub fn status_histogram(&self) -> BTreeMap<u16, u64> {
        let mut total = BTreeMap::new();
        for s in &self.summaries {
            for (&code, &n) in &s.status_histogram {
                *total.entry(code).or_insert(0) += n;
            }
        }
        total
    }
}

fn profile(feature: Field, counts: HashMap<&str, u64>, size: u64, config: &ReportConfig) -> AttributeProfile {
    let distinct = counts.len();
    let mut sorted: Vec<(&str, u64)> = counts.into_iter().collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let truncated = sorted.len() > config.top_n;
    sorted.truncate(config.top_n);
    AttributeProfile {
        feature,
        distinct,
        many: distinct > config.many_threshold,
        truncated,
        top: sorted
            .into_iter()
            .map(|(c, n)| CategoryShare {
                category: c.to_string(),
                count: n,
                share: n as f64 / size as f64,
            })
            .collect(),
    }
}

/// Summarise each cluster of `model` over `records` (aligned with the
/// model's labels). Attributes profiled are the model's features, minus the
/// status code, or every candidate field when the model names none.
pub fn summarize(
    model: &ClusterModel,
    records: &[LogRecord],
    host: &str,
    config: &ReportConfig,
) -> Result<ClusterReport, ReportError> {
    if model.labels.len() != records.len() {
        return Err(ReportError::LengthMismatch {
            labels: model.labels.len(),
            records: records.len(),
        });
    }
    let mut features: Vec<Field> = if model.features.is_empty() {
        Field::default_candidates()
    } else {
        model.features.clone()
    };
    features.retain(|f| *f != Field::StatusCode);

    let k = model.k().max(model.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0));
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in model.labels.iter().enumerate() {
        members[l as usize].push(i);
    }
    let views: Vec<Vec<String>> = features.iter().map(|&f| categorical_view(records, f)).collect();

    let summaries = members
        .iter()
        .enumerate()
        .map(|(c, rows)| {
            let size = rows.len() as u64;
            let mut status_histogram = BTreeMap::new();
            let mut split = ErrorClassSplit::default();
            for &i in rows {
                let r = &records[i];
                *status_histogram.entry(r.statuscode).or_insert(0) += 1;
                match r.status_class() {
                    StatusClass::ClientError => split.client_error += 1,
                    StatusClass::ServerError => split.server_error += 1,
                    _ => split.other += 1,
                }
            }
            let attribute_profiles = if size == 0 {
                Vec::new()
            } else {
                features
                    .iter()
                    .zip(&views)
                    .map(|(&f, view)| {
                        let mut counts: HashMap<&str, u64> = HashMap::new();
                        for &i in rows {
                            *counts.entry(view[i].as_str()).or_insert(0) += 1;
                        }
                        profile(f, counts, size, config)
                    })
                    .collect()
            };
            ClusterSummary {
                cluster_id: c,
                size,
                status_histogram,
                attribute_profiles,
                error_class_split: split,
            }
        })
        .collect();

    Ok(ClusterReport {
        host: host.to_string(),
        params: model.params.clone(),
        features,
        summaries,
        silhouette: None,
        generated_at: records
            .iter()
            .map(|r| r.timestamp)
            .max()
            .unwrap_or(DateTime::<Utc>::UNIX_EPOCH),
        source_stats: None,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartRow {
    pub cluster_id: usize,
    pub category: String,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmittedCluster {
    pub cluster_id: usize,
    pub size: u64,
    pub note: String,
}

/// Long-format cluster x category share table for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartTable {
    pub feature: Field,
    pub categories: Vec<String>,
    pub rows: Vec<ChartRow>,
    pub omitted: Vec<OmittedCluster>,
}

/// Shares of every category of `feature` in each cluster of at least
/// `report.config.min_size` rows. Categories are those listed in any shown
/// cluster's profile, ordered by total count; a cluster whose profile was
/// truncated puts the remainder under [`OTHER_CATEGORY`].
pub fn feature_distribution(report: &ClusterReport, feature: Field) -> Result<ChartTable, ReportError> {
    if !report.features.contains(&feature) {
        return Err(ReportError::UnknownFeature(feature));
    }
    let (shown, small): (Vec<&ClusterSummary>, Vec<&ClusterSummary>) = report
        .summaries
        .iter()
        .partition(|s| s.size >= report.config.min_size as u64 && s.size > 0);

    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    let mut any_truncated = false;
    for s in &shown {
        let p = s.profile(feature).ok_or(ReportError::UnknownFeature(feature))?;
        any_truncated |= p.truncated;
        for c in &p.top {
            *totals.entry(c.category.as_str()).or_insert(0) += c.count;
        }
    }
    let mut categories: Vec<(&str, u64)> = totals.into_iter().collect();
    categories.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut categories: Vec<String> = categories.into_iter().map(|(c, _)| c.to_string()).collect();
    if any_truncated {
        categories.push(OTHER_CATEGORY.to_string());
    }

    let mut rows = Vec::new();
    for s in &shown {
        let p = s.profile(feature).expect("checked above");
        let listed: f64 = p.top.iter().map(|c| c.share).sum();
        for cat in &categories {
            let share = if cat == OTHER_CATEGORY {
                if p.truncated {
                    (1.0 - listed).max(0.0)
                } else {
                    0.0
                }
            } else {
                p.top.iter().find(|c| &c.category == cat).map_or(0.0, |c| c.share)
            };
            rows.push(ChartRow {
                cluster_id: s.cluster_id,
                category: cat.clone(),
                share,
            });
        }
    }
    let omitted = small
        .into_iter()
        .map(|s| OmittedCluster {
            cluster_id: s.cluster_id,
            size: s.size,
            note: format!(
                "cluster {} has {} rows, below the chart minimum of {}",
                s.cluster_id, s.size, report.config.min_size
            ),
        })
        .collect();
    Ok(ChartTable {
        feature,
        categories,
        rows,
        omitted,
    })
}
