//! Feature encoding and relevance ranking.
//!
//! Records are encoded into a [`FeatureMatrix`]: categorical fields are
//! one-hot expanded (with an overflow column for rare categories beyond the
//! cardinality cap) and numeric fields are z-standardised. Four scorers rank
//! the source fields by how much they tell about the status code:
//! chi-square independence tests, absolute Pearson correlation, impurity
//! importance from extremely randomised trees, and greedy forward selection
//! with a cross-validated decision tree. [`select_features`] runs any subset
//! of them and combines their ranks.

mod chi2;
mod correlation;
mod encode;
mod export;
mod select;
mod trees;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log_model::{Field, LogRecord};

pub use chi2::{chi_square_scores, chi_square_statistic};
pub(crate) use chi2::categorical_view;
pub use correlation::{correlation_scores, correlation_scores_multiclass, pearson};
pub use encode::{
    discretize_numeric, one_hot_encode, ColumnDescriptor, ColumnKind, FeatureMatrix,
    DEFAULT_CARDINALITY_CAP,
};
pub use export::{decode_matrix, encode_matrix, read_matrix, write_matrix, MatrixSidecar};
pub use select::{select_features, SelectionConfig, SelectionResult};
pub use trees::{
    extra_trees_importance, forward_scores, forward_select, forward_select_with, ForwardSelection,
    TreeParams, FORWARD_MAX_DEPTH, FORWARD_MIN_GAIN,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no records to encode")]
    EmptyInput,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` is listed as both categorical and numeric")]
    Overlap(Field),
    #[error("feature `{0}` is not numeric")]
    NotNumeric(Field),
    #[error("the target has a single class ({0}); pick a host or corpus with more than one status code")]
    SingleClass(String),
    #[error("the target has zero variance")]
    ZeroVarianceTarget,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("target has {target} labels but the matrix has {rows} rows")]
    LengthMismatch { target: usize, rows: usize },
    #[error("malformed matrix file: {0}")]
    Format(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Feature-scoring technique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ChiSquare,
    Correlation,
    ExtraTrees,
    Forward,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::ChiSquare,
        Method::Correlation,
        Method::ExtraTrees,
        Method::Forward,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Method::ChiSquare => "chi2",
            Method::Correlation => "corr",
            Method::ExtraTrees => "xtrees",
            Method::Forward => "forward",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Method {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "chi2" | "chi_square" | "chisquare" => Method::ChiSquare,
            "corr" | "correlation" => Method::Correlation,
            "xtrees" | "extra_trees" | "extratrees" => Method::ExtraTrees,
            "forward" => Method::Forward,
            _ => return Err(FeatureError::InvalidParameter(format!("unknown method `{s}`"))),
        })
    }
}

/// Relevance of one source field under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: Field,
    pub method: Method,
    pub score: f64,
    pub rank: usize,
}

/// Rank by descending score; ties and NaNs resolve by canonical field order.
pub fn rank_scores(method: Method, scores: Vec<(Field, f64)>) -> Vec<FeatureScore> {
    let mut scores: Vec<(Field, f64)> = scores
        .into_iter()
        .map(|(f, s)| (f, if s.is_nan() { f64::NEG_INFINITY } else { s }))
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scores
        .into_iter()
        .enumerate()
        .map(|(i, (feature, score))| FeatureScore {
            feature,
            method,
            score,
            rank: i + 1,
        })
        .collect()
}

/// What supervised scorers predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Each distinct observed status code is a class.
    #[default]
    StatusCode,
    /// Client (4xx) versus server (5xx) errors.
    ErrorClass,
}

/// Class labels derived from records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl Target {
    pub fn from_records(records: &[LogRecord], kind: TargetKind) -> Target {
        let key = |r: &LogRecord| match kind {
            TargetKind::StatusCode => r.statuscode.to_string(),
            TargetKind::ErrorClass => match r.statuscode {
                500.. => "server_error".to_string(),
                400.. => "client_error".to_string(),
                _ => "non_error".to_string(),
            },
        };
        let mut classes: Vec<String> = records.iter().map(key).collect();
        classes.sort();
        classes.dedup();
        let labels = records
            .iter()
            .map(|r| classes.binary_search(&key(r)).expect("class collected above"))
            .collect();
        Target { labels, classes }
    }

    pub fn from_labels(labels: Vec<usize>) -> Target {
        let n = labels.iter().max().map_or(0, |m| m + 1);
        Target {
            labels,
            classes: (0..n).map(|c| c.to_string()).collect(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Number of classes that actually occur.
    pub fn observed_classes(&self) -> usize {
        let mut seen = vec![false; self.classes.len()];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.into_iter().filter(|s| *s).count()
    }

    pub(crate) fn require_two_classes(&self) -> Result<(), FeatureError> {
        if self.observed_classes() < 2 {
            return Err(FeatureError::SingleClass(
                self.classes.first().cloned().unwrap_or_default(),
            ));
        }
        Ok(())
    }

    /// 0/1 indicator of `class`.
    pub fn indicator(&self, class: usize) -> Vec<f64> {
        self.labels.iter().map(|&l| (l == class) as u8 as f64).collect()
    }
}
