use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::trees::{extra_trees_importance, forward_scores, forward_select_with, ForwardSelection};
use super::{
    chi_square_scores, correlation_scores_multiclass, one_hot_encode, FeatureError, FeatureScore,
    Method, Target, TargetKind, DEFAULT_CARDINALITY_CAP,
};
use crate::log_model::{Field, LogRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub methods: BTreeSet<Method>,
    pub target_size: usize,
    pub target: TargetKind,
    /// Defaults to every field except the status code, timestamp and
    /// coordinates.
    pub candidates: Option<Vec<Field>>,
    pub cardinality_cap: usize,
    pub n_trees: usize,
    pub folds: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            methods: Method::ALL.into_iter().collect(),
            target_size: 13,
            target: TargetKind::StatusCode,
            candidates: None,
            cardinality_cap: DEFAULT_CARDINALITY_CAP,
            n_trees: 100,
            folds: 3,
            max_depth: super::trees::FORWARD_MAX_DEPTH,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn candidate_fields(&self) -> Vec<Field> {
        let mut fields = self
            .candidates
            .clone()
            .unwrap_or_else(Field::default_candidates);
        fields.sort();
        fields.dedup();
        fields
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub target: TargetKind,
    pub classes: Vec<String>,
    pub candidates: Vec<Field>,
    pub per_method_scores: Vec<FeatureScore>,
    /// Mean rank over the requested methods (lower is better).
    pub aggregated_rank: BTreeMap<Field, f64>,
    /// The `target_size` best candidates, best first.
    pub selected: Vec<Field>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardSelection>,
}

impl SelectionResult {
    pub fn scores_for(&self, method: Method) -> impl Iterator<Item = &FeatureScore> {
        self.per_method_scores.iter().filter(move |s| s.method == method)
    }
}

/// Run the requested scorers on `records` and keep the `target_size`
/// candidates with the best mean rank.
///
/// A candidate a method did not score counts as that method's worst rank.
/// Ties in mean rank fall back to canonical field order.
pub fn select_features(
    records: &[LogRecord],
    config: &SelectionConfig,
) -> Result<SelectionResult, FeatureError> {
    if config.methods.is_empty() {
        return Err(FeatureError::InvalidParameter("no selection method requested".into()));
    }
    if records.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let candidates = config.candidate_fields();
    if config.target_size > candidates.len() {
        return Err(FeatureError::InvalidParameter(format!(
            "target size {} exceeds {} candidates",
            config.target_size,
            candidates.len()
        )));
    }
    let target = Target::from_records(records, config.target);
    target.require_two_classes()?;

    let needs_matrix = config.methods.iter().any(|m| *m != Method::ChiSquare);
    let matrix = if needs_matrix {
        let (numeric, categorical): (Vec<Field>, Vec<Field>) =
            candidates.iter().partition(|f| f.is_numeric());
        Some(one_hot_encode(records, &categorical, &numeric, config.cardinality_cap)?)
    } else {
        None
    };

    let mut per_method_scores = Vec::new();
    let mut forward = None;
    for &method in &config.methods {
        let scores = match method {
            Method::ChiSquare => chi_square_scores(records, &candidates, &target)?,
            Method::Correlation => {
                correlation_scores_multiclass(matrix.as_ref().expect("encoded"), &target)?
            }
            Method::ExtraTrees => extra_trees_importance(
                matrix.as_ref().expect("encoded"),
                &target,
                config.n_trees,
                config.seed,
            )?,
            Method::Forward => {
                let fwd = forward_select_with(
                    matrix.as_ref().expect("encoded"),
                    &target,
                    config.target_size,
                    config.folds,
                    config.max_depth,
                    config.seed,
                )?;
                let scores = forward_scores(&fwd, &candidates);
                forward = Some(fwd);
                scores
            }
        };
        per_method_scores.extend(scores);
    }

    let aggregated_rank = aggregate_ranks(&per_method_scores, &config.methods, &candidates);
    let mut order: Vec<(Field, f64)> = aggregated_rank.iter().map(|(f, r)| (*f, *r)).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let selected = order
        .into_iter()
        .take(config.target_size)
        .map(|(f, _)| f)
        .collect();

    Ok(SelectionResult {
        target: config.target,
        classes: target.classes,
        candidates,
        per_method_scores,
        aggregated_rank,
        selected,
        forward,
    })
}

fn aggregate_ranks(
    scores: &[FeatureScore],
    methods: &BTreeSet<Method>,
    candidates: &[Field],
) -> BTreeMap<Field, f64> {
    let worst = candidates.len() as f64;
    candidates
        .iter()
        .map(|&f| {
            let total: f64 = methods
                .iter()
                .map(|&m| {
                    scores
                        .iter()
                        .find(|s| s.method == m && s.feature == f)
                        .map_or(worst, |s| s.rank as f64)
                })
                .sum();
            (f, total / methods.len() as f64)
        })
        .collect()
}
