use std::collections::BTreeMap;

use super::{discretize_numeric, rank_scores, FeatureError, FeatureScore, Method, Target};
use crate::log_model::{Field, LogRecord};

/// Quantile bins used when a numeric field enters a contingency table.
const NUMERIC_BINS: usize = 5;

/// Pearson's statistic `sum((O - E)^2 / E)` of a contingency table, with
/// expected counts from the row and column marginals. Rows or columns with a
/// zero marginal contribute nothing.
pub fn chi_square_statistic(table: &[Vec<f64>]) -> f64 {
    let n_cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..n_cols)
        .map(|j| table.iter().map(|r| r.get(j).copied().unwrap_or(0.0)).sum())
        .collect();
    let total: f64 = row_sums.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &col_sum) in col_sums.iter().enumerate() {
            let expected = row_sums[i] * col_sum / total;
            if expected > 0.0 {
                let observed = row.get(j).copied().unwrap_or(0.0);
                stat += (observed - expected).powi(2) / expected;
            }
        }
    }
    stat
}

/// Category labels of `field` for each record; numeric fields are quantile
/// binned first.
pub(crate) fn categorical_view(records: &[LogRecord], field: Field) -> Vec<String> {
    if field.is_numeric() {
        let values: Vec<Option<f64>> = records.iter().map(|r| r.numeric(field)).collect();
        discretize_numeric(&values, NUMERIC_BINS).expect("records are non-empty")
    } else {
        records.iter().map(|r| r.category(field).into_owned()).collect()
    }
}

/// Chi-square statistic of each candidate's category x target-class table.
pub fn chi_square_scores(
    records: &[LogRecord],
    candidates: &[Field],
    target: &Target,
) -> Result<Vec<FeatureScore>, FeatureError> {
    if records.len() != target.labels.len() {
        return Err(FeatureError::LengthMismatch {
            target: target.labels.len(),
            rows: records.len(),
        });
    }
    target.require_two_classes()?;
    let k = target.n_classes();
    let scores = candidates
        .iter()
        .map(|&field| {
            let mut table: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for (cat, &label) in categorical_view(records, field).into_iter().zip(&target.labels) {
                table.entry(cat).or_insert_with(|| vec![0.0; k])[label] += 1.0;
            }
            let rows: Vec<Vec<f64>> = table.into_values().collect();
            (field, chi_square_statistic(&rows))
        })
        .collect();
    Ok(rank_scores(Method::ChiSquare, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    #[test]
    fn hand_evaluated_two_by_two() {
        // E = 15 everywhere; each cell contributes 25/15.
        let stat = chi_square_statistic(&[vec![10.0, 20.0], vec![20.0, 10.0]]);
        assert!((stat - 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn independent_table_scores_zero() {
        let stat = chi_square_statistic(&[vec![10.0, 30.0], vec![5.0, 15.0], vec![2.0, 6.0]]);
        assert!(stat.abs() < 1e-12);
    }

    #[test]
    fn perfectly_predictive_balanced() {
        // 20 rows, E = 5 in every cell: 2 * (25/5) + 2 * (25/5) = 20.
        let stat = chi_square_statistic(&[vec![10.0, 0.0], vec![0.0, 10.0]]);
        assert!((stat - 20.0).abs() < 1e-12);
    }

    #[test]
    fn zero_marginals_ignored() {
        let stat = chi_square_statistic(&[vec![10.0, 0.0, 20.0], vec![20.0, 0.0, 10.0], vec![0.0; 3]]);
        assert!((stat - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(chi_square_statistic(&[]), 0.0);
    }

    fn records(pairs: &[(&str, &str, u16)]) -> Vec<LogRecord> {
        pairs
            .iter()
            .map(|(m, p, s)| {
                let mut r = LogRecord::new(*s, "h", *m, Utc::now()).unwrap();
                r.protocol = Some(p.to_string());
                r
            })
            .collect()
    }

    #[test]
    fn scores_rank_predictive_feature_first() {
        let mut pairs = Vec::new();
        for i in 0..40 {
            let status = if i % 2 == 0 { 404 } else { 502 };
            let method = if status == 404 { "GET" } else { "POST" };
            let protocol = if i % 4 < 2 { "HTTP/1.1" } else { "HTTP/2" };
            pairs.push((method, protocol, status));
        }
        let recs = records(&pairs);
        let target = Target::from_records(&recs, super::super::TargetKind::StatusCode);
        let scores = chi_square_scores(&recs, &[Field::Protocol, Field::Method], &target).unwrap();
        assert_eq!(scores[0].feature, Field::Method);
        assert!((scores[0].score - 40.0).abs() < 1e-9);
        assert!(scores[1].score.abs() < 1e-9);
    }

    #[test]
    fn single_class_rejected() {
        let recs = records(&[("GET", "a", 404), ("GET", "b", 404)]);
        let target = Target::from_records(&recs, super::super::TargetKind::StatusCode);
        assert!(matches!(
            chi_square_scores(&recs, &[Field::Method], &target),
            Err(FeatureError::SingleClass(_))
        ));
    }
}
