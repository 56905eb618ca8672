use std::collections::BTreeMap;

use super::{rank_scores, FeatureError, FeatureMatrix, FeatureScore, Method, Target};
use crate::log_model::Field;

/// Pearson correlation; zero when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n == 0 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

fn variance_is_zero(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

fn per_feature_max(matrix: &FeatureMatrix, targets: &[Vec<f64>]) -> Vec<(Field, f64)> {
    let mut best: BTreeMap<Field, f64> = BTreeMap::new();
    for (j, col) in matrix.columns.iter().enumerate() {
        let column = matrix.values.column(j).to_vec();
        let r = targets
            .iter()
            .map(|t| pearson(&column, t).abs())
            .fold(0.0, f64::max);
        let entry = best.entry(col.source_feature).or_insert(0.0);
        *entry = entry.max(r);
    }
    best.into_iter().collect()
}

/// Per source feature, the largest |Pearson r| between any of its encoded
/// columns and a numeric target.
pub fn correlation_scores(
    matrix: &FeatureMatrix,
    target: &[f64],
) -> Result<Vec<FeatureScore>, FeatureError> {
    if matrix.rows() < 3 {
        return Err(FeatureError::TooFewRows {
            needed: 3,
            got: matrix.rows(),
        });
    }
    if target.len() != matrix.rows() {
        return Err(FeatureError::LengthMismatch {
            target: target.len(),
            rows: matrix.rows(),
        });
    }
    if variance_is_zero(target) {
        return Err(FeatureError::ZeroVarianceTarget);
    }
    Ok(rank_scores(
        Method::Correlation,
        per_feature_max(matrix, &[target.to_vec()]),
    ))
}

/// Correlation against a class target: each class is encoded as a one-vs-rest
/// indicator and a feature scores its largest |r| over all classes. With two
/// classes this equals [`correlation_scores`] on the 0/1 class encoding.
pub fn correlation_scores_multiclass(
    matrix: &FeatureMatrix,
    target: &Target,
) -> Result<Vec<FeatureScore>, FeatureError> {
    if matrix.rows() < 3 {
        return Err(FeatureError::TooFewRows {
            needed: 3,
            got: matrix.rows(),
        });
    }
    if target.labels.len() != matrix.rows() {
        return Err(FeatureError::LengthMismatch {
            target: target.labels.len(),
            rows: matrix.rows(),
        });
    }
    target.require_two_classes()?;
    let classes = if target.observed_classes() == 2 {
        vec![target.labels[0]]
    } else {
        (0..target.n_classes()).collect()
    };
    let indicators: Vec<Vec<f64>> = classes
        .into_iter()
        .map(|c| target.indicator(c))
        .filter(|t| !variance_is_zero(t))
        .collect();
    Ok(rank_scores(
        Method::Correlation,
        per_feature_max(matrix, &indicators),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ColumnDescriptor, ColumnKind};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn matrix(cols: &[(Field, Vec<f64>)]) -> FeatureMatrix {
        let n = cols[0].1.len();
        FeatureMatrix {
            columns: cols
                .iter()
                .map(|(f, _)| ColumnDescriptor {
                    source_feature: *f,
                    kind: ColumnKind::NumericStandardized { mean: 0.0, std: 1.0 },
                })
                .collect(),
            values: Array2::from_shape_fn((n, cols.len()), |(i, j)| cols[j].1[i]),
            row_index: (0..n).collect(),
        }
    }

    #[test]
    fn self_and_negated_correlation() {
        let t: Vec<f64> = (0..10).map(|i| (i % 3) as f64).collect();
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        let m = matrix(&[(Field::Path, t.clone()), (Field::Method, neg)]);
        let scores = correlation_scores(&m, &t).unwrap();
        for s in &scores {
            assert!((s.score - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_column_near_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let scores = correlation_scores(&matrix(&[(Field::Path, x)]), &t).unwrap();
        assert!(scores[0].score < 0.05, "{}", scores[0].score);
    }

    #[test]
    fn zero_variance_handling() {
        let t = vec![1.0, 0.0, 1.0, 0.0];
        let m = matrix(&[(Field::Path, vec![2.0; 4])]);
        assert_eq!(correlation_scores(&m, &t).unwrap()[0].score, 0.0);
        assert!(matches!(
            correlation_scores(&m, &[1.0; 4]),
            Err(FeatureError::ZeroVarianceTarget)
        ));
        let small = matrix(&[(Field::Path, vec![1.0, 2.0])]);
        assert!(matches!(
            correlation_scores(&small, &[0.0, 1.0]),
            Err(FeatureError::TooFewRows { .. })
        ));
    }

    #[test]
    fn multiclass_uses_best_indicator() {
        let labels = vec![0, 1, 2, 0, 1, 2, 0, 1, 2];
        let col: Vec<f64> = labels.iter().map(|&l| (l == 2) as u8 as f64).collect();
        let m = matrix(&[(Field::Path, col)]);
        let scores = correlation_scores_multiclass(&m, &Target::from_labels(labels)).unwrap();
        assert!((scores[0].score - 1.0).abs() < 1e-12);
    }
}
