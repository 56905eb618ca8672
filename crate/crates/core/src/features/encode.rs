use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::log_model::{Field, LogRecord, MISSING};

/// Indicator columns kept per categorical field before the remainder is
/// folded into an overflow column.
pub const DEFAULT_CARDINALITY_CAP: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    NumericStandardized { mean: f64, std: f64 },
    OnehotCategory { category: String },
    OnehotOverflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDescriptor {
    pub source_feature: Field,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl ColumnDescriptor {
    pub fn is_onehot(&self) -> bool {
        !matches!(self.kind, ColumnKind::NumericStandardized { .. })
    }

    /// `field=category`, `field=__overflow__` or the bare field name.
    pub fn label(&self) -> String {
        let f = self.source_feature.name();
        match &self.kind {
            ColumnKind::NumericStandardized { .. } => f.to_string(),
            ColumnKind::OnehotCategory { category } => format!("{f}={category}"),
            ColumnKind::OnehotOverflow => format!("{f}=__overflow__"),
        }
    }
}

/// Dense encoded view of a record set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<ColumnDescriptor>,
    /// Row-major, `rows x columns.len()`.
    pub values: Array2<f64>,
    /// Position of each row's source record in the encoded sequence.
    pub row_index: Vec<usize>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Source features with the contiguous column range each occupies, in
    /// column order.
    pub fn groups(&self) -> Vec<(Field, Range<usize>)> {
        let mut out: Vec<(Field, Range<usize>)> = Vec::new();
        for (j, col) in self.columns.iter().enumerate() {
            match out.last_mut() {
                Some((f, range)) if *f == col.source_feature && range.end == j => range.end = j + 1,
                _ => out.push((col.source_feature, j..j + 1)),
            }
        }
        out
    }

    pub fn source_features(&self) -> Vec<Field> {
        let mut seen = BTreeSet::new();
        self.columns
            .iter()
            .map(|c| c.source_feature)
            .filter(|f| seen.insert(*f))
            .collect()
    }

    /// Keep only columns of the given source features, in matrix order.
    pub fn select_features(&self, features: &[Field]) -> FeatureMatrix {
        let keep: Vec<usize> = (0..self.ncols())
            .filter(|&j| features.contains(&self.columns[j].source_feature))
            .collect();
        FeatureMatrix {
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self.values.select(ndarray::Axis(1), &keep),
            row_index: self.row_index.clone(),
        }
    }
}

/// Categories of one field, most frequent first, ties lexicographic.
fn ranked_categories(records: &[LogRecord], field: Field) -> (Vec<String>, HashMap<String, usize>) {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in records {
        *counts.entry(r.category(field).into_owned()).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let order = ranked.iter().map(|(c, _)| c.clone()).collect();
    let index = ranked
        .into_iter()
        .enumerate()
        .map(|(i, (c, _))| (c, i))
        .collect();
    (order, index)
}

/// One-hot encode categorical fields and z-standardise numeric ones.
///
/// A categorical field expands to one indicator per category, capped at the
/// `cardinality_cap` most frequent categories plus a single overflow column
/// when more exist. Numeric fields have missing values imputed with the
/// mean of the observed ones and are then scaled by the sample standard
/// deviation; constant columns encode as zeros.
pub fn one_hot_encode(
    records: &[LogRecord],
    categorical: &[Field],
    numeric: &[Field],
    cardinality_cap: usize,
) -> Result<FeatureMatrix, FeatureError> {
    if records.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    if cardinality_cap == 0 {
        return Err(FeatureError::InvalidParameter(
            "cardinality cap must be at least 1".into(),
        ));
    }
    if let Some(f) = categorical.iter().find(|f| numeric.contains(f)) {
        return Err(FeatureError::Overlap(*f));
    }
    if let Some(f) = numeric.iter().find(|f| !f.is_numeric()) {
        return Err(FeatureError::NotNumeric(*f));
    }

    let n = records.len();
    let mut columns = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();

    for &field in categorical {
        let (order, index) = ranked_categories(records, field);
        let kept = order.len().min(cardinality_cap);
        let overflow = order.len() > cardinality_cap;
        let base = data.len();
        for cat in &order[..kept] {
            columns.push(ColumnDescriptor {
                source_feature: field,
                kind: ColumnKind::OnehotCategory {
                    category: cat.clone(),
                },
            });
            data.push(vec![0.0; n]);
        }
        if overflow {
            columns.push(ColumnDescriptor {
                source_feature: field,
                kind: ColumnKind::OnehotOverflow,
            });
            data.push(vec![0.0; n]);
        }
        for (i, r) in records.iter().enumerate() {
            let pos = index[r.category(field).as_ref()].min(kept);
            data[base + pos][i] = 1.0;
        }
    }

    for &field in numeric {
        let raw: Vec<Option<f64>> = records.iter().map(|r| r.numeric(field)).collect();
        let present: Vec<f64> = raw.iter().flatten().copied().collect();
        let fill = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        let imputed: Vec<f64> = raw.iter().map(|v| v.unwrap_or(fill)).collect();
        let (mean, std) = mean_std(&imputed);
        let col = if std > 0.0 {
            imputed.iter().map(|v| (v - mean) / std).collect()
        } else {
            vec![0.0; n]
        };
        columns.push(ColumnDescriptor {
            source_feature: field,
            kind: ColumnKind::NumericStandardized { mean, std },
        });
        data.push(col);
    }

    let d = data.len();
    let values = Array2::from_shape_fn((n, d), |(i, j)| data[j][i]);
    Ok(FeatureMatrix {
        columns,
        values,
        row_index: (0..n).collect(),
    })
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let std = (ss / (n - 1) as f64).sqrt();
    // Rounding can leave a tiny positive spread on constant input.
    if std <= 1e-12 * mean.abs().max(1.0) {
        (mean, 0.0)
    } else {
        (mean, std)
    }
}

/// Quantile at `q` by linear interpolation between order statistics.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bin values into at most `bins` quantile intervals.
///
/// Interval edges are the minimum, the `i / bins` quantiles and the maximum;
/// duplicate edges collapse, so skewed data yields fewer bins. The first
/// interval is closed, the rest are left-open: `[e0, e1]`, `(e1, e2]`, ...
/// Missing values get the missing category.
pub fn discretize_numeric(values: &[Option<f64>], bins: usize) -> Result<Vec<String>, FeatureError> {
    if bins < 2 {
        return Err(FeatureError::InvalidParameter("need at least 2 bins".into()));
    }
    if values.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let mut sorted: Vec<f64> = values.iter().flatten().copied().filter(|v| !v.is_nan()).collect();
    if sorted.is_empty() {
        return Ok(vec![MISSING.to_string(); values.len()]);
    }
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (0..=bins)
        .map(|i| quantile(&sorted, i as f64 / bins as f64))
        .collect();
    edges.dedup();
    let labels: Vec<String> = if edges.len() == 1 {
        vec![format!("[{}, {}]", edges[0], edges[0])]
    } else {
        edges
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let open = if i == 0 { '[' } else { '(' };
                format!("{open}{}, {}]", w[0], w[1])
            })
            .collect()
    };
    Ok(values
        .iter()
        .map(|v| match v {
            Some(x) if !x.is_nan() => {
                // Number of inner edges strictly below x.
                let inner = &edges[1..edges.len().saturating_sub(1).max(1)];
                let bin = if edges.len() == 1 {
                    0
                } else {
                    inner.partition_point(|e| e < x)
                };
                labels[bin.min(labels.len() - 1)].clone()
            }
            _ => MISSING.to_string(),
        })
        .collect())
}
