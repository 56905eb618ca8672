//! Tree learners over an encoded matrix: extremely randomised trees for
//! impurity importance, and a depth-bounded CART used as the evaluator of
//! forward selection.
//!
//! Both work on a compact view of the matrix in which every well-formed
//! one-hot group is stored as one column of category codes. A split on an
//! indicator column is then "code == c", which is what a threshold on the
//! 0/1 column would produce, but costs one pass per group instead of one per
//! indicator.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rank_scores, FeatureError, FeatureMatrix, FeatureScore, Method, Target};
use crate::log_model::Field;
use crate::seed;

/// Depth bound of the forward-selection evaluator.
pub const FORWARD_MAX_DEPTH: usize = 5;
/// Accuracy gain a candidate must exceed to be added.
pub const FORWARD_MIN_GAIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub n_trees: usize,
    pub folds: usize,
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            n_trees: 100,
            folds: 3,
            max_depth: FORWARD_MAX_DEPTH,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Col {
    Indicator { group: usize, code: u32 },
    Dense(usize),
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    Codes { group: usize, n_codes: u32 },
    Dense(usize),
}

struct Compact {
    n: usize,
    cols: Vec<Col>,
    col_feature: Vec<Field>,
    codes: Vec<Vec<u32>>,
    dense: Vec<Vec<f64>>,
    units: Vec<(Field, Unit)>,
}

impl Compact {
    fn new(matrix: &FeatureMatrix) -> Compact {
        let n = matrix.rows();
        let mut c = Compact {
            n,
            cols: Vec::with_capacity(matrix.ncols()),
            col_feature: Vec::with_capacity(matrix.ncols()),
            codes: Vec::new(),
            dense: Vec::new(),
            units: Vec::new(),
        };
        for (field, range) in matrix.groups() {
            let onehot = range.clone().all(|j| matrix.columns[j].is_onehot());
            let codes = onehot
                .then(|| {
                    (0..n)
                        .map(|i| {
                            let mut hot = None;
                            for (pos, j) in range.clone().enumerate() {
                                match matrix.values[[i, j]] {
                                    v if v == 1.0 && hot.is_none() => hot = Some(pos as u32),
                                    v if v == 0.0 => {}
                                    _ => return None,
                                }
                            }
                            hot
                        })
                        .collect::<Option<Vec<u32>>>()
                })
                .flatten();
            match codes {
                Some(codes) => {
                    let group = c.codes.len();
                    c.codes.push(codes);
                    c.units.push((
                        field,
                        Unit::Codes {
                            group,
                            n_codes: range.len() as u32,
                        },
                    ));
                    for code in 0..range.len() as u32 {
                        c.cols.push(Col::Indicator { group, code });
                        c.col_feature.push(field);
                    }
                }
                None => {
                    for j in range {
                        let d = c.dense.len();
                        c.dense.push(matrix.values.column(j).to_vec());
                        c.units.push((field, Unit::Dense(d)));
                        c.cols.push(Col::Dense(d));
                        c.col_feature.push(field);
                    }
                }
            }
        }
        c
    }

    fn unit_cmp(&self, unit: Unit, a: usize, b: usize) -> Ordering {
        match unit {
            Unit::Codes { group, .. } => self.codes[group][a].cmp(&self.codes[group][b]),
            Unit::Dense(d) => self.dense[d][a].total_cmp(&self.dense[d][b]),
        }
    }
}

fn gini_weighted(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    nf - sum_sq / nf
}

fn class_counts(idx: &[u32], labels: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &i in idx {
        counts[labels[i as usize]] += 1;
    }
    counts
}

fn check_target(matrix: &FeatureMatrix, target: &Target) -> Result<(), FeatureError> {
    if target.labels.len() != matrix.rows() {
        return Err(FeatureError::LengthMismatch {
            target: target.labels.len(),
            rows: matrix.rows(),
        });
    }
    target.require_two_classes()
}

/// Grow one extremely randomised tree; returns the impurity decrease credited
/// to each matrix column.
fn extra_tree(data: &Compact, labels: &[usize], k: usize, max_features: usize, tree_seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(tree_seed);
    let d = data.cols.len();
    let mut importance = vec![0.0; d];
    let mut perm: Vec<usize> = (0..d).collect();
    let mut idx: Vec<u32> = (0..data.n as u32).collect();
    // Depth-first, left child first.
    let mut stack = vec![(0usize, data.n)];
    let mut left = vec![0usize; k];

    while let Some((start, end)) = stack.pop() {
        let node = &idx[start..end];
        let n_node = node.len();
        let counts = class_counts(node, labels, k);
        if n_node < 2 || counts.iter().any(|&c| c == n_node) {
            continue;
        }
        let parent = gini_weighted(&counts, n_node);

        // (decrease, column, threshold)
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        for i in 0..d {
            let j = rng.gen_range(i..d);
            perm.swap(i, j);
            let col = perm[i];
            left.iter_mut().for_each(|c| *c = 0);
            let (n_left, threshold) = match data.cols[col] {
                Col::Indicator { group, code } => {
                    let codes = &data.codes[group];
                    let mut n_left = 0;
                    for &r in node {
                        if codes[r as usize] != code {
                            n_left += 1;
                            left[labels[r as usize]] += 1;
                        }
                    }
                    if n_left == 0 || n_left == n_node {
                        continue;
                    }
                    (n_left, rng.gen_range(0.0..1.0))
                }
                Col::Dense(dcol) => {
                    let values = &data.dense[dcol];
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for &r in node {
                        let v = values[r as usize];
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    if !(lo < hi) {
                        continue;
                    }
                    let threshold = rng.gen_range(lo..hi);
                    let mut n_left = 0;
                    for &r in node {
                        if values[r as usize] <= threshold {
                            n_left += 1;
                            left[labels[r as usize]] += 1;
                        }
                    }
                    (n_left, threshold)
                }
            };
            let right: Vec<usize> = counts.iter().zip(&left).map(|(t, l)| t - l).collect();
            let decrease =
                parent - gini_weighted(&left, n_left) - gini_weighted(&right, n_node - n_left);
            if best.is_none_or(|(b, _, _)| decrease > b) {
                best = Some((decrease, col, threshold));
            }
            visited += 1;
            if visited == max_features {
                break;
            }
        }

        let Some((decrease, col, threshold)) = best else {
            continue;
        };
        importance[col] += decrease.max(0.0);
        let goes_left = |r: u32| match data.cols[col] {
            Col::Indicator { group, code } => data.codes[group][r as usize] != code,
            Col::Dense(dcol) => data.dense[dcol][r as usize] <= threshold,
        };
        let slice = &mut idx[start..end];
        let mut split = 0;
        for i in 0..slice.len() {
            if goes_left(slice[i]) {
                slice.swap(i, split);
                split += 1;
            }
        }
        stack.push((start + split, end));
        stack.push((start, start + split));
    }
    importance
}

/// Impurity importance of each source feature under a forest of extremely
/// randomised trees.
///
/// Each node considers `floor(sqrt(columns))` randomly chosen non-constant
/// columns, draws one uniform threshold for each, and keeps the split with
/// the largest Gini decrease. Column importances are normalised per tree,
/// averaged over trees, summed per source feature and renormalised to sum to
/// one. Tree `t` is seeded with `seed + t`.
pub fn extra_trees_importance(
    matrix: &FeatureMatrix,
    target: &Target,
    n_trees: usize,
    seed: u64,
) -> Result<Vec<FeatureScore>, FeatureError> {
    if n_trees == 0 {
        return Err(FeatureError::InvalidParameter("n_trees must be at least 1".into()));
    }
    check_target(matrix, target)?;
    let data = Compact::new(matrix);
    let d = data.cols.len();
    let max_features = ((d as f64).sqrt().floor() as usize).max(1);
    let k = target.n_classes();

    let per_tree: Vec<Vec<f64>> = (0..n_trees)
        .into_par_iter()
        .map(|t| extra_tree(&data, &target.labels, k, max_features, seed.wrapping_add(t as u64)))
        .collect();

    let mut total = vec![0.0; d];
    for imp in &per_tree {
        let s: f64 = imp.iter().sum();
        if s > 0.0 {
            for (acc, v) in total.iter_mut().zip(imp) {
                *acc += v / s;
            }
        }
    }
    let mut per_feature: BTreeMap<Field, f64> = BTreeMap::new();
    for (col, v) in total.iter().enumerate() {
        *per_feature.entry(data.col_feature[col]).or_default() += v;
    }
    let sum: f64 = per_feature.values().sum();
    let n_features = per_feature.len() as f64;
    let scores = per_feature
        .into_iter()
        .map(|(f, v)| (f, if sum > 0.0 { v / sum } else { 1.0 / n_features }))
        .collect();
    Ok(rank_scores(Method::ExtraTrees, scores))
}

enum Node {
    Leaf(usize),
    Codes { group: usize, code: u32, eq: Box<Node>, ne: Box<Node> },
    Dense { col: usize, threshold: f64, le: Box<Node>, gt: Box<Node> },
}

impl Node {
    fn predict(&self, data: &Compact, row: usize) -> usize {
        match self {
            Node::Leaf(c) => *c,
            Node::Codes { group, code, eq, ne } => {
                if data.codes[*group][row] == *code {
                    eq.predict(data, row)
                } else {
                    ne.predict(data, row)
                }
            }
            Node::Dense { col, threshold, le, gt } => {
                if data.dense[*col][row] <= *threshold {
                    le.predict(data, row)
                } else {
                    gt.predict(data, row)
                }
            }
        }
    }
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

enum Split {
    Codes { group: usize, code: u32 },
    Dense { col: usize, threshold: f64 },
}

/// Best CART split of a node over `units`, as (decrease, split).
fn best_split(data: &Compact, units: &[Unit], labels: &[usize], k: usize, node: &[u32], counts: &[usize]) -> Option<(f64, Split)> {
    let n_node = node.len();
    let parent = gini_weighted(counts, n_node);
    let mut best: Option<(f64, Split)> = None;
    let consider = |decrease: f64, split: Split, best: &mut Option<(f64, Split)>| {
        if decrease > 1e-12 && best.as_ref().is_none_or(|(b, _)| decrease > *b) {
            *best = Some((decrease, split));
        }
    };
    for &unit in units {
        match unit {
            Unit::Codes { group, n_codes } => {
                let codes = &data.codes[group];
                let mut table = vec![0usize; n_codes as usize * k];
                let mut sizes = vec![0usize; n_codes as usize];
                for &r in node {
                    let c = codes[r as usize] as usize;
                    table[c * k + labels[r as usize]] += 1;
                    sizes[c] += 1;
                }
                for code in 0..n_codes as usize {
                    let n_eq = sizes[code];
                    if n_eq == 0 || n_eq == n_node {
                        continue;
                    }
                    let eq = &table[code * k..(code + 1) * k];
                    let ne: Vec<usize> = counts.iter().zip(eq).map(|(t, e)| t - e).collect();
                    let decrease = parent - gini_weighted(eq, n_eq) - gini_weighted(&ne, n_node - n_eq);
                    consider(decrease, Split::Codes { group, code: code as u32 }, &mut best);
                }
            }
            Unit::Dense(col) => {
                let values = &data.dense[col];
                let mut pairs: Vec<(f64, usize)> =
                    node.iter().map(|&r| (values[r as usize], labels[r as usize])).collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut left = vec![0usize; k];
                for i in 0..n_node - 1 {
                    left[pairs[i].1] += 1;
                    if pairs[i].0 == pairs[i + 1].0 {
                        continue;
                    }
                    let n_left = i + 1;
                    let right: Vec<usize> = counts.iter().zip(&left).map(|(t, l)| t - l).collect();
                    let decrease = parent - gini_weighted(&left, n_left) - gini_weighted(&right, n_node - n_left);
                    let threshold = pairs[i].0 + (pairs[i + 1].0 - pairs[i].0) / 2.0;
                    consider(decrease, Split::Dense { col, threshold }, &mut best);
                }
            }
        }
    }
    best
}

fn grow_cart(data: &Compact, units: &[Unit], labels: &[usize], k: usize, node: &mut [u32], depth: usize) -> Node {
    let counts = class_counts(node, labels, k);
    let n_node = node.len();
    if depth == 0 || n_node < 2 || counts.iter().any(|&c| c == n_node) {
        return Node::Leaf(majority(&counts));
    }
    let Some((_, split)) = best_split(data, units, labels, k, node, &counts) else {
        return Node::Leaf(majority(&counts));
    };
    let goes_first = |r: u32| match split {
        Split::Codes { group, code } => data.codes[group][r as usize] == code,
        Split::Dense { col, threshold } => data.dense[col][r as usize] <= threshold,
    };
    let mut mid = 0;
    for i in 0..node.len() {
        if goes_first(node[i]) {
            node.swap(i, mid);
            mid += 1;
        }
    }
    let (first, second) = node.split_at_mut(mid);
    let a = Box::new(grow_cart(data, units, labels, k, first, depth - 1));
    let b = Box::new(grow_cart(data, units, labels, k, second, depth - 1));
    match split {
        Split::Codes { group, code } => Node::Codes { group, code, eq: a, ne: b },
        Split::Dense { col, threshold } => Node::Dense { col, threshold, le: a, gt: b },
    }
}

/// Mean k-fold accuracy of a depth-bounded tree on `units`.
fn cv_accuracy(data: &Compact, units: &[Unit], labels: &[usize], k: usize, folds: &[usize], n_folds: usize, max_depth: usize) -> f64 {
    let mut total = 0.0;
    let mut used = 0;
    for f in 0..n_folds {
        let mut train: Vec<u32> = (0..data.n as u32).filter(|&i| folds[i as usize] != f).collect();
        let test: Vec<usize> = (0..data.n).filter(|&i| folds[i] == f).collect();
        if test.is_empty() || train.is_empty() {
            continue;
        }
        let tree = grow_cart(data, units, labels, k, &mut train, max_depth);
        let correct = test.iter().filter(|&&i| tree.predict(data, i) == labels[i]).count();
        total += correct as f64 / test.len() as f64;
        used += 1;
    }
    if used == 0 {
        0.0
    } else {
        total / used as f64
    }
}

/// Outcome of greedy forward selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardSelection {
    /// Features in the order they were added.
    pub features: Vec<Field>,
    /// Cross-validated accuracy after each addition.
    pub accuracies: Vec<f64>,
    /// Accuracy with no features (majority class).
    pub baseline: f64,
    /// Accuracy each remaining candidate reached in the last round.
    pub last_round: Vec<(Field, f64)>,
}

/// Greedy forward wrapper selection.
///
/// Starting from the empty set, every round adds the candidate whose
/// inclusion gives the highest mean cross-validated accuracy of a decision
/// tree of depth at most `max_depth`; selection stops once the best gain is
/// not above 1e-6 or `max_features` are chosen. Fold membership depends on
/// row content, not row order, so permuting rows leaves the result unchanged.
pub fn forward_select_with(
    matrix: &FeatureMatrix,
    target: &Target,
    max_features: usize,
    folds: usize,
    max_depth: usize,
    seed: u64,
) -> Result<ForwardSelection, FeatureError> {
    if folds < 2 {
        return Err(FeatureError::InvalidParameter("need at least 2 folds".into()));
    }
    if matrix.rows() < folds {
        return Err(FeatureError::TooFewRows {
            needed: folds,
            got: matrix.rows(),
        });
    }
    check_target(matrix, target)?;
    let data = Compact::new(matrix);
    let candidates = matrix.source_features();
    if max_features > candidates.len() {
        return Err(FeatureError::InvalidParameter(format!(
            "max_features {max_features} exceeds {} candidates",
            candidates.len()
        )));
    }
    let labels = &target.labels;
    let k = target.n_classes();

    let mut order: Vec<usize> = (0..data.n).collect();
    order.sort_by(|&a, &b| {
        data.units
            .iter()
            .map(|&(_, u)| data.unit_cmp(u, a, b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then(labels[a].cmp(&labels[b]))
    });
    order.shuffle(&mut seed::rng(seed));
    let mut fold_of = vec![0; data.n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }

    let units_of = |f: Field| -> Vec<Unit> {
        data.units.iter().filter(|(g, _)| *g == f).map(|&(_, u)| u).collect()
    };
    let baseline = cv_accuracy(&data, &[], labels, k, &fold_of, folds, max_depth);
    let mut selection = ForwardSelection {
        features: Vec::new(),
        accuracies: Vec::new(),
        baseline,
        last_round: Vec::new(),
    };
    let mut current = baseline;
    let mut chosen_units: Vec<Unit> = Vec::new();
    while selection.features.len() < max_features {
        let remaining: Vec<Field> = candidates
            .iter()
            .copied()
            .filter(|f| !selection.features.contains(f))
            .collect();
        let round: Vec<(Field, f64)> = remaining
            .par_iter()
            .map(|&f| {
                let mut units = chosen_units.clone();
                units.extend(units_of(f));
                (f, cv_accuracy(&data, &units, labels, k, &fold_of, folds, max_depth))
            })
            .collect();
        let best = round
            .iter()
            .copied()
            .reduce(|a, b| if b.1 > a.1 { b } else { a });
        match best {
            Some((f, acc)) if acc > current + FORWARD_MIN_GAIN => {
                selection.features.push(f);
                selection.accuracies.push(acc);
                chosen_units.extend(units_of(f));
                current = acc;
                selection.last_round = round.into_iter().filter(|(g, _)| *g != f).collect();
            }
            _ => {
                selection.last_round = round;
                break;
            }
        }
    }
    Ok(selection)
}

pub fn forward_select(
    matrix: &FeatureMatrix,
    target: &Target,
    max_features: usize,
    folds: usize,
    seed: u64,
) -> Result<ForwardSelection, FeatureError> {
    forward_select_with(matrix, target, max_features, folds, FORWARD_MAX_DEPTH, seed)
}

/// Turn a forward selection into a full ranking of `candidates`: selected
/// features first in addition order, then the rest by their last-round
/// accuracy. The score is `(n - position) / n`.
pub fn forward_scores(selection: &ForwardSelection, candidates: &[Field]) -> Vec<FeatureScore> {
    let mut order: Vec<Field> = selection.features.clone();
    let mut rest: Vec<(Field, f64)> = candidates
        .iter()
        .filter(|f| !order.contains(f))
        .map(|&f| {
            let acc = selection
                .last_round
                .iter()
                .find(|(g, _)| *g == f)
                .map_or(f64::NEG_INFINITY, |(_, a)| *a);
            (f, acc)
        })
        .collect();
    rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.extend(rest.into_iter().map(|(f, _)| f));
    let n = order.len() as f64;
    let scores = order
        .into_iter()
        .enumerate()
        .map(|(i, f)| (f, (n - i as f64) / n))
        .collect();
    rank_scores(Method::Forward, scores)
}
