use std::collections::{BTreeSet, HashMap};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;

use super::{best_run, Centers, ClusterError, ClusterModel, KModesInit, KModesParams, ModelParams};
use crate::features::categorical_view;
use crate::log_model::{Field, LogRecord};
use crate::seed;

/// Rows of category codes. Each attribute's levels are sorted, so a lower
/// code is a lexicographically smaller category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalMatrix {
    pub names: Vec<String>,
    pub features: Vec<Field>,
    pub levels: Vec<Vec<String>>,
    codes: Vec<u32>,
    n: usize,
}

impl CategoricalMatrix {
    pub fn from_rows(names: Vec<String>, rows: &[Vec<String>]) -> Result<Self, ClusterError> {
        let m = names.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(ClusterError::ArityMismatch {
                left: m,
                right: bad.len(),
            });
        }
        let columns: Vec<Vec<&str>> = (0..m)
            .map(|a| rows.iter().map(|r| r[a].as_str()).collect())
            .collect();
        Ok(Self::from_columns(names, Vec::new(), &columns, rows.len()))
    }

    /// Categories of `features`; numeric fields enter as five quantile bins.
    pub fn from_records(records: &[LogRecord], features: &[Field]) -> Self {
        let views: Vec<Vec<String>> = features.iter().map(|&f| categorical_view(records, f)).collect();
        let columns: Vec<Vec<&str>> = views
            .iter()
            .map(|v| v.iter().map(String::as_str).collect())
            .collect();
        let names = features.iter().map(|f| f.name().to_string()).collect();
        Self::from_columns(names, features.to_vec(), &columns, records.len())
    }

    fn from_columns(names: Vec<String>, features: Vec<Field>, columns: &[Vec<&str>], n: usize) -> Self {
        let m = columns.len();
        let mut levels = Vec::with_capacity(m);
        let mut codes = vec![0u32; n * m];
        for (a, col) in columns.iter().enumerate() {
            let set: BTreeSet<&str> = col.iter().copied().collect();
            let lv: Vec<String> = set.into_iter().map(str::to_string).collect();
            let index: HashMap<&str, u32> = lv.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();
            for (i, v) in col.iter().enumerate() {
                codes[i * m + a] = index[v];
            }
            levels.push(lv);
        }
        CategoricalMatrix {
            names,
            features,
            levels,
            codes,
            n,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_attrs(&self) -> usize {
        self.levels.len()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let m = self.n_attrs();
        &self.codes[i * m..(i + 1) * m]
    }

    pub fn decode(&self, codes: &[u32]) -> Vec<String> {
        codes
            .iter()
            .enumerate()
            .map(|(a, &c)| self.levels[a][c as usize].clone())
            .collect()
    }

    /// First occurrence of every distinct row, in row order.
    fn distinct_rows(&self) -> Vec<usize> {
        let mut seen = std::collections::HashSet::new();
        (0..self.n).filter(|&i| seen.insert(self.row(i))).collect()
    }

    fn level_counts(&self) -> Vec<Vec<usize>> {
        let mut counts: Vec<Vec<usize>> = self.levels.iter().map(|l| vec![0; l.len()]).collect();
        for i in 0..self.n {
            for (a, &c) in self.row(i).iter().enumerate() {
                counts[a][c as usize] += 1;
            }
        }
        counts
    }
}

/// Number of positions where the tuples differ. The missing sentinel is an
/// ordinary category here.
pub fn matching_dissimilarity<T: PartialEq>(a: &[T], b: &[T]) -> Result<usize, ClusterError> {
    if a.len() != b.len() {
        return Err(ClusterError::ArityMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(mismatches(a, b))
}

fn mismatches<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn check_k(n: usize, k: usize) -> Result<(), ClusterError> {
    if k == 0 || k > n {
        return Err(ClusterError::TooFewRows { k, rows: n });
    }
    Ok(())
}

/// Pad `modes` with randomly chosen rows when there are fewer distinct rows
/// than clusters.
fn pad_with_duplicates(data: &CategoricalMatrix, modes: &mut Vec<Vec<u32>>, k: usize, rng: &mut impl Rng) {
    while modes.len() < k {
        modes.push(data.row(rng.gen_range(0..data.n)).to_vec());
    }
}

/// Huang's seeding. The first synthetic mode takes each attribute's most
/// frequent category; the others draw each attribute's category with
/// probability proportional to its frequency. Every synthetic mode is then
/// replaced by the nearest actual row not already chosen (ties to the
/// earliest row). Returns the modes and whether duplicates had to be used
/// because fewer than `k` distinct rows exist.
pub fn huang_init(data: &CategoricalMatrix, k: usize, rng: &mut impl Rng) -> Result<(Vec<Vec<u32>>, bool), ClusterError> {
    check_k(data.n, k)?;
    let distinct = data.distinct_rows();
    if distinct.len() < k {
        let mut modes: Vec<Vec<u32>> = distinct.iter().map(|&i| data.row(i).to_vec()).collect();
        pad_with_duplicates(data, &mut modes, k, rng);
        return Ok((modes, true));
    }
    let counts = data.level_counts();
    let samplers: Vec<WeightedIndex<usize>> = counts
        .iter()
        .map(|c| WeightedIndex::new(c).expect("every level occurs"))
        .collect();
    let mut used = vec![false; distinct.len()];
    let mut modes = Vec::with_capacity(k);
    for j in 0..k {
        let synthetic: Vec<u32> = if j == 0 {
            counts
                .iter()
                .map(|c| {
                    let mut best = 0;
                    for (code, &n) in c.iter().enumerate() {
                        if n > c[best] {
                            best = code;
                        }
                    }
                    best as u32
                })
                .collect()
        } else {
            samplers.iter().map(|s| s.sample(rng) as u32).collect()
        };
        let mut nearest = (usize::MAX, usize::MAX);
        for (pos, &row) in distinct.iter().enumerate() {
            if used[pos] {
                continue;
            }
            let d = mismatches(data.row(row), &synthetic);
            if d < nearest.1 {
                nearest = (pos, d);
            }
        }
        used[nearest.0] = true;
        modes.push(data.row(distinct[nearest.0]).to_vec());
    }
    Ok((modes, false))
}

fn random_modes(data: &CategoricalMatrix, k: usize, rng: &mut impl Rng) -> (Vec<Vec<u32>>, bool) {
    let distinct = data.distinct_rows();
    if distinct.len() < k {
        let mut modes: Vec<Vec<u32>> = distinct.iter().map(|&i| data.row(i).to_vec()).collect();
        pad_with_duplicates(data, &mut modes, k, rng);
        return (modes, true);
    }
    let picks = rand::seq::index::sample(rng, distinct.len(), k);
    (picks.into_iter().map(|p| data.row(distinct[p]).to_vec()).collect(), false)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KModesRun {
    pub labels: Vec<u32>,
    pub modes: Vec<Vec<u32>>,
    pub cost: u64,
    pub n_iter: usize,
    /// Cost of the initial assignment followed by the cost after each
    /// iteration.
    pub history: Vec<u64>,
    pub repaired_empty: usize,
}

fn assign(data: &CategoricalMatrix, modes: &[Vec<u32>]) -> Vec<u32> {
    (0..data.n)
        .into_par_iter()
        .map(|i| {
            let row = data.row(i);
            let mut best = (0u32, usize::MAX);
            for (c, mode) in modes.iter().enumerate() {
                let d = mismatches(row, mode);
                if d < best.1 {
                    best = (c as u32, d);
                }
            }
            best.0
        })
        .collect()
}

/// Total matching dissimilarity of rows to their assigned modes.
pub fn kmodes_cost(data: &CategoricalMatrix, modes: &[Vec<u32>], labels: &[u32]) -> u64 {
    (0..data.n)
        .map(|i| mismatches(data.row(i), &modes[labels[i] as usize]) as u64)
        .sum()
}

fn iterate(data: &CategoricalMatrix, init: Vec<Vec<u32>>, max_iter: usize) -> KModesRun {
    let k = init.len();
    let m = data.n_attrs();
    let mut modes = init;
    let mut labels = assign(data, &modes);
    let mut history = vec![kmodes_cost(data, &modes, &labels)];
    let mut n_iter = 0;
    let mut repaired_empty = 0;
    for it in 1..=max_iter {
        let repaired_before = repaired_empty;
        let mut sizes = vec![0usize; k];
        let mut tallies: Vec<Vec<usize>> = data.levels.iter().map(|l| vec![0; k * l.len()]).collect();
        for i in 0..data.n {
            let c = labels[i] as usize;
            sizes[c] += 1;
            for (a, &code) in data.row(i).iter().enumerate() {
                tallies[a][c * data.levels[a].len() + code as usize] += 1;
            }
        }
        for c in (0..k).filter(|&c| sizes[c] > 0) {
            for a in 0..m {
                let width = data.levels[a].len();
                let counts = &tallies[a][c * width..(c + 1) * width];
                let mut best = 0;
                for (code, &n) in counts.iter().enumerate() {
                    if n > counts[best] {
                        best = code;
                    }
                }
                modes[c][a] = best as u32;
            }
        }

        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let mut far = None::<(usize, usize)>;
            for i in 0..data.n {
                let l = labels[i] as usize;
                if sizes[l] < 2 {
                    continue;
                }
                let d = mismatches(data.row(i), &modes[l]);
                if far.is_none_or(|(_, best)| d > best) {
                    far = Some((i, d));
                }
            }
            if let Some((i, _)) = far {
                sizes[labels[i] as usize] -= 1;
                sizes[c] = 1;
                labels[i] = c as u32;
                modes[c] = data.row(i).to_vec();
                repaired_empty += 1;
            }
        }

        let next = assign(data, &modes);
        history.push(kmodes_cost(data, &modes, &next));
        n_iter = it;
        // Centers were not refitted after a repair, so go round again.
        let converged = next == labels && repaired_empty == repaired_before;
        labels = next;
        if converged {
            break;
        }
    }
    KModesRun {
        cost: *history.last().expect("initial cost"),
        labels,
        modes,
        n_iter,
        history,
        repaired_empty,
    }
}

/// K-modes iterations from fixed initial modes: assign each row to the
/// nearest mode (ties to the lowest id), then set each attribute of each mode
/// to the cluster's most frequent category (ties to the smallest category).
pub fn kmodes_run(data: &CategoricalMatrix, init: Vec<Vec<u32>>, max_iter: usize) -> Result<KModesRun, ClusterError> {
    check_k(data.n, init.len())?;
    if let Some(bad) = init.iter().find(|m| m.len() != data.n_attrs()) {
        return Err(ClusterError::ArityMismatch {
            left: data.n_attrs(),
            right: bad.len(),
        });
    }
    for mode in &init {
        for (a, &code) in mode.iter().enumerate() {
            if code as usize >= data.levels[a].len() {
                return Err(ClusterError::InvalidParameter(format!("code {code} out of range for attribute {a}")));
            }
        }
    }
    Ok(iterate(data, init, max_iter.max(1)))
}

/// Best of `n_init` seeded restarts by total dissimilarity.
pub fn kmodes_fit(data: &CategoricalMatrix, params: &KModesParams) -> Result<ClusterModel, ClusterError> {
    params.validate()?;
    check_k(data.n, params.n_clusters)?;
    let runs: Vec<(u64, bool, KModesRun)> = (0..params.n_init)
        .into_par_iter()
        .map(|r| {
            let run_seed = seed::derive_seed(params.random_state, r as u64);
            let mut rng = seed::rng(run_seed);
            let (init, fallback) = match params.init {
                KModesInit::Huang => huang_init(data, params.n_clusters, &mut rng).expect("k checked above"),
                KModesInit::Random => random_modes(data, params.n_clusters, &mut rng),
            };
            (run_seed, fallback, iterate(data, init, params.max_iter))
        })
        .collect();
    let best = best_run(runs.iter().map(|(_, _, r)| r.cost as f64));
    let (run_seed, fallback, run) = runs.into_iter().nth(best).expect("n_init >= 1");
    let (cluster_sizes, empty_clusters) = ClusterModel::sizes_and_empty(&run.labels, params.n_clusters);
    Ok(ClusterModel {
        params: ModelParams::KModes(params.clone()),
        centers: Centers::Modes(run.modes.iter().map(|m| data.decode(m)).collect()),
        labels: run.labels,
        cluster_sizes,
        cost: run.cost as f64,
        n_iter: run.n_iter,
        cost_history: run.history.iter().map(|&c| c as f64).collect(),
        seed_of_best_run: run_seed,
        empty_clusters,
        repaired_empty: run.repaired_empty,
        init_fallback: fallback,
        columns: data.names.clone(),
        features: data.features.clone(),
    })
}
