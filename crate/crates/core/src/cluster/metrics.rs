use std::collections::HashMap;
use std::hash::Hash;

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{ClusterError, CategoricalMatrix};
use crate::seed;

/// Rows beyond which the silhouette is computed on a seeded subsample.
pub const SILHOUETTE_SAMPLE: usize = 20_000;

fn check(labels: &[u32], rows: usize) -> Result<(), ClusterError> {
    if labels.len() != rows {
        return Err(ClusterError::LengthMismatch {
            labels: labels.len(),
            rows,
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for &l in labels {
        seen.insert(l);
        if seen.len() > 1 {
            return Ok(());
        }
    }
    Err(ClusterError::SingleCluster)
}

fn sample_rows(rows: usize, seed: u64) -> Vec<usize> {
    if rows <= SILHOUETTE_SAMPLE {
        return (0..rows).collect();
    }
    let mut picks = rand::seq::index::sample(&mut seed::rng(seed), rows, SILHOUETTE_SAMPLE).into_vec();
    picks.sort_unstable();
    picks
}

/// Mean silhouette from per-point (own cluster, summed distance to every
/// cluster) with cluster sizes `sizes`. Points are weighted by `weight`.
fn mean_silhouette(points: impl Iterator<Item = (usize, Vec<f64>, f64)>, sizes: &[f64]) -> f64 {
    let (mut total, mut weight) = (0.0, 0.0);
    for (own, sums, w) in points {
        weight += w;
        if sizes[own] <= 1.0 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1.0);
        let b = sums
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != own && sizes[c] > 0.0)
            .map(|(c, s)| s / sizes[c])
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += w * (b - a) / denom;
        }
    }
    if weight > 0.0 {
        total / weight
    } else {
        0.0
    }
}

fn dense_labels(labels: &[u32]) -> (Vec<usize>, usize) {
    let mut ids: Vec<u32> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    (
        labels.iter().map(|l| ids.binary_search(l).expect("present")).collect(),
        ids.len(),
    )
}

/// Silhouette under Euclidean distance. Identical rows with the same label
/// are merged and weighted, which leaves the value unchanged.
pub fn silhouette_euclidean(data: ArrayView2<f64>, labels: &[u32], seed: u64) -> Result<f64, ClusterError> {
    check(labels, data.nrows())?;
    let rows = sample_rows(data.nrows(), seed);
    let sub_labels: Vec<u32> = rows.iter().map(|&i| labels[i]).collect();
    check(&sub_labels, rows.len())?;
    let (dense, k) = dense_labels(&sub_labels);

    // Unique (row, label) pairs with multiplicities, sparse form.
    let mut index: HashMap<(Vec<u64>, usize), usize> = HashMap::new();
    let mut uniq: Vec<(Vec<(u32, f64)>, f64, usize, f64)> = Vec::new();
    for (pos, &i) in rows.iter().enumerate() {
        let row = data.row(i);
        let key = (row.iter().map(|v| v.to_bits()).collect::<Vec<u64>>(), dense[pos]);
        match index.get(&key) {
            Some(&u) => uniq[u].3 += 1.0,
            None => {
                index.insert(key, uniq.len());
                let nz: Vec<(u32, f64)> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j as u32, *v))
                    .collect();
                let norm = nz.iter().map(|(_, v)| v * v).sum();
                uniq.push((nz, norm, dense[pos], 1.0));
            }
        }
    }
    let mut sizes = vec![0.0; k];
    for u in &uniq {
        sizes[u.2] += u.3;
    }
    let dot = |a: &[(u32, f64)], b: &[(u32, f64)]| {
        let (mut i, mut j, mut s) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    };
    let per_point: Vec<(usize, Vec<f64>, f64)> = uniq
        .par_iter()
        .enumerate()
        .map(|(u, (nz, norm, own, w))| {
            let mut sums = vec![0.0; k];
            for (v, (nz2, norm2, other, w2)) in uniq.iter().enumerate() {
                if u == v {
                    continue;
                }
                let d2 = (norm + norm2 - 2.0 * dot(nz, nz2)).max(0.0);
                sums[*other] += w2 * d2.sqrt();
            }
            (*own, sums, *w)
        })
        .collect();
    Ok(mean_silhouette(per_point.into_iter(), &sizes))
}

/// Silhouette under matching dissimilarity. The summed distance from a row
/// to a cluster is `sum over attributes of (size - matches)`, so per-cluster
/// category tallies give it without a pairwise pass.
pub fn silhouette_matching(data: &CategoricalMatrix, labels: &[u32], seed: u64) -> Result<f64, ClusterError> {
    check(labels, data.n_rows())?;
    let rows = sample_rows(data.n_rows(), seed);
    let sub_labels: Vec<u32> = rows.iter().map(|&i| labels[i]).collect();
    check(&sub_labels, rows.len())?;
    let (dense, k) = dense_labels(&sub_labels);
    let mut sizes = vec![0.0; k];
    let mut tallies: Vec<Vec<f64>> = data.levels.iter().map(|l| vec![0.0; k * l.len()]).collect();
    for (pos, &i) in rows.iter().enumerate() {
        let c = dense[pos];
        sizes[c] += 1.0;
        for (a, &code) in data.row(i).iter().enumerate() {
            tallies[a][c * data.levels[a].len() + code as usize] += 1.0;
        }
    }
    let points = rows.iter().enumerate().map(|(pos, &i)| {
        let row = data.row(i);
        let sums = (0..k)
            .map(|c| {
                row.iter()
                    .enumerate()
                    .map(|(a, &code)| sizes[c] - tallies[a][c * data.levels[a].len() + code as usize])
                    .sum()
            })
            .collect();
        (dense[pos], sums, 1.0)
    });
    Ok(mean_silhouette(points, &sizes))
}

fn comb2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index between two labellings of the same rows.
pub fn adjusted_rand_index<A: Hash + Eq, B: Hash + Eq>(a: &[A], b: &[B]) -> Result<f64, ClusterError> {
    if a.len() != b.len() {
        return Err(ClusterError::LengthMismatch {
            labels: a.len(),
            rows: b.len(),
        });
    }
    let mut cells: HashMap<(&A, &B), f64> = HashMap::new();
    let mut rows: HashMap<&A, f64> = HashMap::new();
    let mut cols: HashMap<&B, f64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = cells.values().map(|&n| comb2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| comb2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| comb2(n)).sum();
    let total = comb2(a.len() as f64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if (max - expected).abs() < f64::EPSILON {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Silhouette straight from the definition.
    fn brute_silhouette(dist: impl Fn(usize, usize) -> f64, labels: &[u32]) -> f64 {
        let n = labels.len();
        let mut total = 0.0;
        for i in 0..n {
            let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if own.is_empty() {
                continue;
            }
            let a = own.iter().map(|&j| dist(i, j)).sum::<f64>() / own.len() as f64;
            let mut b = f64::INFINITY;
            let mut others: Vec<u32> = labels.iter().copied().filter(|&l| l != labels[i]).collect();
            others.sort();
            others.dedup();
            for c in others {
                let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                b = b.min(members.iter().map(|&j| dist(i, j)).sum::<f64>() / members.len() as f64);
            }
            if a.max(b) > 0.0 {
                total += (b - a) / a.max(b);
            }
        }
        total / n as f64
    }

    #[test]
    fn separated_pairs_score_high() {
        let data = array![[0.0, 0.0], [0.0, 1.0], [100.0, 0.0], [100.0, 1.0]];
        let s = silhouette_euclidean(data.view(), &[0, 0, 1, 1], 0).unwrap();
        let want = brute_silhouette(
            |i, j| {
                let d = &data.row(i) - &data.row(j);
                d.dot(&d).sqrt()
            },
            &[0, 0, 1, 1],
        );
        assert!((s - want).abs() < 1e-12);
        assert!(s > 0.9);
    }

    #[test]
    fn euclidean_matches_brute_force_with_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = Array2::from_shape_fn((40, 3), |_| rng.gen_range(0..3) as f64);
        let labels: Vec<u32> = (0..40).map(|_| rng.gen_range(0..3)).collect();
        let s = silhouette_euclidean(data.view(), &labels, 0).unwrap();
        let want = brute_silhouette(
            |i, j| {
                let d = &data.row(i) - &data.row(j);
                d.dot(&d).sqrt()
            },
            &labels,
        );
        assert!((s - want).abs() < 1e-9, "{s} vs {want}");
    }

    #[test]
    fn matching_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<String>> = (0..50)
            .map(|_| (0..4).map(|_| rng.gen_range(0..3).to_string()).collect())
            .collect();
        let data = CategoricalMatrix::from_rows((0..4).map(|a| a.to_string()).collect(), &rows).unwrap();
        let labels: Vec<u32> = (0..50).map(|_| rng.gen_range(0..4)).collect();
        let s = silhouette_matching(&data, &labels, 0).unwrap();
        let want = brute_silhouette(
            |i, j| rows[i].iter().zip(&rows[j]).filter(|(a, b)| a != b).count() as f64,
            &labels,
        );
        assert!((s - want).abs() < 1e-9);
    }

    #[test]
    fn random_labels_on_uniform_data_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((2000, 2), |_| rng.gen::<f64>());
        let labels: Vec<u32> = (0..2000).map(|_| rng.gen_range(0..3)).collect();
        assert!(silhouette_euclidean(data.view(), &labels, 0).unwrap().abs() < 0.1);
    }

    #[test]
    fn singletons_and_single_cluster() {
        let data = array![[0.0], [1.0], [5.0]];
        assert_eq!(silhouette_euclidean(data.view(), &[0, 1, 2], 0).unwrap(), 0.0);
        assert!(matches!(silhouette_euclidean(data.view(), &[1, 1, 1], 0), Err(ClusterError::SingleCluster)));
    }

    #[test]
    fn large_inputs_are_subsampled_deterministically() {
        let rows: Vec<Vec<String>> = (0..25_000).map(|i| vec![(i % 7).to_string()]).collect();
        let data = CategoricalMatrix::from_rows(vec!["a".into()], &rows).unwrap();
        let labels: Vec<u32> = (0..25_000).map(|i| (i % 7 < 3) as u32).collect();
        let a = silhouette_matching(&data, &labels, 11).unwrap();
        assert_eq!(a, silhouette_matching(&data, &labels, 11).unwrap());
        assert!((-1.0..=1.0).contains(&a));
    }

    fn brute_ari(a: &[u32], b: &[u32]) -> f64 {
        // Pair counting over all unordered pairs.
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => both += 1.0,
                    (true, false) => only_a += 1.0,
                    (false, true) => only_b += 1.0,
                    (false, false) => neither += 1.0,
                }
            }
        }
        let total = both + only_a + only_b + neither;
        let expected = (both + only_a) * (both + only_b) / total;
        let max = ((both + only_a) + (both + only_b)) / 2.0;
        (both - expected) / (max - expected)
    }

    #[test]
    fn ari_agrees_with_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.gen_range(5..60);
            let a: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let b: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            assert!((adjusted_rand_index(&a, &b).unwrap() - brute_ari(&a, &b)).abs() < 1e-9);
        }
        let x = [0u32, 0, 1, 1, 2];
        let relabelled = [5u32, 5, 3, 3, 9];
        assert!((adjusted_rand_index(&x, &relabelled).unwrap() - 1.0).abs() < 1e-12);
    }
}
