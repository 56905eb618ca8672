use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use super::{best_run, ClusterError, ClusterModel, KMeansInit, KMeansParams, ModelParams, Centers};
use crate::seed;

/// Use sparse dot products once at most this share of entries is non-zero.
const SPARSE_DENSITY: f64 = 0.25;

/// Row access with an optional sparse copy for one-hot heavy matrices.
struct Points<'a> {
    data: ArrayView2<'a, f64>,
    sparse: Option<Vec<(Vec<u32>, Vec<f64>)>>,
    norms: Vec<f64>,
}

impl<'a> Points<'a> {
    fn new(data: ArrayView2<'a, f64>) -> Self {
        let (n, d) = data.dim();
        let nnz = data.iter().filter(|v| **v != 0.0).count();
        let sparse = (n * d > 0 && (nnz as f64) < SPARSE_DENSITY * (n * d) as f64).then(|| {
            data.rows()
                .into_iter()
                .map(|row| {
                    let (idx, vals) = row
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(j, v)| (j as u32, *v))
                        .unzip();
                    (idx, vals)
                })
                .collect()
        });
        let norms = data.rows().into_iter().map(|r| r.dot(&r)).collect();
        Points { data, sparse, norms }
    }

    fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Squared distance from row `i` to `center` whose squared norm is `cnorm`.
    fn dist(&self, i: usize, center: &[f64], cnorm: f64) -> f64 {
        match &self.sparse {
            Some(rows) => {
                let (idx, vals) = &rows[i];
                let dot: f64 = idx.iter().zip(vals).map(|(&j, v)| v * center[j as usize]).sum();
                (self.norms[i] + cnorm - 2.0 * dot).max(0.0)
            }
            None => self
                .data
                .row(i)
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        }
    }

    fn add_row(&self, i: usize, acc: &mut [f64]) {
        match &self.sparse {
            Some(rows) => {
                let (idx, vals) = &rows[i];
                for (&j, v) in idx.iter().zip(vals) {
                    acc[j as usize] += v;
                }
            }
            None => {
                for (a, v) in acc.iter_mut().zip(self.data.row(i)) {
                    *a += v;
                }
            }
        }
    }
}

fn center_norms(centers: &Array2<f64>) -> Vec<f64> {
    centers.rows().into_iter().map(|r| r.dot(&r)).collect()
}

fn nearest(points: &Points, i: usize, centers: &Array2<f64>, norms: &[f64]) -> u32 {
    let mut best = (0u32, f64::INFINITY);
    for (c, center) in centers.rows().into_iter().enumerate() {
        let d = points.dist(i, center.as_slice().expect("standard layout"), norms[c]);
        if d < best.1 {
            best = (c as u32, d);
        }
    }
    best.0
}

fn assign(points: &Points, centers: &Array2<f64>) -> Vec<u32> {
    let norms = center_norms(centers);
    (0..points.n())
        .into_par_iter()
        .map(|i| nearest(points, i, centers, &norms))
        .collect()
}

/// Within-cluster sum of squared distances, evaluated directly.
pub fn wcss(data: ArrayView2<f64>, centers: &Array2<f64>, labels: &[u32]) -> f64 {
    data.rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| {
            row.iter()
                .zip(centers.row(l as usize))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum()
}

fn check_k(n: usize, k: usize) -> Result<(), ClusterError> {
    if k == 0 || k > n {
        return Err(ClusterError::TooFewRows { k, rows: n });
    }
    Ok(())
}

fn kmeanspp(points: &Points, k: usize, rng: &mut impl Rng) -> Result<Array2<f64>, ClusterError> {
    let n = points.n();
    check_k(n, k)?;
    let d = points.data.ncols();
    let mut centers = Array2::zeros((k, d));
    let first = rng.gen_range(0..n);
    centers.row_mut(0).assign(&points.data.row(first));
    let row0 = centers.row(0).to_vec();
    let mut d2: Vec<f64> = (0..n).map(|i| points.dist(i, &row0, points.norms[first])).collect();
    d2[first] = 0.0;
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > r {
                    break;
                }
            }
            pick.expect("positive total has a positive weight")
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(c).assign(&points.data.row(pick));
        let row = centers.row(c).to_vec();
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(points.dist(i, &row, points.norms[pick]));
        }
        d2[pick] = 0.0;
    }
    Ok(centers)
}

/// k-means++ seeding: the first center is a uniformly chosen row, each next
/// one a row drawn with probability proportional to its squared distance to
/// the nearest center chosen so far.
pub fn kmeanspp_init(data: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Result<Array2<f64>, ClusterError> {
    kmeanspp(&Points::new(data), k, rng)
}

/// `k` distinct rows chosen uniformly.
pub fn random_init(data: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Result<Array2<f64>, ClusterError> {
    check_k(data.nrows(), k)?;
    let picks = rand::seq::index::sample(rng, data.nrows(), k);
    Ok(data.select(ndarray::Axis(0), &picks.into_vec()))
}

/// One Lloyd run from fixed initial centers.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub labels: Vec<u32>,
    pub centers: Array2<f64>,
    pub cost: f64,
    pub n_iter: usize,
    /// Cost of the initial assignment followed by the cost after each
    /// iteration.
    pub history: Vec<f64>,
    pub repaired_empty: usize,
}

fn lloyd(points: &Points, init: Array2<f64>, max_iter: usize) -> KMeansRun {
    let (n, d) = points.data.dim();
    let k = init.nrows();
    let mut centers = init;
    let mut labels = assign(points, &centers);
    let mut history = vec![wcss(points.data, &centers, &labels)];
    let mut n_iter = 0;
    let mut repaired_empty = 0;
    for it in 1..=max_iter {
        let repaired_before = repaired_empty;
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let l = labels[i] as usize;
            counts[l] += 1;
            points.add_row(i, sums.row_mut(l).into_slice().expect("standard layout"));
        }
        for (c, mut row) in sums.rows_mut().into_iter().enumerate() {
            if counts[c] > 0 {
                row /= counts[c] as f64;
            }
        }
        centers = sums;

        // Refill each empty cluster with the point farthest from its center.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let norms = center_norms(&centers);
            let mut far = None::<(usize, f64)>;
            for i in 0..n {
                let l = labels[i] as usize;
                if counts[l] < 2 {
                    continue;
                }
                let dist = points.dist(i, centers.row(l).as_slice().expect("standard layout"), norms[l]);
                if far.is_none_or(|(_, best)| dist > best) {
                    far = Some((i, dist));
                }
            }
            if let Some((i, _)) = far {
                counts[labels[i] as usize] -= 1;
                counts[c] = 1;
                labels[i] = c as u32;
                centers.row_mut(c).assign(&points.data.row(i));
                repaired_empty += 1;
            }
        }

        let next = assign(points, &centers);
        history.push(wcss(points.data, &centers, &next));
        n_iter = it;
        // Centers were not refitted after a repair, so go round again.
        let converged = next == labels && repaired_empty == repaired_before;
        labels = next;
        if converged {
            break;
        }
    }
    KMeansRun {
        cost: *history.last().expect("at least the initial cost"),
        labels,
        centers,
        n_iter,
        history,
        repaired_empty,
    }
}

/// Lloyd iterations from `init` until the assignment is stable or
/// `max_iter` is reached. Ties go to the lowest cluster id.
pub fn kmeans_run(data: ArrayView2<f64>, init: Array2<f64>, max_iter: usize) -> Result<KMeansRun, ClusterError> {
    if init.ncols() != data.ncols() {
        return Err(ClusterError::ArityMismatch {
            left: data.ncols(),
            right: init.ncols(),
        });
    }
    check_k(data.nrows(), init.nrows())?;
    Ok(lloyd(&Points::new(data), init, max_iter.max(1)))
}

/// Best of `n_init` seeded restarts by WCSS.
pub fn kmeans_fit(data: ArrayView2<f64>, params: &KMeansParams) -> Result<ClusterModel, ClusterError> {
    params.validate()?;
    check_k(data.nrows(), params.n_clusters)?;
    let points = Points::new(data);
    let runs: Vec<(u64, KMeansRun)> = (0..params.n_init)
        .into_par_iter()
        .map(|r| {
            let run_seed = seed::derive_seed(params.random_state, r as u64);
            let mut rng = seed::rng(run_seed);
            let init = match params.init {
                KMeansInit::KMeansPlusPlus => kmeanspp(&points, params.n_clusters, &mut rng),
                KMeansInit::Random => random_init(data, params.n_clusters, &mut rng),
            }
            .expect("k checked above");
            (run_seed, lloyd(&points, init, params.max_iter))
        })
        .collect();
    let best = best_run(runs.iter().map(|(_, r)| r.cost));
    let (run_seed, run) = runs.into_iter().nth(best).expect("n_init >= 1");
    let (cluster_sizes, empty_clusters) = ClusterModel::sizes_and_empty(&run.labels, params.n_clusters);
    Ok(ClusterModel {
        params: ModelParams::KMeans(params.clone()),
        centers: Centers::Means(run.centers.rows().into_iter().map(|r| r.to_vec()).collect()),
        labels: run.labels,
        cluster_sizes,
        cost: run.cost,
        n_iter: run.n_iter,
        cost_history: run.history,
        seed_of_best_run: run_seed,
        empty_clusters,
        repaired_empty: run.repaired_empty,
        init_fallback: false,
        columns: Vec::new(),
        features: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(k: usize, n_init: usize) -> KMeansParams {
        KMeansParams {
            n_clusters: k,
            n_init,
            ..KMeansParams::default()
        }
    }

    #[test]
    fn line_example() {
        let data = array![[0.0], [0.1], [10.0], [10.1]];
        let m = kmeans_fit(data.view(), &params(2, 10)).unwrap();
        assert!((m.cost - 0.01).abs() < 1e-9);
        assert_eq!(m.labels[0], m.labels[1]);
        assert_eq!(m.labels[2], m.labels[3]);
        assert_ne!(m.labels[0], m.labels[2]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let data = array![[1.0, 2.0], [3.0, 6.0], [5.0, 1.0]];
        let m = kmeans_fit(data.view(), &params(1, 3)).unwrap();
        let Centers::Means(c) = &m.centers else { panic!() };
        assert!((c[0][0] - 3.0).abs() < 1e-12 && (c[0][1] - 3.0).abs() < 1e-12);
        // Total variance times n: (4+0+4) + (1+9+4).
        assert!((m.cost - 22.0).abs() < 1e-9);
    }

    #[test]
    fn identical_rows_cost_nothing() {
        let data = Array2::from_elem((10, 3), 2.5);
        for k in 1..=4 {
            let m = kmeans_fit(data.view(), &params(k, 2)).unwrap();
            assert_eq!(m.cost, 0.0);
            assert!(m.labels.iter().all(|&l| (l as usize) < k));
        }
    }

    #[test]
    fn too_many_clusters() {
        let data = array![[0.0], [1.0]];
        assert!(matches!(kmeans_fit(data.view(), &params(3, 1)), Err(ClusterError::TooFewRows { .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(kmeanspp_init(data.view(), 3, &mut rng).is_err());
    }

    #[test]
    fn kmeanspp_exhausts_distinct_rows() {
        let data = array![[0.0, 0.0], [1.0, 0.0], [0.0, 5.0], [3.0, 3.0], [9.0, 1.0]];
        for s in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let c = kmeanspp_init(data.view(), 5, &mut rng).unwrap();
            let mut got: Vec<Vec<u64>> = c.rows().into_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
            let mut want: Vec<Vec<u64>> = data.rows().into_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
            got.sort();
            want.sort();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn kmeanspp_separates_far_groups() {
        // Two groups of 50 points around 0 and 1000. Choosing a second center
        // in the same group has probability about 1e-5 per trial.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = Array2::from_shape_fn((100, 2), |(i, _)| {
            (if i < 50 { 0.0 } else { 1000.0 }) + rng.gen::<f64>()
        });
        let mut hits = 0;
        for s in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let c = kmeanspp_init(data.view(), 2, &mut rng).unwrap();
            if (c[[0, 0]] < 500.0) != (c[[1, 0]] < 500.0) {
                hits += 1;
            }
        }
        assert!(hits as f64 / 200.0 >= 0.99);
    }

    #[test]
    fn kmeanspp_single_center_is_a_row() {
        let data = array![[1.0], [2.0], [3.0]];
        let mut seen = [false; 3];
        for s in 0..60 {
            let c = kmeanspp_init(data.view(), 1, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            seen[c[[0, 0]] as usize - 1] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = Array2::from_shape_fn((200, 40), |(i, j)| ((j == i % 7) as u8) as f64 + if j == 39 { rng.gen::<f64>() * 0.01 } else { 0.0 });
        let points = Points::new(data.view());
        assert!(points.sparse.is_some());
        let init = data.select(ndarray::Axis(0), &[0, 1, 2]);
        let sparse = lloyd(&points, init.clone(), 50);
        let dense_points = Points { sparse: None, ..Points::new(data.view()) };
        let dense = lloyd(&dense_points, init, 50);
        assert_eq!(sparse.labels, dense.labels);
        assert!((sparse.cost - dense.cost).abs() < 1e-9);
    }

    #[test]
    fn empty_cluster_is_repaired() {
        let data = array![[0.0], [0.0], [0.0], [10.0]];
        // Two identical initial centers: the second starts empty.
        let run = kmeans_run(data.view(), array![[0.0], [0.0]], 10).unwrap();
        assert!(run.repaired_empty >= 1);
        assert!(run.cost.abs() < 1e-12);
        assert_ne!(run.labels[0], run.labels[3]);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = Array2::from_shape_fn((300, 4), |_| rng.gen::<f64>());
        let p = params(5, 6);
        let a = kmeans_fit(data.view(), &p).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let b = pool.install(|| kmeans_fit(data.view(), &p).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn stored_cost_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((120, 3), |_| rng.gen::<f64>());
        let m = kmeans_fit(data.view(), &params(4, 3)).unwrap();
        let Centers::Means(c) = &m.centers else { panic!() };
        let centers = Array2::from_shape_fn((4, 3), |(i, j)| c[i][j]);
        let again = wcss(data.view(), &centers, &m.labels);
        assert!((again - m.cost).abs() <= 1e-6 * m.cost.max(1e-12));
        assert!(m.n_iter <= 300);
    }
}
