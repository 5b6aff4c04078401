//! Lloyd's algorithm with k-means++ seeding.
//!
//! All randomness comes from a ChaCha stream keyed by the caller's seed;
//! restart `t` uses stream `t`, so restart 0 is exactly
//! `kmeanspp_init(seed)` followed by `lloyd_iterate`.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::clustering::{Clustering, Method};

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum KMeansError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("cannot form {k} clusters from {distinct} distinct points")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("centers have dimension {centers}, points have dimension {points}")]
    DimensionMismatch { centers: usize, points: usize },
    #[error("restarts must be at least 1")]
    ZeroRestarts,
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub clustering: Clustering,
    /// Sum of squared Euclidean distances to the assigned centers.
    pub objective: f64,
    pub iterations: usize,
    pub restarts_used: usize,
    /// Objective after the initial assignment and after every iteration.
    pub trace: Vec<f64>,
}

impl KMeansResult {
    pub fn centers(&self) -> &Array2<f64> {
        self.clustering.centers.as_ref().expect("k-means always records centers")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams { restarts: DEFAULT_RESTARTS, max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL }
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distinct_points(points: ArrayView2<f64>) -> usize {
    let mut rows: Vec<ArrayView1<f64>> = points.rows().into_iter().collect();
    let cmp = |a: &ArrayView1<f64>, b: &ArrayView1<f64>| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    rows.sort_by(cmp);
    rows.dedup_by(|a, b| cmp(a, b).is_eq());
    rows.len()
}

fn validate(points: ArrayView2<f64>, k: usize) -> Result<(), KMeansError> {
    if k == 0 {
        return Err(KMeansError::ZeroK);
    }
    if let Some(((row, _), _)) = points.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(KMeansError::NonFinite(row));
    }
    let distinct = distinct_points(points);
    if distinct < k {
        return Err(KMeansError::TooFewDistinct { k, distinct });
    }
    Ok(())
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn kmeanspp_indices<R: Rng>(points: ArrayView2<f64>, k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        // Distinctness was validated, so some point has positive weight.
        let pick = WeightedIndex::new(&nearest).expect("positive total weight").sample(rng);
        chosen.push(pick);
        let center = points.row(pick);
        nearest
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, d)| *d = d.min(sq_dist(points.row(i), center)));
    }
    chosen
}

/// k-means++ seeding: first center uniform over the points, each further
/// center drawn with probability proportional to its squared distance to the
/// nearest center chosen so far.
pub fn kmeanspp_init(points: ArrayView2<f64>, k: usize, seed: u64) -> Result<Array2<f64>, KMeansError> {
    validate(points, k)?;
    let idx = kmeanspp_indices(points, k, &mut restart_rng(seed, 0));
    Ok(points.select(Axis(0), &idx))
}

/// Nearest center per point (ties to the lowest index) and its distance.
fn assign(points: ArrayView2<f64>, centers: &Array2<f64>) -> Vec<(usize, f64)> {
    (0..points.nrows())
        .into_par_iter()
        .map(|i| {
            let p = points.row(i);
            let mut best = (0, f64::INFINITY);
            for (c, center) in centers.rows().into_iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect()
}

/// Cluster means. An empty cluster's center moves to the point farthest from
/// its currently assigned center.
fn update_centers(points: ArrayView2<f64>, assigned: &[(usize, f64)], k: usize) -> Array2<f64> {
    let dim = points.ncols();
    let mut sums = Array2::<f64>::zeros((k, dim));
    let mut counts = vec![0usize; k];
    for (p, &(c, _)) in points.rows().into_iter().zip(assigned) {
        sums.row_mut(c).scaled_add(1.0, &p);
        counts[c] += 1;
    }
    let mut taken = vec![false; points.nrows()];
    for c in 0..k {
        if counts[c] > 0 {
            sums.row_mut(c).mapv_inplace(|v| v / counts[c] as f64);
            continue;
        }
        let far = assigned
            .iter()
            .enumerate()
            .filter(|(i, _)| !taken[*i])
            .fold(None::<(usize, f64)>, |best, (i, &(_, d))| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
            .expect("at least k points");
        taken[far] = true;
        sums.row_mut(c).assign(&points.row(far));
    }
    sums
}

/// Alternate assignment and mean updates from the given centers until the
/// assignment stops changing, the relative objective improvement drops below
/// `tol`, or `max_iter` iterations have run.
///
/// On return the assignment is nearest-center with respect to the returned
/// centers, and `objective` is computed from exactly that pair.
pub fn lloyd_iterate(
    points: ArrayView2<f64>,
    centers: Array2<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult, KMeansError> {
    let k = centers.nrows();
    if k == 0 {
        return Err(KMeansError::ZeroK);
    }
    if centers.ncols() != points.ncols() {
        return Err(KMeansError::DimensionMismatch { centers: centers.ncols(), points: points.ncols() });
    }
    if k > points.nrows() {
        return Err(KMeansError::TooFewDistinct { k, distinct: distinct_points(points) });
    }
    let mut centers = centers;
    let mut assigned = assign(points, &centers);
    let mut objective: f64 = assigned.iter().map(|(_, d)| d).sum();
    let mut trace = vec![objective];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        centers = update_centers(points, &assigned, k);
        let next = assign(points, &centers);
        let next_objective: f64 = next.iter().map(|(_, d)| d).sum();
        let changed = next.iter().zip(&assigned).any(|(a, b)| a.0 != b.0);
        let improvement = objective - next_objective;
        assigned = next;
        objective = next_objective;
        trace.push(objective);
        if !changed || improvement <= tol * objective.abs() || objective == 0.0 {
            break;
        }
    }
    let assignment = assigned.iter().map(|(c, _)| *c).collect();
    let mut clustering = Clustering::new(assignment, k, Method::KMeans).expect("ids below k");
    clustering.centers = Some(centers);
    Ok(KMeansResult { clustering, objective, iterations, restarts_used: 1, trace })
}

/// Best of `params.restarts` independent k-means++ / Lloyd runs. Ties in the
/// objective go to the earliest restart, so the result does not depend on
/// thread scheduling.
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64, params: &KMeansParams) -> Result<KMeansResult, KMeansError> {
    if params.restarts == 0 {
        return Err(KMeansError::ZeroRestarts);
    }
    validate(points, k)?;
    let runs: Vec<KMeansResult> = (0..params.restarts)
        .into_par_iter()
        .map(|t| {
            let idx = kmeanspp_indices(points, k, &mut restart_rng(seed, t));
            lloyd_iterate(points, points.select(Axis(0), &idx), params.max_iter, params.tol)
        })
        .collect::<Result<_, _>>()?;
    let mut best = runs
        .into_iter()
        .reduce(|best, r| if r.objective < best.objective { r } else { best })
        .expect("at least one restart");
    best.restarts_used = params.restarts;
    Ok(best)
}

/// Recompute the objective from an assignment and centers.
pub fn objective(points: ArrayView2<f64>, assignment: &[usize], centers: &Array2<f64>) -> f64 {
    points.rows().into_iter().zip(assignment).map(|(p, &c)| sq_dist(p, centers.row(c))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).unwrap()
    }

    /// Minimum objective over every assignment of the points to `k` labels.
    fn brute_force_optimum(xs: &[f64], k: usize) -> f64 {
        let n = xs.len();
        let mut best = f64::INFINITY;
        for code in 0..k.pow(n as u32) {
            let mut labels = vec![0; n];
            let mut c = code;
            for l in labels.iter_mut() {
                *l = c % k;
                c /= k;
            }
            let mut total = 0.0;
            for cl in 0..k {
                let members: Vec<f64> = (0..n).filter(|&i| labels[i] == cl).map(|i| xs[i]).collect();
                if members.is_empty() {
                    continue;
                }
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                total += members.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn single_center_is_a_data_point() {
        let pts = line(&[0.0, 1.0, 5.0]);
        for seed in 0..20 {
            let c = kmeanspp_init(pts.view(), 1, seed).unwrap();
            assert!([0.0, 1.0, 5.0].contains(&c[[0, 0]]));
        }
    }

    #[test]
    fn second_center_forced_by_zero_distances() {
        let pts = line(&[0.0, 0.0, 10.0]);
        for seed in 0..200 {
            let c = kmeanspp_init(pts.view(), 2, seed).unwrap();
            let mut v = vec![c[[0, 0]], c[[1, 0]]];
            v.sort_by(f64::total_cmp);
            assert_eq!(v, [0.0, 10.0]);
        }
    }

    #[test]
    fn too_few_distinct_points() {
        let pts = line(&[1.0, 1.0, 2.0]);
        assert!(matches!(
            kmeanspp_init(pts.view(), 3, 0),
            Err(KMeansError::TooFewDistinct { k: 3, distinct: 2 })
        ));
        assert!(matches!(kmeans(pts.view(), 3, 0, &KMeansParams::default()), Err(KMeansError::TooFewDistinct { .. })));
    }

    #[test]
    fn converges_immediately_on_exact_centers() {
        let pts = line(&[0.0, 1.0]);
        let r = lloyd_iterate(pts.view(), line(&[0.0, 1.0]), 300, 1e-9).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.clustering.assignment, [0, 1]);
    }

    #[test]
    fn four_point_instance_reaches_global_optimum() {
        let xs = [0.0, 2.0, 10.0, 12.0];
        assert_eq!(brute_force_optimum(&xs, 2), 4.0);
        let r = kmeans(line(&xs).view(), 2, 11, &KMeansParams { restarts: 5, ..Default::default() }).unwrap();
        assert_eq!(r.objective, 4.0);
        let mut centers: Vec<f64> = r.centers().iter().copied().collect();
        centers.sort_by(f64::total_cmp);
        assert_eq!(centers, [1.0, 11.0]);
    }

    #[test]
    fn k_equals_distinct_points_gives_zero() {
        let pts = line(&[3.0, -1.0, 3.0, 7.0]);
        let r = kmeans(pts.view(), 3, 5, &KMeansParams::default()).unwrap();
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn single_restart_matches_manual_pipeline() {
        let pts = array![[0.0, 0.0], [0.1, 0.3], [4.0, 4.0], [4.2, 3.9], [9.0, 0.0], [8.7, 0.4], [2.0, 2.0]];
        let params = KMeansParams { restarts: 1, ..Default::default() };
        let a = kmeans(pts.view(), 3, 42, &params).unwrap();
        let init = kmeanspp_init(pts.view(), 3, 42).unwrap();
        let b = lloyd_iterate(pts.view(), init, params.max_iter, params.tol).unwrap();
        assert_eq!(a.clustering.assignment, b.clustering.assignment);
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn more_restarts_never_worse() {
        let pts = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 7 + j * 13) % 17) as f64 + (i % 3) as f64 * 0.1);
        for seed in 0..10 {
            let one = kmeans(pts.view(), 4, seed, &KMeansParams { restarts: 1, ..Default::default() }).unwrap();
            let eight = kmeans(pts.view(), 4, seed, &KMeansParams { restarts: 8, ..Default::default() }).unwrap();
            assert!(eight.objective <= one.objective);
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // The third center attracts nothing and must move to the far point.
        let pts = line(&[0.0, 1.0, 2.0, 50.0]);
        let r = lloyd_iterate(pts.view(), line(&[0.5, 1.5, 1000.0]), 300, 1e-9).unwrap();
        assert!(r.clustering.empty_clusters().is_empty());
        assert!(r.centers().iter().any(|&c| c == 50.0));
    }

    #[test]
    fn separated_blobs_recovered() {
        use rand::Rng;
        let centers = [[0.0, 0.0], [20.0, 0.0], [0.0, 20.0], [20.0, 20.0]];
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let mut truth = Vec::new();
            let pts = Array2::from_shape_fn((60, 2), |(i, j)| {
                if j == 0 {
                    truth.push(i % 4);
                }
                centers[i % 4][j] + rng.random_range(-1.0..1.0)
            });
            let r = kmeans(pts.view(), 4, seed, &KMeansParams::default()).unwrap();
            let a = &r.clustering.assignment;
            for i in 0..60 {
                for j in 0..60 {
                    assert_eq!(truth[i] == truth[j], a[i] == a[j]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn lloyd_contracts(
            raw in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 6..30),
            k in 2usize..5,
            seed in 0u64..1000,
        ) {
            let n = raw.len();
            let pts = Array2::from_shape_fn((n, 2), |(i, j)| raw[i][j]);
            prop_assume!(distinct_points(pts.view()) >= k);
            let init = kmeanspp_init(pts.view(), k, seed).unwrap();
            let r = lloyd_iterate(pts.view(), init, 300, 1e-9).unwrap();
            for w in r.trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
            let centers = r.centers();
            let recomputed = objective(pts.view(), &r.clustering.assignment, centers);
            prop_assert!((recomputed - r.objective).abs() <= 1e-9 * r.objective.max(1.0));
            let again: Vec<usize> = assign(pts.view(), centers).into_iter().map(|(c, _)| c).collect();
            prop_assert_eq!(&again, &r.clustering.assignment);
        }

        #[test]
        fn point_order_only_relabels(
            raw in prop::collection::vec(-10.0f64..10.0, 5..20),
            perm_seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            let pts = line(&raw);
            prop_assume!(distinct_points(pts.view()) >= 3);
            let init = kmeanspp_init(pts.view(), 3, 1).unwrap();
            let base = lloyd_iterate(pts.view(), init.clone(), 300, 0.0).unwrap();
            let mut order: Vec<usize> = (0..raw.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            let permuted = pts.select(Axis(0), &order);
            let other = lloyd_iterate(permuted.view(), init, 300, 0.0).unwrap();
            for (a, &i) in order.iter().enumerate() {
                for (b, &j) in order.iter().enumerate() {
                    let same_base = base.clustering.assignment[i] == base.clustering.assignment[j];
                    let same_other = other.clustering.assignment[a] == other.clustering.assignment[b];
                    prop_assert_eq!(same_base, same_other);
                }
            }
        }
    }
}
