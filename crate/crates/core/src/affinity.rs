//! Pairwise affinities between lexicon rows: the symmetrized skew divergence
//! turned into a similarity, the raw divergence itself, or a Gaussian kernel.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

use crate::context::ContextMatrix;

pub const DEFAULT_SKEW: f64 = 0.999;

#[derive(Debug, Error)]
pub enum AffinityError {
    #[error("negative entry {value} at position {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("support violation at position {0}: p > 0 where q = 0")]
    Support(usize),
    #[error("skew parameter must lie strictly between 0 and 1, got {0}")]
    BadSkew(f64),
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("row {row} has a negative entry; the skew kernels need nonnegative count rows")]
    NegativeRow { row: usize },
    #[error("weight at row {row}, column {col} breaks symmetry, sign or zero-diagonal requirements")]
    InvalidWeight { row: usize, col: usize },
    #[error("the precomputed kernel cannot be built from a context matrix")]
    PrecomputedKernel,
    #[error("need at least 2 rows to build an affinity matrix, got {0}")]
    TooFewRows(usize),
}

/// A probability vector together with whether it came from an all-zero
/// input (and therefore is the uniform fallback).
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub probs: Vec<f64>,
    pub uniform_fallback: bool,
}

pub fn normalize_to_distribution(v: &[f64]) -> Result<Distribution, AffinityError> {
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| **x < 0.0 || x.is_nan()) {
        return Err(AffinityError::NegativeEntry { index, value });
    }
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        let u = 1.0 / v.len() as f64;
        return Ok(Distribution { probs: vec![u; v.len()], uniform_fallback: true });
    }
    Ok(Distribution { probs: v.iter().map(|x| x / total).collect(), uniform_fallback: false })
}

/// `KL(p || q)` in nats, with `0 log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, AffinityError> {
    if p.len() != q.len() {
        return Err(AffinityError::DimensionMismatch(p.len(), q.len()));
    }
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(AffinityError::Support(i));
            }
            sum += pi * (pi / qi).ln();
        }
    }
    Ok(sum.max(0.0))
}

fn check_skew(a: f64) -> Result<(), AffinityError> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(AffinityError::BadSkew(a))
    }
}

/// `KL(v' || a v + (1 - a) v')`. Finite for any pair of distributions since
/// the mixture is positive wherever `v'` is.
pub fn skew_divergence(v: &[f64], v_prime: &[f64], a: f64) -> Result<f64, AffinityError> {
    check_skew(a)?;
    if v.len() != v_prime.len() {
        return Err(AffinityError::DimensionMismatch(v.len(), v_prime.len()));
    }
    let mix: Vec<f64> = v.iter().zip(v_prime).map(|(x, y)| a * x + (1.0 - a) * y).collect();
    kl_divergence(v_prime, &mix)
}

pub fn symmetrized_skew(v: &[f64], v_prime: &[f64], a: f64) -> Result<f64, AffinityError> {
    Ok(0.5 * (skew_divergence(v, v_prime, a)? + skew_divergence(v_prime, v, a)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `exp(-d_sskew / sigma)`.
    SkewSimilarity,
    /// The symmetrized skew divergence used directly as the edge weight.
    SkewDivergence,
    /// `exp(-||x - y||^2 / (2 sigma^2))`.
    Gaussian,
    /// Weights supplied directly by the caller.
    Precomputed,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::SkewSimilarity => "skew",
            Kernel::SkewDivergence => "skew-raw",
            Kernel::Gaussian => "gaussian",
            Kernel::Precomputed => "precomputed",
        })
    }
}

impl FromStr for Kernel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "skew" => Ok(Kernel::SkewSimilarity),
            "skew-raw" => Ok(Kernel::SkewDivergence),
            "gaussian" => Ok(Kernel::Gaussian),
            other => Err(format!("unknown kernel {other:?} (expected skew, skew-raw or gaussian)")),
        }
    }
}

/// Kernel bandwidth: fixed, or the median of the off-diagonal pairwise
/// divergences (skew) or Euclidean distances (gaussian).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Median,
    Fixed(f64),
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Median => f.write_str("median"),
            Sigma::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Sigma {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "median" {
            return Ok(Sigma::Median);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Sigma::Fixed(v)),
            _ => Err(format!("sigma must be `median` or a positive number, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityParams {
    pub kernel: Kernel,
    pub skew: f64,
    pub sigma: Sigma,
}

impl Default for AffinityParams {
    fn default() -> Self {
        AffinityParams { kernel: Kernel::SkewSimilarity, skew: DEFAULT_SKEW, sigma: Sigma::Median }
    }
}

/// Symmetric, nonnegative, zero-diagonal affinity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    matrix: Array2<f64>,
    pub kernel: Kernel,
    pub skew: f64,
    /// Bandwidth actually used (`None` for the raw divergence kernel).
    pub sigma: Option<f64>,
    /// Rows that were all zero and replaced by the uniform distribution.
    pub uniform_rows: Vec<usize>,
}

impl AffinityMatrix {
    /// Wrap a precomputed weight matrix, checking symmetry, sign and the zero
    /// diagonal.
    pub fn from_weights(matrix: Array2<f64>) -> Result<Self, AffinityError> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(AffinityError::DimensionMismatch(n, matrix.ncols()));
        }
        for ((i, j), &v) in matrix.indexed_iter() {
            if !v.is_finite() || v < 0.0 || (i == j && v != 0.0) || v != matrix[[j, i]] {
                return Err(AffinityError::InvalidWeight { row: i, col: j });
            }
        }
        Ok(AffinityMatrix {
            matrix,
            kernel: Kernel::Precomputed,
            skew: DEFAULT_SKEW,
            sigma: None,
            uniform_rows: Vec::new(),
        })
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// Multiply every weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        AffinityMatrix { matrix: &self.matrix * c, ..self.clone() }
    }

    pub fn params_string(&self) -> String {
        let sigma = self.sigma.map_or("-".to_string(), |s| s.to_string());
        format!("a={} sigma={sigma}", self.skew)
    }

    /// Debug dump: header `N kernel params`, then N rows.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.len(), self.kernel, self.params_string())?;
        for row in self.matrix.rows() {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Nonzero support of a distribution, for divergence loops that only need
/// the entries where the first argument is positive.
struct SparseDist {
    dense: Vec<f64>,
    support: Vec<usize>,
}

impl SparseDist {
    fn new(dense: Vec<f64>) -> Self {
        let support = dense.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, _)| i).collect();
        SparseDist { dense, support }
    }

    /// `KL(self || a other + (1 - a) self)`.
    fn skew_from(&self, other: &SparseDist, a: f64) -> f64 {
        let mut sum = 0.0;
        for &t in &self.support {
            let p = self.dense[t];
            sum += p * (p / (a * other.dense[t] + (1.0 - a) * p)).ln();
        }
        sum.max(0.0)
    }
}

fn check_finite(context: &ContextMatrix) -> Result<(), AffinityError> {
    match context.rows.indexed_iter().find(|(_, v)| !v.is_finite()) {
        Some(((row, col), _)) => Err(AffinityError::NonFinite { row, col }),
        None => Ok(()),
    }
}

/// Values `f(i, j)` for all `i < j`, row-major over the upper triangle.
fn upper_triangle<F>(n: usize, f: F) -> Vec<Vec<f64>>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| f(i, j)).collect())
        .collect()
}

fn median(values: &[Vec<f64>]) -> Option<f64> {
    let mut all: Vec<f64> = values.iter().flatten().copied().collect();
    if all.is_empty() {
        return None;
    }
    all.sort_unstable_by(f64::total_cmp);
    let mid = all.len() / 2;
    Some(if all.len() % 2 == 1 { all[mid] } else { 0.5 * (all[mid - 1] + all[mid]) })
}

/// Median bandwidth, falling back to the mean positive value (or 1) when the
/// median is zero.
fn resolve_sigma(sigma: Sigma, values: &[Vec<f64>]) -> Result<f64, AffinityError> {
    match sigma {
        Sigma::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
        Sigma::Fixed(s) => Err(AffinityError::BadSigma(s)),
        Sigma::Median => {
            let m = median(values).unwrap_or(0.0);
            if m > 0.0 && m.is_finite() {
                return Ok(m);
            }
            let positive: Vec<f64> = values.iter().flatten().copied().filter(|v| *v > 0.0).collect();
            if positive.is_empty() {
                Ok(1.0)
            } else {
                Ok(positive.iter().sum::<f64>() / positive.len() as f64)
            }
        }
    }
}

fn fill_symmetric(n: usize, upper: &[Vec<f64>], f: impl Fn(f64) -> f64) -> Array2<f64> {
    let mut a = Array2::<f64>::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + 1 + offset;
            let w = f(v);
            a[[i, j]] = w;
            a[[j, i]] = w;
        }
    }
    a
}

pub fn build_affinity(context: &ContextMatrix, params: &AffinityParams) -> Result<AffinityMatrix, AffinityError> {
    check_finite(context)?;
    let n = context.n_rows();
    if n < 2 {
        return Err(AffinityError::TooFewRows(n));
    }
    match params.kernel {
        Kernel::Precomputed => Err(AffinityError::PrecomputedKernel),
        Kernel::Gaussian => {
            let rows = &context.rows;
            let dist2 = upper_triangle(n, |i, j| {
                rows.row(i).iter().zip(rows.row(j)).map(|(x, y)| (x - y) * (x - y)).sum()
            });
            let sigma = match params.sigma {
                Sigma::Median => {
                    let dists: Vec<Vec<f64>> =
                        dist2.iter().map(|r| r.iter().map(|d| d.sqrt()).collect()).collect();
                    resolve_sigma(Sigma::Median, &dists)?
                }
                fixed => resolve_sigma(fixed, &dist2)?,
            };
            let matrix = fill_symmetric(n, &dist2, |d2| (-d2 / (2.0 * sigma * sigma)).exp());
            Ok(AffinityMatrix { matrix, kernel: params.kernel, skew: params.skew, sigma: Some(sigma), uniform_rows: Vec::new() })
        }
        Kernel::SkewSimilarity | Kernel::SkewDivergence => {
            check_skew(params.skew)?;
            let a = params.skew;
            let mut uniform_rows = Vec::new();
            let mut dists = Vec::with_capacity(n);
            for (i, row) in context.rows.rows().into_iter().enumerate() {
                let d = normalize_to_distribution(row.as_slice().expect("standard layout"))
                    .map_err(|_| AffinityError::NegativeRow { row: i })?;
                if d.uniform_fallback {
                    uniform_rows.push(i);
                }
                dists.push(SparseDist::new(d.probs));
            }
            let div = upper_triangle(n, |i, j| {
                0.5 * (dists[i].skew_from(&dists[j], a) + dists[j].skew_from(&dists[i], a))
            });
            let (matrix, sigma) = if params.kernel == Kernel::SkewDivergence {
                (fill_symmetric(n, &div, |d| d), None)
            } else {
                let sigma = resolve_sigma(params.sigma, &div)?;
                (fill_symmetric(n, &div, |d| (-d / sigma).exp()), Some(sigma))
            };
            Ok(AffinityMatrix { matrix, kernel: params.kernel, skew: a, sigma, uniform_rows })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::MatrixKind;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn counts(rows: Array2<f64>) -> ContextMatrix {
        ContextMatrix { rows, windows: vec![1], kind: MatrixKind::Count }
    }

    fn gaussian(sigma: f64) -> AffinityParams {
        AffinityParams { kernel: Kernel::Gaussian, skew: DEFAULT_SKEW, sigma: Sigma::Fixed(sigma) }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_to_distribution(&[2.0, 2.0]).unwrap().probs, [0.5, 0.5]);
        assert_eq!(normalize_to_distribution(&[1.0, 3.0]).unwrap().probs, [0.25, 0.75]);
        let z = normalize_to_distribution(&[0.0, 0.0, 0.0]).unwrap();
        assert!(z.uniform_fallback);
        assert_eq!(z.probs, [1.0 / 3.0; 3]);
        assert!(matches!(normalize_to_distribution(&[1.0, -1.0]), Err(AffinityError::NegativeEntry { index: 1, .. })));
    }

    #[test]
    fn kl_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln(), epsilon = 1e-12);
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.1438, epsilon = 1e-4);
        assert!(matches!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), Err(AffinityError::Support(1))));
    }

    #[test]
    fn skew_examples() {
        let v = [0.1, 0.6, 0.3];
        for a in [0.1, 0.5, 0.999] {
            assert_eq!(skew_divergence(&v, &v, a).unwrap(), 0.0);
        }
        assert_abs_diff_eq!(skew_divergence(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap(), 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(symmetrized_skew(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap(), 2f64.ln(), epsilon = 1e-12);
        assert!(matches!(skew_divergence(&v, &v, 1.0), Err(AffinityError::BadSkew(_))));
        assert!(matches!(skew_divergence(&v, &v, 0.0), Err(AffinityError::BadSkew(_))));
    }

    #[test]
    fn gaussian_examples() {
        let same = build_affinity(&counts(array![[1.0, 2.0], [1.0, 2.0]]), &gaussian(1.0)).unwrap();
        assert_eq!(same.view()[[0, 1]], 1.0);
        assert_eq!(same.view()[[0, 0]], 0.0);
        let ortho = build_affinity(&counts(array![[1.0, 0.0], [0.0, 1.0]]), &gaussian(1.0)).unwrap();
        assert_abs_diff_eq!(ortho.view()[[0, 1]], (-1f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn skew_similarity_identical_rows() {
        let params = AffinityParams { sigma: Sigma::Fixed(1.0), ..Default::default() };
        let a = build_affinity(&counts(array![[3.0, 1.0], [6.0, 2.0]]), &params).unwrap();
        assert_eq!(a.view()[[0, 1]], 1.0);
    }

    #[test]
    fn raw_divergence_kernel_is_the_divergence() {
        let params = AffinityParams { kernel: Kernel::SkewDivergence, skew: 0.5, sigma: Sigma::Median };
        let a = build_affinity(&counts(array![[1.0, 0.0], [0.0, 2.0]]), &params).unwrap();
        assert_abs_diff_eq!(a.view()[[1, 0]], 2f64.ln(), epsilon = 1e-12);
        assert_eq!(a.sigma, None);
    }

    #[test]
    fn median_sigma() {
        // divergences (gaussian distances) 1, 2, 3 between points 0, 1, 3
        let a = build_affinity(
            &counts(array![[0.0], [1.0], [3.0]]),
            &AffinityParams { kernel: Kernel::Gaussian, skew: DEFAULT_SKEW, sigma: Sigma::Median },
        )
        .unwrap();
        assert_eq!(a.sigma, Some(2.0));
    }

    #[test]
    fn zero_rows_flagged_and_negative_rejected() {
        let a = build_affinity(&counts(array![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0]]), &AffinityParams::default()).unwrap();
        assert_eq!(a.uniform_rows, [0]);
        // uniform fallback equals the [1, 1] row exactly
        assert_eq!(a.view()[[0, 1]], 1.0);
        let err = build_affinity(&counts(array![[1.0, 0.0], [-1.0, 0.0]]), &AffinityParams::default()).unwrap_err();
        assert!(matches!(err, AffinityError::NegativeRow { row: 1 }));
    }

    #[test]
    fn non_finite_cell_reported() {
        let err = build_affinity(&counts(array![[1.0, 0.0], [f64::NAN, 0.0]]), &gaussian(1.0)).unwrap_err();
        assert!(matches!(err, AffinityError::NonFinite { row: 1, col: 0 }));
    }

    fn dist_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..8).prop_flat_map(|d| {
            (prop::collection::vec(0.0f64..1.0, d), prop::collection::vec(0.0f64..1.0, d))
        })
        .prop_filter("nonzero", |(a, b)| a.iter().sum::<f64>() > 1e-3 && b.iter().sum::<f64>() > 1e-3)
        .prop_map(|(a, b)| {
            (normalize_to_distribution(&a).unwrap().probs, normalize_to_distribution(&b).unwrap().probs)
        })
    }

    proptest! {
        #[test]
        fn skew_nonnegative_and_symmetric((p, q) in dist_pair(), a in 0.01f64..0.999) {
            let d = skew_divergence(&p, &q, a).unwrap();
            prop_assert!(d >= 0.0);
            let s1 = symmetrized_skew(&p, &q, a).unwrap();
            let s2 = symmetrized_skew(&q, &p, a).unwrap();
            prop_assert_eq!(s1, s2);
            if p != q {
                prop_assert!(s1 > 0.0);
            }
        }

        #[test]
        fn gaussian_translation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..7),
            shift in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let n = rows.len();
            let m = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
            let shifted = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j] + shift[j]);
            let a = build_affinity(&counts(m), &gaussian(2.0)).unwrap();
            let b = build_affinity(&counts(shifted), &gaussian(2.0)).unwrap();
            for (x, y) in a.view().iter().zip(b.view().iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn affinity_invariants(
            rows in prop::collection::vec(prop::collection::vec(0u32..6, 4), 2..9),
            kernel in prop::sample::select(vec![Kernel::SkewSimilarity, Kernel::SkewDivergence, Kernel::Gaussian]),
        ) {
            let n = rows.len();
            let m = Array2::from_shape_fn((n, 4), |(i, j)| rows[i][j] as f64);
            let params = AffinityParams { kernel, ..Default::default() };
            let a = build_affinity(&counts(m), &params).unwrap();
            let v = a.view();
            for i in 0..n {
                prop_assert_eq!(v[[i, i]], 0.0);
                for j in 0..n {
                    prop_assert!(v[[i, j]].is_finite() && v[[i, j]] >= 0.0);
                    prop_assert!((v[[i, j]] - v[[j, i]]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn similarity_decreases_with_divergence(
            rows in prop::collection::vec(prop::collection::vec(0u32..6, 4), 3..7),
        ) {
            let n = rows.len();
            let m = Array2::from_shape_fn((n, 4), |(i, j)| rows[i][j] as f64);
            let sim = build_affinity(&counts(m.clone()), &AffinityParams { sigma: Sigma::Fixed(0.7), ..Default::default() }).unwrap();
            let raw = build_affinity(&counts(m), &AffinityParams { kernel: Kernel::SkewDivergence, ..Default::default() }).unwrap();
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
            for &(i, j) in &pairs {
                for &(k, l) in &pairs {
                    if raw.view()[[i, j]] > raw.view()[[k, l]] + 1e-12 {
                        prop_assert!(sim.view()[[i, j]] < sim.view()[[k, l]]);
                    }
                }
            }
        }
    }
}
