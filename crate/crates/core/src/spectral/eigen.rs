//! Top-k eigenpairs of a dense symmetric matrix.
//!
//! Block Krylov iteration with full reorthogonalization and thick restarts:
//! the basis grows by the residuals of the leading Ritz vectors, and once it
//! reaches its cap it is compressed to the best Ritz vectors. The block size
//! exceeds `k`, so eigenvalues of multiplicity up to the block size are
//! resolved. When the basis spans the whole space the Rayleigh-Ritz step is
//! exact.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SpectralError;

pub const DEFAULT_TOL: f64 = 1e-10;

/// Random stream reserved for eigensolver start vectors, so the same seed can
/// also drive K-means restarts without overlap.
const EIGEN_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Residual bound `||M x - lambda x|| <= tol` for unit `x`.
    pub tol: f64,
    /// Block-expansion cap; `None` means `10 * n`.
    pub max_iter: Option<usize>,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: DEFAULT_TOL, max_iter: None, seed: 0 }
    }
}

/// Eigenvalues in descending order with unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Flip `v` so its largest-magnitude component (first one on ties) is positive.
pub fn fix_sign(mut v: ArrayViewMut1<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

fn check_symmetric(m: ArrayView2<f64>) -> Result<(), SpectralError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(SpectralError::NotSquare { rows: n, cols: m.ncols() });
    }
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in 0..=i {
            let (a, b) = (m[[i, j]], m[[j, i]]);
            if !a.is_finite() || !b.is_finite() {
                return Err(SpectralError::NonFinite { row: i, col: j });
            }
            if (a - b).abs() > 1e-12 * scale {
                return Err(SpectralError::NotSymmetric { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Orthonormalize the columns of `block` against the first `m` columns of
/// `basis` and against each other (two Gram-Schmidt passes). Columns that
/// collapse are dropped.
fn orthonormalize(basis: ArrayView2<f64>, block: Array2<f64>) -> Vec<Array1<f64>> {
    let mut out: Vec<Array1<f64>> = Vec::new();
    for col in block.columns() {
        let mut v = col.to_owned();
        let norm0 = v.dot(&v).sqrt();
        if norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            if basis.ncols() > 0 {
                let coeffs = basis.t().dot(&v);
                v -= &basis.dot(&coeffs);
            }
            for u in &out {
                let c = u.dot(&v);
                v.scaled_add(-c, u);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-10 * norm0 {
            out.push(v / norm);
        }
    }
    out
}

fn random_block(rng: &mut ChaCha8Rng, n: usize, b: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, b), || StandardNormal.sample(rng))
}

/// Dense symmetric eigendecomposition of the small projected matrix,
/// eigenvalues descending.
fn projected_eigen(h: ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
    let m = h.nrows();
    let dm = DMatrix::from_fn(m, m, |i, j| 0.5 * (h[[i, j]] + h[[j, i]]));
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((m, m), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn column_norms(r: &Array2<f64>) -> Vec<f64> {
    r.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect()
}

pub fn top_eigenpairs(m: ArrayView2<f64>, k: usize, opts: &EigenOptions) -> Result<EigenPairs, SpectralError> {
    check_symmetric(m)?;
    let n = m.nrows();
    if k == 0 || k > n {
        return Err(SpectralError::BadK { k, n });
    }
    let block = n.min(k + (k / 5).max(2));
    let cap = n.min((4 * block).max(100));
    let max_iter = opts.max_iter.unwrap_or(10 * n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(EIGEN_STREAM);

    let mut basis = Array2::<f64>::zeros((n, cap));
    let mut image = Array2::<f64>::zeros((n, cap));
    let mut proj = Array2::<f64>::zeros((cap, cap));
    let mut dim = 0;
    let mut next = random_block(&mut rng, n, block);
    let mut iterations = 0;
    let mut best_residual = f64::INFINITY;

    loop {
        // Expand the basis with the pending block.
        let mut fresh = orthonormalize(basis.slice(s![.., ..dim]), next);
        let mut attempts = 0;
        while dim + fresh.len() < n && fresh.len() < block && attempts < 3 {
            let extra = random_block(&mut rng, n, block - fresh.len());
            let mut current = basis.slice(s![.., ..dim]).to_owned();
            for v in &fresh {
                current.push_column(v.view()).expect("matching rows");
            }
            fresh.extend(orthonormalize(current.view(), extra));
            attempts += 1;
        }
        if !fresh.is_empty() {
            let added = fresh.len();
            let mut new_cols = Array2::<f64>::zeros((n, added));
            for (j, v) in fresh.iter().enumerate() {
                new_cols.column_mut(j).assign(v);
            }
            let new_image = m.dot(&new_cols);
            let cross = basis.slice(s![.., ..dim]).t().dot(&new_image);
            let inner = new_cols.t().dot(&new_image);
            basis.slice_mut(s![.., dim..dim + added]).assign(&new_cols);
            image.slice_mut(s![.., dim..dim + added]).assign(&new_image);
            proj.slice_mut(s![..dim, dim..dim + added]).assign(&cross);
            proj.slice_mut(s![dim..dim + added, ..dim]).assign(&cross.t());
            proj.slice_mut(s![dim..dim + added, dim..dim + added]).assign(&inner);
            dim += added;
        }
        iterations += 1;

        // Rayleigh-Ritz on the current basis.
        let (theta, y) = projected_eigen(proj.slice(s![..dim, ..dim]));
        let width = block.min(dim);
        let y_top = y.slice(s![.., ..width]);
        let ritz = basis.slice(s![.., ..dim]).dot(&y_top);
        let ritz_image = image.slice(s![.., ..dim]).dot(&y_top);
        let mut residual = ritz_image.clone();
        for (j, mut col) in residual.columns_mut().into_iter().enumerate() {
            col.scaled_add(-theta[j], &ritz.column(j));
        }
        let norms = column_norms(&residual);
        let worst = norms[..k.min(width)].iter().fold(0.0f64, |a, &b| a.max(b));
        best_residual = best_residual.min(worst);

        if dim >= k && (worst <= opts.tol || dim == n) {
            // Confirm with fresh products rather than the accumulated image.
            let mut vectors = ritz.slice(s![.., ..k]).to_owned();
            for col in vectors.columns_mut() {
                let norm = col.dot(&col).sqrt();
                let mut col = col;
                col.mapv_inplace(|x| x / norm);
                fix_sign(col);
            }
            let mv = m.dot(&vectors);
            let values: Vec<f64> = theta[..k].to_vec();
            let mut true_res = mv;
            for (j, mut col) in true_res.columns_mut().into_iter().enumerate() {
                col.scaled_add(-values[j], &vectors.column(j));
            }
            let residuals = column_norms(&true_res);
            let worst_true = residuals.iter().fold(0.0f64, |a, &b| a.max(b));
            if worst_true <= opts.tol {
                return Ok(EigenPairs { values, vectors, residuals, iterations });
            }
            if dim == n {
                return Err(SpectralError::NoConvergence { residual: worst_true, iterations });
            }
        }
        if iterations >= max_iter {
            return Err(SpectralError::NoConvergence { residual: best_residual, iterations });
        }

        // Next block: residuals of the leading Ritz vectors that still move.
        let pending: Vec<usize> = (0..width).filter(|&j| norms[j] > 0.1 * opts.tol).collect();
        next = residual.select(Axis(1), &pending);
        if next.ncols() == 0 {
            next = random_block(&mut rng, n, block);
        }

        if cap < n && dim + next.ncols().min(block) > cap {
            // Thick restart onto the best Ritz vectors.
            let keep = dim.min((cap / 2).max(block)).min(cap - block.min(cap));
            let y_keep = y.slice(s![.., ..keep]);
            let new_basis = basis.slice(s![.., ..dim]).dot(&y_keep);
            let new_image = image.slice(s![.., ..dim]).dot(&y_keep);
            basis.fill(0.0);
            image.fill(0.0);
            proj.fill(0.0);
            basis.slice_mut(s![.., ..keep]).assign(&new_basis);
            image.slice_mut(s![.., ..keep]).assign(&new_image);
            for (j, &t) in theta[..keep].iter().enumerate() {
                proj[[j, j]] = t;
            }
            dim = keep;
        }
    }
}
