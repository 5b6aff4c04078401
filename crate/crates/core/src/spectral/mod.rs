//! Graph constructions on an affinity matrix and the two spectral clustering
//! algorithms: Ng-Jordan-Weiss (normalized `D^-1/2 A D^-1/2`, row-normalized
//! eigenvectors) and the one-pass Modified Ncut (random-walk `D^-1 A`,
//! leading eigenvector discarded).

mod eigen;

pub use eigen::{fix_sign, top_eigenpairs, EigenOptions, EigenPairs, DEFAULT_TOL};

use ndarray::{s, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::affinity::AffinityMatrix;
use crate::clustering::{Clustering, Method};
use crate::kmeans::{kmeans, KMeansError, KMeansParams};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("vertex {index} has zero degree (no affinity to any other item)")]
    ZeroDegree { index: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("k = {k} is outside the valid range for {n} items")]
    BadK { k: usize, n: usize },
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("partition side {0} is empty")]
    EmptySide(char),
    #[error("partition side {0} has zero volume")]
    ZeroVolume(char),
    #[error("partition has {found} entries for {expected} vertices")]
    PartitionSize { expected: usize, found: usize },
    #[error(transparent)]
    KMeans(#[from] KMeansError),
}

/// Diagonal of the degree matrix: affinity row sums, all positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeMatrix {
    pub d: Vec<f64>,
}

pub fn degree(a: &AffinityMatrix) -> Result<DegreeMatrix, SpectralError> {
    degree_of(a.view())
}

fn degree_of(a: ArrayView2<f64>) -> Result<DegreeMatrix, SpectralError> {
    let d: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    if let Some(index) = d.iter().position(|&x| !(x > 0.0)) {
        return Err(SpectralError::ZeroDegree { index });
    }
    Ok(DegreeMatrix { d })
}

/// `L = D^-1/2 A D^-1/2`.
pub fn normalized_laplacian(a: &AffinityMatrix, d: &DegreeMatrix) -> Array2<f64> {
    let inv_sqrt: Vec<f64> = d.d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let mut l = a.matrix().clone();
    for ((i, j), v) in l.indexed_iter_mut() {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    // Enforce exact symmetry regardless of rounding order.
    let n = l.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            l[[j, i]] = l[[i, j]];
        }
    }
    l
}

/// `P = D^-1 A`, row-stochastic.
pub fn random_walk_matrix(a: &AffinityMatrix, d: &DegreeMatrix) -> Array2<f64> {
    let mut p = a.matrix().clone();
    for (mut row, &di) in p.rows_mut().into_iter().zip(&d.d) {
        row.mapv_inplace(|v| v / di);
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    pub kmeans: KMeansParams,
    pub eigen_tol: f64,
    pub eigen_max_iter: Option<usize>,
}

impl Default for SpectralParams {
    fn default() -> Self {
        SpectralParams { kmeans: KMeansParams::default(), eigen_tol: DEFAULT_TOL, eigen_max_iter: None }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub clustering: Clustering,
    /// Per-item rows that the final K-means clustered.
    pub embedding: Array2<f64>,
    /// The `k` leading eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// NJW rows whose eigenvector coordinates were all zero and were replaced
    /// by the first unit vector.
    pub zero_rows: Vec<usize>,
    pub kmeans_objective: f64,
}

fn check_k(k: usize, n: usize) -> Result<(), SpectralError> {
    if k < 2 || k > n {
        return Err(SpectralError::BadK { k, n });
    }
    Ok(())
}

fn finish(
    embedding: Array2<f64>,
    k: usize,
    seed: u64,
    params: &SpectralParams,
    method: Method,
    eigenvalues: Vec<f64>,
    zero_rows: Vec<usize>,
) -> Result<SpectralResult, SpectralError> {
    let km = kmeans(embedding.view(), k, seed, &params.kmeans)?;
    let mut clustering = km.clustering;
    clustering.method = method;
    Ok(SpectralResult { clustering, embedding, eigenvalues, zero_rows, kmeans_objective: km.objective })
}

/// Ng-Jordan-Weiss: top-k eigenvectors of `L` as columns, rows scaled to
/// unit length, K-means on the rows.
pub fn njw_cluster(a: &AffinityMatrix, k: usize, seed: u64, params: &SpectralParams) -> Result<SpectralResult, SpectralError> {
    check_k(k, a.len())?;
    let d = degree(a)?;
    let l = normalized_laplacian(a, &d);
    let opts = EigenOptions { tol: params.eigen_tol, max_iter: params.eigen_max_iter, seed };
    let eig = top_eigenpairs(l.view(), k, &opts)?;
    let mut y = eig.vectors;
    let mut zero_rows = Vec::new();
    for (i, mut row) in y.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        } else {
            row.fill(0.0);
            row[0] = 1.0;
            zero_rows.push(i);
        }
    }
    finish(y, k, seed, params, Method::SpectralNjw, eig.values, zero_rows)
}

/// Leading `k` eigenpairs of `P = D^-1 A`, obtained from its symmetric
/// conjugate `L` via `x_P = D^-1/2 x_L`, rescaled to unit length and
/// sign-fixed. Column 0 is the constant vector with eigenvalue 1 on a
/// connected graph.
pub fn random_walk_eigenpairs(a: &AffinityMatrix, k: usize, opts: &EigenOptions) -> Result<EigenPairs, SpectralError> {
    let d = degree(a)?;
    let l = normalized_laplacian(a, &d);
    let mut eig = top_eigenpairs(l.view(), k, opts)?;
    for (mut row, &di) in eig.vectors.rows_mut().into_iter().zip(&d.d) {
        row.mapv_inplace(|v| v / di.sqrt());
    }
    for mut col in eig.vectors.columns_mut() {
        let norm = col.dot(&col).sqrt();
        col.mapv_inplace(|v| v / norm);
        fix_sign(col);
    }
    Ok(eig)
}

/// Modified Ncut: drop the leading eigenvector of `P`, K-means on the rows
/// of the remaining `k - 1` eigenvectors.
pub fn modified_ncut_cluster(
    a: &AffinityMatrix,
    k: usize,
    seed: u64,
    params: &SpectralParams,
) -> Result<SpectralResult, SpectralError> {
    check_k(k, a.len())?;
    let opts = EigenOptions { tol: params.eigen_tol, max_iter: params.eigen_max_iter, seed };
    let eig = random_walk_eigenpairs(a, k, &opts)?;
    let x = eig.vectors.slice(s![.., 1..]).to_owned();
    finish(x, k, seed, params, Method::SpectralNcut, eig.values, Vec::new())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NcutMeasure {
    pub ncut: f64,
    pub nassoc: f64,
}

/// Normalized cut and normalized association of the bipartition
/// `side_a` / its complement.
pub fn ncut_measure(a: ArrayView2<f64>, side_a: &[bool]) -> Result<NcutMeasure, SpectralError> {
    let n = a.nrows();
    if side_a.len() != n {
        return Err(SpectralError::PartitionSize { expected: n, found: side_a.len() });
    }
    if !side_a.iter().any(|&x| x) {
        return Err(SpectralError::EmptySide('A'));
    }
    if side_a.iter().all(|&x| x) {
        return Err(SpectralError::EmptySide('B'));
    }
    let (mut w_aa, mut w_bb, mut w_ab) = (0.0, 0.0, 0.0);
    for ((i, j), &w) in a.indexed_iter() {
        match (side_a[i], side_a[j]) {
            (true, true) => w_aa += w,
            (false, false) => w_bb += w,
            (true, false) => w_ab += w,
            (false, true) => {}
        }
    }
    let vol_a = w_aa + w_ab;
    let vol_b = w_bb + w_ab;
    if !(vol_a > 0.0) {
        return Err(SpectralError::ZeroVolume('A'));
    }
    if !(vol_b > 0.0) {
        return Err(SpectralError::ZeroVolume('B'));
    }
    Ok(NcutMeasure { ncut: w_ab / vol_a + w_ab / vol_b, nassoc: w_aa / vol_a + w_bb / vol_b })
}

/// Affinity matrix with `sizes.len()` blocks: weight 1 within a block,
/// `eps` across blocks, zero diagonal. Returns the matrix and block labels.
pub fn block_affinity(sizes: &[usize], eps: f64) -> (AffinityMatrix, Vec<usize>) {
    let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
    let n = labels.len();
    let m = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else if labels[i] == labels[j] {
            1.0
        } else {
            eps
        }
    });
    (AffinityMatrix::from_weights(m).expect("valid block weights"), labels)
}

/// Mean of each cluster's rows in `embedding`.
pub fn cluster_means(embedding: &Array2<f64>, clustering: &Clustering) -> Array2<f64> {
    let mut out = Array2::zeros((clustering.k, embedding.ncols()));
    for (c, members) in clustering.members().iter().enumerate() {
        if !members.is_empty() {
            out.row_mut(c).assign(&embedding.select(Axis(0), members).mean_axis(Axis(0)).expect("nonempty"));
        }
    }
    out
}
