//! Small dense linear-algebra helpers shared by the oracles.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_CUTOFF: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Orthonormal basis of the column span of `a`, rank decided with
/// [`RANK_CUTOFF`] relative to the largest singular value.
pub fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    if a.ncols() == 0 || a.iter().all(|x| *x == 0.0) {
        return DMatrix::zeros(d, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > RANK_CUTOFF * smax)
        .collect();
    DMatrix::from_fn(d, keep.len(), |i, j| u[(i, keep[j])])
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns `q` inside `R^d`.
pub fn complement_basis(q: &DMatrix<f64>) -> DMatrix<f64> {
    let d = q.nrows();
    let k = q.ncols();
    if k == 0 {
        return DMatrix::identity(d, d);
    }
    if k >= d {
        return DMatrix::zeros(d, 0);
    }
    let proj = DMatrix::identity(d, d) - q * q.transpose();
    let eig = SymmetricEigen::new(proj);
    let keep: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    DMatrix::from_fn(d, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])])
}

/// Orthonormal basis (`n x r`) of the row space of `g` (`m x n`).
pub fn row_space_basis(g: &DMatrix<f64>) -> DMatrix<f64> {
    orthonormal_basis(&g.transpose())
}

/// Largest singular value by power iteration on `G^T G`.
pub fn sigma_max(g: &DMatrix<f64>) -> f64 {
    let n = g.ncols();
    if n == 0 || g.nrows() == 0 {
        return 0.0;
    }
    // deterministic, generic start vector
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let w = g.transpose() * (g * &v);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        let next = wn;
        v = w / wn;
        if (next - lambda).abs() <= 1e-13 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}

/// Moore-Penrose pseudo-inverse with the shared rank cutoff.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if a.iter().all(|x| *x == 0.0) {
        return DMatrix::zeros(n, m);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(RANK_CUTOFF * smax)
        .expect("singular vectors were computed")
}
