//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Sign with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Largest absolute difference between two matrices of equal shape.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Minimum and maximum eigenvalue of a symmetric matrix.
pub fn eigen_extremes(h: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(symmetrized(h));
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn symmetrized(h: &DMatrix<f64>) -> DMatrix<f64> {
    (h + h.transpose()) * 0.5
}

/// Number of escalations tried after the initial damping fails.
pub const DAMPING_ESCALATIONS: usize = 6;

/// Cholesky factorization of `h + mu I`, escalating `mu` when `h` is not
/// positive definite.
///
/// The ladder starts at the requested `mu0`; on failure it restarts from
/// `max(1e-8, 1e-6 * |trace(h)| / d)` (or `mu0` if larger) and multiplies by
/// ten up to [`DAMPING_ESCALATIONS`] times.
pub fn damped_cholesky(h: &DMatrix<f64>, mu0: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let d = h.nrows();
    let try_mu = |mu: f64| {
        let mut m = symmetrized(h);
        for i in 0..d {
            m[(i, i)] += mu;
        }
        Cholesky::new(m)
    };
    if let Some(c) = try_mu(mu0) {
        return Ok((c, mu0));
    }
    let base = (1e-6 * h.trace().abs() / d.max(1) as f64).max(1e-8);
    let mut mu = base.max(mu0);
    for _ in 0..=DAMPING_ESCALATIONS {
        if let Some(c) = try_mu(mu) {
            return Ok((c, mu));
        }
        mu *= 10.0;
    }
    Err(Error::SingularHessian { damping: mu / 10.0 })
}

fn rank_tolerance(svd: &SVD<f64, Dyn, Dyn>, rows: usize, cols: usize) -> f64 {
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    smax * rows.max(cols) as f64 * f64::EPSILON
}

/// Moore-Penrose pseudoinverse through the SVD.
pub fn pseudo_inverse(x: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = SVD::new(x.clone(), true, true);
    let tol = rank_tolerance(&svd, x.nrows(), x.ncols());
    svd.pseudo_inverse(tol)
        .expect("both singular-vector sets were requested")
}

/// Orthonormal basis (as columns) of the null space of `x`.
pub fn null_space(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    // Pad to a square matrix so the SVD returns a full right basis.
    let mut padded = DMatrix::zeros(d.max(n), d);
    padded.rows_mut(0, n).copy_from(x);
    let svd = SVD::new(padded, false, true);
    let tol = rank_tolerance(&svd, n, d);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let null_rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    let mut basis = DMatrix::zeros(d, null_rows.len());
    for (c, &i) in null_rows.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    basis
}

pub fn row(x: &DMatrix<f64>, i: usize) -> DVector<f64> {
    x.row(i).transpose()
}
