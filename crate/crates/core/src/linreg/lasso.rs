use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::sign;

/// KKT tolerance targeted by the LASSO solver.
pub const LASSO_KKT_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub theta: DVector<f64>,
    pub lambda: f64,
    pub kkt_residual: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Smallest `lambda` for which `theta = 0` solves
/// `(1/n) |Y - X theta|^2 + lambda |theta|_1`: `(2/n) |X^T Y|_inf`.
pub fn lasso_lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    2.0 / y.len() as f64 * (x.transpose() * y).amax()
}

/// Largest violation of the subgradient optimality conditions.
pub fn lasso_kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let g = x.transpose() * (y - x * theta) * (-2.0 / n);
    (0..theta.len())
        .map(|j| {
            if theta[j] != 0.0 {
                (g[j] + lambda * sign(theta[j])).abs()
            } else {
                (g[j].abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `(1/n) |Y - X theta|^2 + lambda |theta|_1`
/// from `theta = 0`.
pub fn lasso_coordinate_descent(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<LassoFit> {
    lasso_from(x, y, lambda, &DVector::zeros(x.ncols()))
}

/// Solve the LASSO restricted to the current active set with fixed signs.
fn polish(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    theta: &DVector<f64>,
) -> Option<DVector<f64>> {
    let active: Vec<usize> = (0..theta.len()).filter(|&j| theta[j] != 0.0).collect();
    if active.is_empty() || active.len() > x.nrows() {
        return None;
    }
    let xa = x.select_columns(&active);
    let s = DVector::from_iterator(active.len(), active.iter().map(|&j| sign(theta[j])));
    let rhs = xa.transpose() * y - s.clone() * (0.5 * y.len() as f64 * lambda);
    let chol = Cholesky::new(xa.transpose() * &xa)?;
    let ta = chol.solve(&rhs);
    if (0..active.len()).any(|k| sign(ta[k]) != s[k]) {
        return None;
    }
    let mut out = DVector::zeros(theta.len());
    for (k, &j) in active.iter().enumerate() {
        out[j] = ta[k];
    }
    Some(out)
}

/// Coordinate descent from a warm start. The update for coordinate `j` is
/// `theta_j = S(rho_j, n lambda / 2) / |x_j|^2` with
/// `rho_j = x_j^T (r + x_j theta_j)`. After every sweep the active set is
/// solved exactly with its current signs, and that point is kept whenever it
/// satisfies the KKT conditions.
pub fn lasso_from(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    warm: &DVector<f64>,
) -> Result<LassoFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Argument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    check_len("target vector", x.nrows(), y.len())?;
    check_len("warm start", x.ncols(), warm.len())?;
    let (n, d) = x.shape();
    let thresh = 0.5 * n as f64 * lambda;
    let col_sq: Vec<f64> = (0..d).map(|j| x.column(j).norm_squared()).collect();
    let mut theta = warm.clone();
    let mut r = y - x * &theta;
    let mut sweeps = 0;
    let mut kkt = lasso_kkt_residual(x, y, &theta, lambda);
    while kkt > LASSO_KKT_TOL && sweeps < MAX_SWEEPS {
        for j in 0..d {
            if col_sq[j] == 0.0 {
                theta[j] = 0.0;
                continue;
            }
            let old = theta[j];
            let rho = x.column(j).dot(&r) + col_sq[j] * old;
            let new = soft_threshold(rho, thresh) / col_sq[j];
            if new != old {
                r.axpy(old - new, &x.column(j), 1.0);
                theta[j] = new;
            }
        }
        sweeps += 1;
        if let Some(p) = polish(x, y, lambda, &theta) {
            let pk = lasso_kkt_residual(x, y, &p, lambda);
            if pk <= LASSO_KKT_TOL {
                theta = p;
                kkt = pk;
                break;
            }
        }
        // recompute the residual periodically to stop drift
        if sweeps % 64 == 0 {
            r = y - x * &theta;
        }
        kkt = lasso_kkt_residual(x, y, &theta, lambda);
    }
    Ok(LassoFit {
        theta,
        lambda,
        kkt_residual: kkt,
        sweeps,
        converged: kkt <= LASSO_KKT_TOL,
    })
}

/// Minimizer of `(1/n) |Y - X theta|^2 + lambda |theta|^2`, i.e. the
/// solution of `(X^T X + n lambda I) theta = X^T Y`. When `d > n` the dual
/// form `theta = X^T (X X^T + n lambda I)^{-1} Y` is used.
pub fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Argument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    check_len("target vector", x.nrows(), y.len())?;
    let (n, d) = x.shape();
    let shift = n as f64 * lambda;
    let singular = || Error::SingularHessian { damping: shift };
    if d > n {
        if lambda == 0.0 {
            return Err(Error::Precondition(
                "ridge with lambda = 0 needs full column rank, but d > n".into(),
            ));
        }
        let mut k = x * x.transpose();
        for i in 0..n {
            k[(i, i)] += shift;
        }
        let alpha = Cholesky::new(k).ok_or_else(singular)?.solve(y);
        Ok(x.transpose() * alpha)
    } else {
        let mut g = x.transpose() * x;
        for j in 0..d {
            g[(j, j)] += shift;
        }
        Ok(Cholesky::new(g).ok_or_else(singular)?.solve(&(x.transpose() * y)))
    }
}
