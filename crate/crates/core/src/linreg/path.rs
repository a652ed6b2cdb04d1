use nalgebra::{Cholesky, DMatrix, DVector};

use super::lasso::{lasso_kkt_residual, lasso_lambda_max, LassoFit};
use crate::error::{check_len, Error, Result};

/// Events closer than this (in `lambda`) are treated as simultaneous.
const EVENT_TOL: f64 = 1e-14;

/// Exact LASSO regularization path, piecewise linear in `lambda`.
///
/// `knots[k] = (lambda_k, theta_k)` with `lambda` strictly decreasing from
/// `lambda_max`; between consecutive knots the active set and signs are
/// fixed, so linear interpolation is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub knots: Vec<(f64, DVector<f64>)>,
}

impl LassoPath {
    pub fn lambda_max(&self) -> f64 {
        self.knots[0].0
    }

    /// Smallest `lambda` the path reaches.
    pub fn lambda_min(&self) -> f64 {
        self.knots.last().expect("a path has at least one knot").0
    }

    /// Solution at `lambda`, clamped to the traced range.
    pub fn at(&self, lambda: f64) -> DVector<f64> {
        if lambda >= self.lambda_max() {
            return self.knots[0].1.clone();
        }
        for w in self.knots.windows(2) {
            let (l0, t0) = &w[0];
            let (l1, t1) = &w[1];
            if lambda >= *l1 {
                let s = (l0 - lambda) / (l0 - l1);
                return t0 + (t1 - t0) * s;
            }
        }
        self.knots.last().expect("a path has at least one knot").1.clone()
    }

    pub fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> LassoFit {
        let theta = self.at(lambda);
        let kkt_residual = lasso_kkt_residual(x, y, &theta, lambda);
        LassoFit {
            theta,
            lambda,
            kkt_residual,
            sweeps: 0,
            converged: lambda >= self.lambda_min(),
        }
    }
}

fn correlations(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
    x.transpose() * (y - x * theta) * (2.0 / y.len() as f64)
}

/// Homotopy for `(1/n) |Y - X theta|^2 + lambda |theta|_1` from `lambda_max`
/// down to `lambda_stop`.
///
/// With correlations `c = (2/n) X^T (Y - X theta)`, the active set `A` keeps
/// `c_A = lambda s_A`; lowering `lambda` by `t` moves
/// `theta_A` by `t w` with `w = (n/2) (X_A^T X_A)^{-1} s_A`. A step ends when
/// an inactive correlation reaches `+-lambda` (join) or an active coefficient
/// reaches zero (drop). The path stops early when the active Gram matrix
/// becomes singular.
pub fn lasso_path(x: &DMatrix<f64>, y: &DVector<f64>, lambda_stop: f64) -> Result<LassoPath> {
    check_len("target vector", x.nrows(), y.len())?;
    if !(lambda_stop >= 0.0 && lambda_stop.is_finite()) {
        return Err(Error::Argument(format!("lambda must be finite and >= 0, got {lambda_stop}")));
    }
    let (n, d) = x.shape();
    let mut lambda = lasso_lambda_max(x, y);
    let mut theta = DVector::zeros(d);
    let mut knots = vec![(lambda, theta.clone())];
    if lambda <= lambda_stop || lambda == 0.0 {
        return Ok(LassoPath { knots });
    }
    let c = correlations(x, y, &theta);
    let first = c.iamax();
    let mut active = vec![first];
    let mut signs = vec![c[first].signum()];
    let mut just_dropped: Option<usize> = None;

    for _ in 0..(20 * (n + d)) {
        let xa = x.select_columns(&active);
        let Some(chol) = Cholesky::new(xa.transpose() * &xa) else {
            break;
        };
        let s = DVector::from_column_slice(&signs);
        let w = chol.solve(&s) * (0.5 * n as f64);
        let c = correlations(x, y, &theta);
        let a = x.transpose() * (&xa * &w) * (2.0 / n as f64);

        let mut step = lambda - lambda_stop;
        let mut event: Option<(usize, bool)> = None;
        for j in 0..d {
            if active.contains(&j) || Some(j) == just_dropped {
                continue;
            }
            for (num, den) in [(lambda - c[j], 1.0 - a[j]), (lambda + c[j], 1.0 + a[j])] {
                if den > EVENT_TOL {
                    let t = (num / den).max(0.0);
                    if t < step {
                        step = t;
                        event = Some((j, true));
                    }
                }
            }
        }
        for (k, &j) in active.iter().enumerate() {
            if w[k] * signs[k] < 0.0 {
                let t = -theta[j] / w[k];
                if t >= 0.0 && t < step {
                    step = t;
                    event = Some((k, false));
                }
            }
        }

        for (k, &j) in active.iter().enumerate() {
            theta[j] += step * w[k];
        }
        lambda -= step;
        just_dropped = None;
        match event {
            None => {
                knots.push((lambda_stop, theta.clone()));
                return Ok(LassoPath { knots });
            }
            Some((j, true)) => {
                let cj = correlations(x, y, &theta)[j];
                active.push(j);
                signs.push(cj.signum());
            }
            Some((k, false)) => {
                let j = active.remove(k);
                signs.remove(k);
                theta[j] = 0.0;
                just_dropped = Some(j);
            }
        }
        match knots.last_mut() {
            Some(last) if last.0 == lambda => last.1 = theta.clone(),
            _ => knots.push((lambda, theta.clone())),
        }
        if active.is_empty() {
            break;
        }
    }
    Ok(LassoPath { knots })
}
