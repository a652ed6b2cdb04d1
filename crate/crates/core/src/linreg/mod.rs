//! Adversarially trained linear regression in the over-parameterized regime.
//!
//! For a linear predictor and squared loss the inner maximization over
//! per-sample `l_p` perturbations of size `epsilon` has the closed form
//! `(1/n) sum_i (|y_i - x_i^T theta| + epsilon |theta|_q)^2`, so adversarial
//! training becomes a norm-penalized least-squares problem. With `q = 1`
//! (an `l_inf` attack) it matches LASSO at a residual-matched `lambda`.

mod equivalence;
mod interpolators;
mod lasso;
mod path;
mod restricted;
mod solver;

pub use equivalence::{
    check_corollary1_bound, check_theorem2_equivalence, theorem3_curve, Corollary1Report,
    EquivalenceReport, Theorem3Curve, Theorem3Point,
};
pub use interpolators::{construct_divergent_interpolators, DivergentInterpolator};
pub use lasso::{
    lasso_coordinate_descent, lasso_from, lasso_kkt_residual, lasso_lambda_max, ridge_solve,
    LassoFit,
};
pub use path::{lasso_path, LassoPath};
pub use restricted::{restricted_eigenvalue_estimate, ReCertificate, ReEstimate};
pub use solver::{solve_adv_linreg, AdvSolution, AdvSolveOptions};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::attack::Norm;
use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::l1_norm;

/// Realizability tolerance on `|Y - X theta*|_inf`.
pub const REALIZABLE_TOL: f64 = 1e-12;

/// Dual norm `q` penalizing `theta` in the closed-form objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    /// `q = 1`, from an `l_inf` attack.
    L1,
    /// `q = 2`, from an `l_2` attack.
    L2,
}

impl Penalty {
    pub fn from_attack(norm: Norm) -> Result<Self> {
        match norm {
            Norm::Linf => Ok(Penalty::L1),
            Norm::L2 => Ok(Penalty::L2),
            Norm::Lp(p) => Err(Error::Argument(format!(
                "only p = 2 and p = inf attacks have a supported penalty, got p = {p}"
            ))),
        }
    }

    pub fn q(&self) -> f64 {
        match self {
            Penalty::L1 => 1.0,
            Penalty::L2 => 2.0,
        }
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        match self {
            Penalty::L1 => l1_norm(v),
            Penalty::L2 => v.norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinRegProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub theta_star: Option<DVector<f64>>,
    pub support: Option<Vec<usize>>,
    pub realizable: bool,
}

impl LinRegProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Argument("design matrix must be non-empty".into()));
        }
        check_len("target vector", x.nrows(), y.len())?;
        check_finite("design matrix", x.iter())?;
        check_finite("target vector", y.iter())?;
        Ok(Self {
            x,
            y,
            theta_star: None,
            support: None,
            realizable: false,
        })
    }

    /// Attach a ground truth; the support is its non-zero pattern and the
    /// problem is realizable when `Y = X theta*` to [`REALIZABLE_TOL`].
    pub fn with_truth(mut self, theta_star: DVector<f64>) -> Result<Self> {
        check_len("ground truth", self.x.ncols(), theta_star.len())?;
        check_finite("ground truth", theta_star.iter())?;
        let resid = (&self.y - &self.x * &theta_star).amax();
        self.realizable = resid <= REALIZABLE_TOL;
        self.support = Some((0..theta_star.len()).filter(|&j| theta_star[j] != 0.0).collect());
        self.theta_star = Some(theta_star);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub(crate) fn require_realizable(&self) -> Result<(&DVector<f64>, &[usize])> {
        match (&self.theta_star, &self.support) {
            (Some(t), Some(s)) if self.realizable => Ok((t, s)),
            _ => Err(Error::Precondition(
                "a realizable problem (Y = X theta* exactly) is required".into(),
            )),
        }
    }
}

/// Root mean squared residual `sqrt((1/n) |Y - X theta|^2)`.
pub fn rms_residual(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    ((y - x * theta).norm_squared() / y.len() as f64).sqrt()
}

/// `(1/n) |Y - X theta|^2`.
pub fn squared_loss(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    (y - x * theta).norm_squared() / y.len() as f64
}

/// Worst-case squared loss `(1/n) sum_i (|y_i - x_i^T theta| + epsilon |theta|_q)^2`.
pub fn adv_objective(
    theta: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    epsilon: f64,
    penalty: Penalty,
) -> f64 {
    let t = epsilon * penalty.norm(theta);
    let r = y - x * theta;
    r.iter().map(|ri| (ri.abs() + t).powi(2)).sum::<f64>() / y.len() as f64
}

/// `xi * adv_objective + (1 - xi) * squared_loss`.
pub fn weighted_objective(
    theta: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    epsilon: f64,
    penalty: Penalty,
    xi: f64,
) -> f64 {
    let adv = if xi > 0.0 {
        adv_objective(theta, x, y, epsilon, penalty)
    } else {
        0.0
    };
    let clean = if xi < 1.0 { squared_loss(x, y, theta) } else { 0.0 };
    xi * adv + (1.0 - xi) * clean
}
