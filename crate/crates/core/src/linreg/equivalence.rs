use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{
    lasso_from, lasso_lambda_max, lasso_path, rms_residual, solve_adv_linreg, squared_loss, adv_objective,
    AdvSolveOptions, LassoFit, LinRegProblem, Penalty,
};
use crate::error::{Error, Result};
use crate::linalg::l1_norm;

/// Residual-level match required of the LASSO `lambda` search.
pub const RESIDUAL_MATCH_TOL: f64 = 1e-6;
const LAMBDA_FLOOR: f64 = 1e-12;
const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub epsilon: f64,
    pub theta_adv: DVector<f64>,
    /// RMS residual of `theta_adv`.
    pub b_hat: f64,
    pub lambda_matched: f64,
    pub theta_lasso: DVector<f64>,
    /// RMS residual of `theta_lasso`.
    pub b_lasso: f64,
    /// `|theta_adv - theta_lasso|_2`.
    pub discrepancy: f64,
    /// `epsilon |theta*|_1`.
    pub b_bound: f64,
    pub bound_satisfied: bool,
    pub l1_adv: f64,
    pub l1_lasso: f64,
    /// `|theta_adv|_1 <= |theta_lasso|_1 + 1e-6`.
    pub l1_cross_check: bool,
    /// `adv_objective(theta*) = epsilon^2 |theta*|_1^2`, absolute difference.
    pub truth_identity_gap: f64,
    pub adv_objective: f64,
    pub adv_converged: bool,
    pub lasso_kkt_residual: f64,
}

/// LASSO at the `lambda` whose RMS residual matches `target`, by bisection
/// in `log lambda` on `[1e-12 lambda_max, lambda_max]` along the exact
/// regularization path. Targets below the residual at the floor return the
/// floor solution.
fn match_residual(problem: &LinRegProblem, target: f64) -> Result<LassoFit> {
    let (x, y) = (&problem.x, &problem.y);
    let lmax = lasso_lambda_max(x, y);
    if lmax == 0.0 {
        return lasso_from(x, y, 0.0, &DVector::zeros(problem.d()));
    }
    let floor = lmax * LAMBDA_FLOOR;
    let path = lasso_path(x, y, floor)?;
    let residual = |lambda: f64| rms_residual(x, y, &path.at(lambda));
    let (mut lo, mut hi) = (floor.ln(), lmax.ln());
    if residual(floor) >= target {
        return Ok(path.fit(x, y, floor));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if residual(mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let (a, b) = (lo.exp(), hi.exp());
    let pick = if (residual(a) - target).abs() <= (residual(b) - target).abs() { a } else { b };
    Ok(path.fit(x, y, pick))
}

/// Solve adversarial training with an `l_inf` attack and compare it with the
/// LASSO solution at the residual-matched `lambda`.
pub fn check_theorem2_equivalence(
    problem: &LinRegProblem,
    epsilon: f64,
    opts: &AdvSolveOptions,
) -> Result<EquivalenceReport> {
    let (theta_star, _) = problem.require_realizable()?;
    if opts.xi != 1.0 {
        return Err(Error::Argument("the equivalence check uses xi = 1".into()));
    }
    let (x, y) = (&problem.x, &problem.y);
    let adv = solve_adv_linreg(x, y, epsilon, Penalty::L1, opts)?;
    let b_hat = rms_residual(x, y, &adv.theta);
    // Without an attack both problems are plain least squares, whose
    // minimizers coincide; LASSO at lambda = 0 is started at the same point.
    let lasso = if epsilon == 0.0 {
        lasso_from(x, y, 0.0, &adv.theta)?
    } else {
        match_residual(problem, b_hat)?
    };
    let b_bound = epsilon * l1_norm(theta_star);
    let l1_adv = l1_norm(&adv.theta);
    let l1_lasso = l1_norm(&lasso.theta);
    let truth_value = adv_objective(theta_star, x, y, epsilon, Penalty::L1);
    Ok(EquivalenceReport {
        epsilon,
        b_hat,
        lambda_matched: lasso.lambda,
        b_lasso: rms_residual(x, y, &lasso.theta),
        discrepancy: (&adv.theta - &lasso.theta).norm(),
        b_bound,
        bound_satisfied: b_hat <= b_bound + RESIDUAL_MATCH_TOL,
        l1_adv,
        l1_lasso,
        l1_cross_check: l1_adv <= l1_lasso + 1e-6,
        truth_identity_gap: (truth_value - b_bound * b_bound).abs(),
        adv_objective: adv.objective,
        adv_converged: adv.converged,
        lasso_kkt_residual: lasso.kkt_residual,
        theta_adv: adv.theta,
        theta_lasso: lasso.theta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corollary1Report {
    /// `|theta_adv - theta*|_2`.
    pub error_norm: f64,
    pub tau_hat: f64,
    /// `epsilon |theta*|_1 / sqrt(tau)`; `None` when `tau <= 0`.
    pub bound_l1: Option<f64>,
    /// `epsilon |theta*|_2 / sqrt(tau)`.
    pub bound_l2: Option<f64>,
    pub satisfied_l1: Option<bool>,
    pub satisfied_l2: Option<bool>,
    /// `|(theta_adv - theta*)_{S^c}|_1`.
    pub cone_off_support: f64,
    /// `|(theta_adv - theta*)_S|_1`.
    pub cone_on_support: f64,
    pub in_cone: bool,
}

pub fn check_corollary1_bound(
    problem: &LinRegProblem,
    theta_adv: &DVector<f64>,
    epsilon: f64,
    tau_hat: f64,
) -> Result<Corollary1Report> {
    let (theta_star, support) = problem.require_realizable()?;
    crate::error::check_len("adversarial solution", problem.d(), theta_adv.len())?;
    let diff = theta_adv - theta_star;
    let (mut on, mut off) = (0.0, 0.0);
    for j in 0..diff.len() {
        if support.contains(&j) {
            on += diff[j].abs();
        } else {
            off += diff[j].abs();
        }
    }
    let error_norm = diff.norm();
    let bound = |norm: f64| (tau_hat > 0.0).then(|| epsilon * norm / tau_hat.sqrt());
    let bound_l1 = bound(l1_norm(theta_star));
    let bound_l2 = bound(theta_star.norm());
    Ok(Corollary1Report {
        error_norm,
        tau_hat,
        satisfied_l1: bound_l1.map(|b| error_norm <= b),
        satisfied_l2: bound_l2.map(|b| error_norm <= b),
        bound_l1,
        bound_l2,
        cone_off_support: off,
        cone_on_support: on,
        in_cone: off <= on + 1e-6,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Point {
    pub xi: f64,
    pub theta: DVector<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub b_hat: f64,
    /// `epsilon sqrt(xi) |theta*|_q`.
    pub b_bound: f64,
    pub b_satisfied: bool,
    pub error_norm: f64,
    /// `xi epsilon |theta*|_1 / sqrt(tau)`.
    pub bound_xi: Option<f64>,
    /// `sqrt(xi) epsilon |theta*|_1 / sqrt(tau)`.
    pub bound_sqrt_xi: Option<f64>,
    pub satisfied_xi: Option<bool>,
    pub satisfied_sqrt_xi: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Curve {
    pub epsilon: f64,
    pub penalty: Penalty,
    pub points: Vec<Theorem3Point>,
    /// Whether `b_hat` is non-decreasing in `xi` (observed, not required).
    pub b_monotone: bool,
}

/// Solve the `xi`-weighted problem on each grid point and record residual
/// levels and both forms of the error bound.
pub fn theorem3_curve(
    problem: &LinRegProblem,
    epsilon: f64,
    penalty: Penalty,
    xi_grid: &[f64],
    tau_hat: f64,
    seed: u64,
) -> Result<Theorem3Curve> {
    let (theta_star, _) = problem.require_realizable()?;
    let (x, y) = (&problem.x, &problem.y);
    let q_norm = penalty.norm(theta_star);
    let l1 = l1_norm(theta_star);
    let mut points = Vec::with_capacity(xi_grid.len());
    for &xi in xi_grid {
        let opts = AdvSolveOptions {
            xi,
            seed,
            ..AdvSolveOptions::default()
        };
        let sol = solve_adv_linreg(x, y, epsilon, penalty, &opts)?;
        let b_hat = rms_residual(x, y, &sol.theta);
        let b_bound = epsilon * xi.sqrt() * q_norm;
        let error_norm = (&sol.theta - theta_star).norm();
        let bound = |w: f64| (tau_hat > 0.0).then(|| w * epsilon * l1 / tau_hat.sqrt());
        let bound_xi = bound(xi);
        let bound_sqrt_xi = bound(xi.sqrt());
        points.push(Theorem3Point {
            xi,
            alpha: squared_loss(x, y, &sol.theta),
            beta: adv_objective(&sol.theta, x, y, epsilon, penalty),
            b_hat,
            b_bound,
            b_satisfied: b_hat <= b_bound + RESIDUAL_MATCH_TOL,
            error_norm,
            satisfied_xi: bound_xi.map(|b| error_norm <= b),
            satisfied_sqrt_xi: bound_sqrt_xi.map(|b| error_norm <= b),
            bound_xi,
            bound_sqrt_xi,
            theta: sol.theta,
        });
    }
    let b_monotone = points.windows(2).all(|w| w[1].b_hat >= w[0].b_hat - 1e-12);
    Ok(Theorem3Curve {
        epsilon,
        penalty,
        points,
        b_monotone,
    })
}
