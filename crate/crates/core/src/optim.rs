//! Deterministic full-batch minimizers shared by the trade-off sweep and the
//! influence-function retraining oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{damped_cholesky, sup_norm};

/// A smooth (or Danskin-smooth) objective over a parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, theta: &DVector<f64>) -> f64;

    fn value_and_gradient(&self, theta: &DVector<f64>) -> (f64, DVector<f64>);

    /// Whether [`Objective::hessian`] returns a curvature model.
    fn has_hessian(&self) -> bool {
        false
    }

    /// Curvature model for Newton polishing.
    fn hessian(&self, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub max_iters: usize,
    /// Stop once the gradient sup-norm is at or below this.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    /// Newton iterations available for polishing; 0 disables it.
    pub newton_iters: usize,
    /// Descent iterations before switching to Newton when the objective
    /// supplies curvature.
    pub newton_switch: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-8,
            armijo_c: 1e-4,
            shrink: 0.5,
            newton_iters: 50,
            newton_switch: 200,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Argument("max_iters must be positive".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Argument(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Argument(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Argument(format!("shrink must lie in (0, 1), got {}", self.shrink)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub theta: DVector<f64>,
    pub value: f64,
    /// Sup-norm of the gradient at `theta`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after every accepted step, starting value first.
    pub trace: Vec<f64>,
}

const MAX_BACKTRACKS: usize = 80;
/// Descent gives up when the objective has moved by no more than a few ulps
/// over this many accepted steps (typical when parked on a kink).
const STALL_WINDOW: usize = 100;
const MAX_STEP: f64 = 1e8;

fn start(obj: &dyn Objective, theta0: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    if theta0.len() != obj.dim() {
        return Err(Error::Dimension {
            what: "initial parameters",
            expected: obj.dim(),
            found: theta0.len(),
        });
    }
    let (f, g) = obj.value_and_gradient(theta0);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimization {
            message: "objective or gradient is not finite at the initial point".into(),
            trace: vec![f],
        });
    }
    Ok((f, g))
}

/// Gradient descent with Armijo backtracking. The step length carries over
/// between iterations and is allowed to double after each success. Stops
/// early, unconverged, once the objective stalls.
pub fn gradient_descent(
    obj: &dyn Objective,
    theta0: &DVector<f64>,
    cfg: &OptimConfig,
) -> Result<OptimResult> {
    cfg.validate()?;
    let (mut f, mut g) = start(obj, theta0)?;
    let mut theta = theta0.clone();
    let mut trace = vec![f];
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    while iterations < cfg.max_iters && sup_norm(&g) > cfg.grad_tol {
        let g2 = g.norm_squared();
        let mut t = (2.0 * step).min(MAX_STEP);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = &theta - &g * t;
            let fc = obj.value(&cand);
            if fc.is_finite() && fc <= f - cfg.armijo_c * t * g2 {
                accepted = Some(cand);
                break;
            }
            t *= cfg.shrink;
        }
        let Some(cand) = accepted else { break };
        step = t;
        theta = cand;
        (f, g) = obj.value_and_gradient(&theta);
        if !f.is_finite() {
            return Err(Error::Optimization {
                message: "objective became non-finite".into(),
                trace,
            });
        }
        trace.push(f);
        iterations += 1;
        if let Some(&old) = trace.len().checked_sub(STALL_WINDOW + 1).map(|k| &trace[k]) {
            if old - f <= 8.0 * f64::EPSILON * f.abs() {
                break;
            }
        }
    }
    let grad_norm = sup_norm(&g);
    Ok(OptimResult {
        theta,
        value: f,
        grad_norm,
        iterations,
        converged: grad_norm <= cfg.grad_tol,
        trace,
    })
}

/// Damped Newton with backtracking. A step is taken when it satisfies the
/// Armijo condition or, once the value is flat to rounding, when it reduces
/// the gradient norm.
pub fn newton_polish(
    obj: &dyn Objective,
    theta0: &DVector<f64>,
    cfg: &OptimConfig,
) -> Result<OptimResult> {
    cfg.validate()?;
    let (mut f, mut g) = start(obj, theta0)?;
    let mut theta = theta0.clone();
    let mut trace = vec![f];
    let mut iterations = 0;
    while iterations < cfg.newton_iters && sup_norm(&g) > cfg.grad_tol {
        let Some(h) = obj.hessian(&theta) else { break };
        let Ok((chol, _)) = damped_cholesky(&h, 0.0) else { break };
        let p = -chol.solve(&g);
        let slope = g.dot(&p);
        if !(slope < 0.0) {
            break;
        }
        let gn = sup_norm(&g);
        let flat = 1e-12 * f.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &theta + &p * t;
            let (fc, gc) = obj.value_and_gradient(&cand);
            if fc.is_finite() {
                let armijo = fc <= f + cfg.armijo_c * t * slope;
                let flat_progress = fc <= f + flat && sup_norm(&gc) < gn;
                if armijo || flat_progress {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            t *= cfg.shrink;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        theta = cand;
        f = fc;
        g = gc;
        trace.push(f);
        iterations += 1;
    }
    let grad_norm = sup_norm(&g);
    Ok(OptimResult {
        theta,
        value: f,
        grad_norm,
        iterations,
        converged: grad_norm <= cfg.grad_tol,
        trace,
    })
}

fn concat(first: OptimResult, second: OptimResult) -> OptimResult {
    let mut trace = first.trace;
    trace.extend_from_slice(&second.trace[1..]);
    OptimResult {
        iterations: first.iterations + second.iterations,
        trace,
        ..second
    }
}

/// Descent, switching to Newton after `newton_switch` iterations when the
/// objective supplies curvature, then descent again with the remaining budget
/// if Newton stops short of the tolerance.
pub fn minimize(obj: &dyn Objective, theta0: &DVector<f64>, cfg: &OptimConfig) -> Result<OptimResult> {
    let newton = cfg.newton_iters > 0 && obj.has_hessian();
    if !newton {
        return gradient_descent(obj, theta0, cfg);
    }
    let first = OptimConfig {
        max_iters: cfg.newton_switch.clamp(1, cfg.max_iters),
        ..cfg.clone()
    };
    let gd = gradient_descent(obj, theta0, &first)?;
    if gd.converged {
        return Ok(gd);
    }
    let nt = newton_polish(obj, &gd.theta, cfg)?;
    let mut acc = concat(gd, nt);
    let remaining = cfg.max_iters.saturating_sub(first.max_iters);
    if acc.converged || remaining == 0 {
        return Ok(acc);
    }
    let rest = OptimConfig {
        max_iters: remaining,
        ..cfg.clone()
    };
    let gd2 = gradient_descent(obj, &acc.theta, &rest)?;
    acc = concat(acc, gd2);
    if !acc.converged {
        let nt2 = newton_polish(obj, &acc.theta, cfg)?;
        acc = concat(acc, nt2);
    }
    Ok(acc)
}
