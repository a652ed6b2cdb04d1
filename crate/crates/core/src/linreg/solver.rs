use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{lasso_lambda_max, lasso_path, weighted_objective, Penalty};
use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::{damped_cholesky, pseudo_inverse};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvSolveOptions {
    /// Weight of the adversarial term; the rest goes to the clean loss.
    pub xi: f64,
    pub seed: u64,
    /// Newton iterations allowed per smoothing level.
    pub newton_per_level: usize,
}

impl Default for AdvSolveOptions {
    fn default() -> Self {
        Self {
            xi: 1.0,
            seed: 0,
            newton_per_level: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvSolution {
    pub theta: DVector<f64>,
    /// Exact (unsmoothed) objective at `theta`.
    pub objective: f64,
    /// Final Newton decrement of the smoothed objective was below tolerance.
    pub converged: bool,
    /// Half the squared Newton decrement at exit: an estimate of the gap to
    /// the smoothed optimum.
    pub gap_estimate: f64,
    /// Exact objective reached from each initialization, in order.
    pub restart_objectives: Vec<f64>,
    pub best_restart: usize,
}

impl AdvSolution {
    /// `max - min` of the restart objectives.
    pub fn restart_spread(&self) -> f64 {
        let max = self.restart_objectives.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max - self.objective
    }
}

/// Smoothing levels `eta = 10^-k`.
const SMOOTHING_LEVELS: std::ops::RangeInclusive<i32> = 1..=13;
const DECREMENT_TOL: f64 = 1e-28;
const DECREMENT_REL_TOL: f64 = 1e-13;

/// Smoothed objective with `|r| -> sqrt(r^2 + eta^2)` and the penalty
/// smoothed the same way.
struct Smoothed<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    epsilon: f64,
    penalty: Penalty,
    xi: f64,
    eta: f64,
}

impl Smoothed<'_> {
    /// Penalty value, gradient and Hessian.
    fn penalty_parts(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let e2 = self.eta * self.eta;
        let d = theta.len();
        match self.penalty {
            Penalty::L1 => {
                let s = theta.map(|t| (t * t + e2).sqrt());
                let g = theta.component_div(&s);
                let h = DMatrix::from_diagonal(&s.map(|si| e2 / (si * si * si)));
                (s.sum(), g, h)
            }
            Penalty::L2 => {
                let t = (theta.norm_squared() + e2).sqrt();
                let g = theta / t;
                let h = (DMatrix::identity(d, d) - theta * theta.transpose() / (t * t)) / t;
                (t, g, h)
            }
        }
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let n = self.y.len() as f64;
        let r = self.y - self.x * theta;
        let (t, _, _) = self.penalty_parts(theta);
        let e2 = self.eta * self.eta;
        r.iter()
            .map(|ri| {
                let phi = (ri * ri + e2).sqrt() + self.epsilon * t;
                self.xi * phi * phi + (1.0 - self.xi) * ri * ri
            })
            .sum::<f64>()
            / n
    }

    fn derivatives(&self, theta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (n, d) = self.x.shape();
        let nf = n as f64;
        let e2 = self.eta * self.eta;
        let r = self.y - self.x * theta;
        let (t, gt, ht) = self.penalty_parts(theta);
        let mut f = 0.0;
        let mut g = DVector::zeros(d);
        // rows of G are grad phi_i
        let mut gmat = DMatrix::zeros(n, d);
        let mut curv = DVector::zeros(n);
        let mut phi_sum = 0.0;
        for i in 0..n {
            let ri = r[i];
            let a = (ri * ri + e2).sqrt();
            let phi = a + self.epsilon * t;
            f += self.xi * phi * phi + (1.0 - self.xi) * ri * ri;
            let xi_row = self.x.row(i);
            let mut grow = xi_row * (-ri / a);
            grow += gt.transpose() * self.epsilon;
            g += grow.transpose() * (self.xi * phi) - xi_row.transpose() * ((1.0 - self.xi) * ri);
            gmat.set_row(i, &grow);
            curv[i] = self.xi * phi * e2 / (a * a * a) + (1.0 - self.xi);
            phi_sum += phi;
        }
        let scale = 2.0 / nf;
        let mut h = gmat.transpose() * &gmat * self.xi;
        h += self.x.transpose() * DMatrix::from_diagonal(&curv) * self.x;
        h += ht * (self.xi * self.epsilon * phi_sum);
        (f / nf, g * scale, h * scale)
    }
}

/// Damped Newton on one smoothing level. Returns the final half squared
/// decrement and whether it fell below tolerance.
fn newton_level(obj: &Smoothed<'_>, theta: &mut DVector<f64>, max_iters: usize) -> (f64, bool) {
    let mut last_dec = f64::INFINITY;
    for _ in 0..max_iters {
        let (f, g, h) = obj.derivatives(theta);
        let step = match damped_cholesky(&h, 0.0) {
            Ok((chol, _)) => -chol.solve(&g),
            Err(_) => -g.clone(),
        };
        let dec = g.dot(&step);
        last_dec = -0.5 * dec;
        if !(-dec > DECREMENT_TOL.max(DECREMENT_REL_TOL * f.abs())) {
            return (last_dec.max(0.0), true);
        }
        let mut s = 1.0;
        let mut moved = false;
        while s > 1e-20 {
            let cand = &*theta + &step * s;
            if obj.value(&cand) <= f + 1e-4 * s * dec {
                *theta = cand;
                moved = true;
                break;
            }
            s *= 0.5;
        }
        if !moved {
            return (last_dec, false);
        }
    }
    (last_dec, false)
}

fn solve_from(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    epsilon: f64,
    penalty: Penalty,
    opts: &AdvSolveOptions,
    start: DVector<f64>,
) -> (DVector<f64>, f64, bool) {
    let mut theta = start;
    let mut gap = f64::INFINITY;
    let mut ok = false;
    for k in SMOOTHING_LEVELS {
        let obj = Smoothed {
            x,
            y,
            epsilon,
            penalty,
            xi: opts.xi,
            eta: 10f64.powi(-k),
        };
        (gap, ok) = newton_level(&obj, &mut theta, opts.newton_per_level);
    }
    (theta, gap, ok)
}

/// Minimize `xi * adv_objective + (1 - xi) * squared_loss`.
///
/// The non-smooth absolute values are replaced by `sqrt(. + eta^2)` and the
/// smoothed problem is solved by damped Newton along a continuation
/// `eta = 0.1, 0.01, ..., 1e-13`. Five deterministic initializations are run
/// (zero, minimum-norm interpolator, LASSO at `lambda_max / 10` and
/// `lambda_max / 100`, seeded Gaussian) and the best exact objective is kept.
pub fn solve_adv_linreg(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    epsilon: f64,
    penalty: Penalty,
    opts: &AdvSolveOptions,
) -> Result<AdvSolution> {
    check_len("target vector", x.nrows(), y.len())?;
    check_finite("design matrix", x.iter())?;
    check_finite("target vector", y.iter())?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Argument(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if !(0.0..=1.0).contains(&opts.xi) {
        return Err(Error::Argument(format!("xi must lie in [0, 1], got {}", opts.xi)));
    }
    let d = x.ncols();
    let lmax = lasso_lambda_max(x, y);
    let mut inits = vec![DVector::zeros(d), pseudo_inverse(x) * y];
    let path = lasso_path(x, y, 0.01 * lmax)?;
    for frac in [0.1, 0.01] {
        inits.push(path.at(frac * lmax));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    inits.push(DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)));

    let mut best: Option<(DVector<f64>, f64, bool, usize)> = None;
    let mut restart_objectives = Vec::with_capacity(inits.len());
    for (k, init) in inits.into_iter().enumerate() {
        let (theta, gap, ok) = solve_from(x, y, epsilon, penalty, opts, init);
        let obj = weighted_objective(&theta, x, y, epsilon, penalty, opts.xi);
        restart_objectives.push(obj);
        if best.as_ref().map_or(true, |b| obj < restart_objectives[b.3]) {
            best = Some((theta, gap, ok, k));
        }
    }
    let (theta, gap, ok, k) = best.expect("at least one initialization");
    Ok(AdvSolution {
        objective: restart_objectives[k],
        theta,
        converged: ok,
        gap_estimate: gap,
        restart_objectives,
        best_restart: k,
    })
}
