//! Clean versus adversarial loss trade-off curves.
//!
//! Each curve point minimizes `xi * beta(theta) + (1 - xi) * alpha(theta)`
//! where `alpha` is the clean batch loss and `beta` the worst-case batch loss
//! under the attack. Gradients of `beta` follow Danskin: the gradient of the
//! loss at the inner maximizer, with the maximizer held fixed.

mod io;
mod pareto;

pub use io::{curve_csv, curve_json, frontier_dat, gnuplot_script, CurveDocument};
pub use pareto::{curve_dominates, pareto_filter};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attack::{batch_inner_max, inner_max, mean_adversarial_loss, AttackSpec};
use crate::error::{Error, Result};
use crate::models::{
    batch_gradient_at, batch_hessian_at, batch_loss_unchecked, validate_batch, LabeledDataset,
    LossModel, ParameterVector,
};
use crate::optim::{minimize, Objective, OptimConfig, OptimResult};

/// Grid used when none is given; the endpoints stand in for 0 and 1.
pub const DEFAULT_XI_GRID: [f64; 5] = [0.001, 0.25, 0.5, 0.75, 0.999];

/// `xi * beta + (1 - xi) * alpha` over a fixed dataset and attack.
pub struct JointObjective<'a> {
    model: &'a dyn LossModel,
    data: &'a LabeledDataset,
    spec: AttackSpec,
    xi: f64,
}

impl<'a> JointObjective<'a> {
    pub fn new(
        model: &'a dyn LossModel,
        data: &'a LabeledDataset,
        spec: &AttackSpec,
        xi: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::Argument(format!("xi must lie in [0, 1], got {xi}")));
        }
        if data.input_dim() != model.input_dim() {
            return Err(Error::Dimension {
                what: "dataset input dimension",
                expected: model.input_dim(),
                found: data.input_dim(),
            });
        }
        Ok(Self {
            model,
            data,
            spec: spec.clone(),
            xi,
        })
    }

    fn deltas(&self, theta: &DVector<f64>) -> (f64, Vec<DVector<f64>>) {
        let outcomes: Vec<_> = (0..self.data.len())
            .map(|i| inner_max(self.model, theta, &self.data.input(i), self.data.target(i), &self.spec))
            .collect();
        let beta = mean_adversarial_loss(self.model, theta, &outcomes);
        (beta, outcomes.into_iter().map(|o| o.perturbation.into_delta()).collect())
    }

    /// `(alpha, beta)` at `theta`.
    pub fn parts(&self, theta: &DVector<f64>) -> (f64, f64) {
        let alpha = batch_loss_unchecked(self.model, theta, self.data);
        if self.spec.epsilon == 0.0 {
            return (alpha, alpha);
        }
        (alpha, self.deltas(theta).0)
    }
}

impl Objective for JointObjective<'_> {
    fn dim(&self) -> usize {
        self.model.param_dim()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let xi = self.xi;
        let alpha = if xi < 1.0 {
            batch_loss_unchecked(self.model, theta, self.data)
        } else {
            0.0
        };
        if xi == 0.0 || self.spec.epsilon == 0.0 {
            return if xi == 1.0 {
                batch_loss_unchecked(self.model, theta, self.data)
            } else {
                alpha
            };
        }
        xi * self.deltas(theta).0 + (1.0 - xi) * alpha
    }

    fn value_and_gradient(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let xi = self.xi;
        if xi == 0.0 || self.spec.epsilon == 0.0 {
            return (
                batch_loss_unchecked(self.model, theta, self.data),
                batch_gradient_at(self.model, theta, self.data, None),
            );
        }
        let (beta, deltas) = self.deltas(theta);
        let g_beta = batch_gradient_at(self.model, theta, self.data, Some(&deltas));
        if xi == 1.0 {
            return (beta, g_beta);
        }
        let alpha = batch_loss_unchecked(self.model, theta, self.data);
        let g_alpha = batch_gradient_at(self.model, theta, self.data, None);
        (xi * beta + (1.0 - xi) * alpha, g_beta * xi + g_alpha * (1.0 - xi))
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let xi = self.xi;
        let clean = || batch_hessian_at(self.model, theta, self.data, None);
        if xi == 0.0 || self.spec.epsilon == 0.0 {
            return Some(clean());
        }
        let (_, deltas) = self.deltas(theta);
        let h_beta = batch_hessian_at(self.model, theta, self.data, Some(&deltas));
        if xi == 1.0 {
            return Some(h_beta);
        }
        Some(h_beta * xi + clean() * (1.0 - xi))
    }
}

pub fn joint_objective(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
    spec: &AttackSpec,
    xi: f64,
) -> Result<f64> {
    validate_batch(model, theta, data)?;
    Ok(JointObjective::new(model, data, spec, xi)?.value(theta))
}

/// Gradient of the adversarial batch loss with the inner maximizers held
/// fixed.
pub fn danskin_gradient(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
    spec: &AttackSpec,
) -> Result<DVector<f64>> {
    let outcomes = batch_inner_max(model, theta, data, spec)?;
    let deltas: Vec<_> = outcomes.into_iter().map(|o| o.perturbation.into_delta()).collect();
    Ok(batch_gradient_at(model, theta, data, Some(&deltas)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub xi: f64,
    pub theta: ParameterVector,
    /// Clean loss on the evaluation set.
    pub alpha: f64,
    /// Adversarial loss on the evaluation set.
    pub beta: f64,
    pub train_alpha: f64,
    pub train_beta: f64,
    /// Joint objective on the training set.
    pub objective: f64,
    pub accuracy_clean: Option<f64>,
    pub accuracy_adv: Option<f64>,
    pub converged: bool,
    pub grad_norm_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub n_train: usize,
    pub n_eval: usize,
    pub input_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve {
    pub model: String,
    pub attack: AttackSpec,
    pub dataset: DatasetDescriptor,
    pub seed: u64,
    /// Ordered by `xi` ascending.
    pub points: Vec<CurvePoint>,
    /// Indices into `points` of the Pareto frontier, ordered by `alpha`.
    pub frontier: Vec<usize>,
}

impl TradeoffCurve {
    pub fn frontier_points(&self) -> impl Iterator<Item = &CurvePoint> {
        self.frontier.iter().map(|&i| &self.points[i])
    }

    pub fn alpha_beta(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.alpha, p.beta)).collect()
    }

    pub fn frontier_alpha_beta(&self) -> Vec<(f64, f64)> {
        self.frontier_points().map(|p| (p.alpha, p.beta)).collect()
    }
}

/// Seeded standard-normal starting parameters scaled by `0.5`.
///
/// Zero is a saddle for models such as the quadratic network, so sweeps start
/// from a random point.
pub fn initial_parameters(model: &dyn LossModel, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(model.param_dim(), |_, _| {
        0.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    })
}

/// Minimize the clean batch loss from the seeded initializer.
pub fn clean_minimizer(
    model: &dyn LossModel,
    data: &LabeledDataset,
    cfg: &OptimConfig,
) -> Result<OptimResult> {
    let spec = AttackSpec::new(crate::attack::Norm::L2, 0.0)?;
    let obj = JointObjective::new(model, data, &spec, 0.0)?;
    minimize(&obj, &initial_parameters(model, cfg.seed), cfg)
}

fn accuracy(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
    spec: Option<&AttackSpec>,
) -> Option<f64> {
    let mut correct = 0usize;
    for i in 0..data.len() {
        let mut x = data.input(i);
        let y = data.target(i);
        if let Some(spec) = spec {
            x += inner_max(model, theta, &x, y, spec).perturbation.delta();
        }
        let label = model.predict_label(theta, &x)?;
        if label == y {
            correct += 1;
        }
    }
    Some(correct as f64 / data.len() as f64)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_point(
    model: &dyn LossModel,
    train: &LabeledDataset,
    eval: &LabeledDataset,
    xi: f64,
    spec: &AttackSpec,
    theta: DVector<f64>,
    converged: bool,
    grad_norm_final: f64,
) -> Result<CurvePoint> {
    let train_obj = JointObjective::new(model, train, spec, xi)?;
    let (train_alpha, train_beta) = train_obj.parts(&theta);
    let (alpha, beta) = JointObjective::new(model, eval, spec, xi)?.parts(&theta);
    let accuracy_clean = accuracy(model, &theta, eval, None);
    let accuracy_adv = accuracy_clean.and_then(|_| accuracy(model, &theta, eval, Some(spec)));
    Ok(CurvePoint {
        xi,
        theta: model.parameters(theta)?,
        alpha,
        beta,
        train_alpha,
        train_beta,
        objective: xi * train_beta + (1.0 - xi) * train_alpha,
        accuracy_clean,
        accuracy_adv,
        converged,
        grad_norm_final,
    })
}

fn check_xi(xi: f64) -> Result<()> {
    if xi > 0.0 && xi < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("curve weights must lie strictly inside (0, 1), got {xi}")))
    }
}

/// Minimize the joint objective for one `xi` from `start`.
///
/// Optimizer failures are reported as an unconverged point at `start`.
#[allow(clippy::too_many_arguments)]
pub fn optimize_point_from(
    model: &dyn LossModel,
    train: &LabeledDataset,
    eval: &LabeledDataset,
    xi: f64,
    spec: &AttackSpec,
    cfg: &OptimConfig,
    start: &DVector<f64>,
) -> Result<CurvePoint> {
    check_xi(xi)?;
    validate_batch(model, start, train)?;
    validate_batch(model, start, eval)?;
    let obj = JointObjective::new(model, train, spec, xi)?;
    match minimize(&obj, start, cfg) {
        Ok(r) => evaluate_point(model, train, eval, xi, spec, r.theta, r.converged, r.grad_norm),
        Err(Error::Optimization { .. }) => {
            evaluate_point(model, train, eval, xi, spec, start.clone(), false, f64::INFINITY)
        }
        Err(e) => Err(e),
    }
}

/// One curve point started from the clean minimizer, evaluated on `data`.
pub fn optimize_point(
    model: &dyn LossModel,
    data: &LabeledDataset,
    xi: f64,
    spec: &AttackSpec,
    cfg: &OptimConfig,
) -> Result<CurvePoint> {
    check_xi(xi)?;
    let clean = clean_minimizer(model, data, cfg)?;
    optimize_point_from(model, data, data, xi, spec, cfg, &clean.theta)
}

fn better(a: &CurvePoint, b: &CurvePoint) -> bool {
    a.objective < b.objective
}

/// Sweep the weight grid ascending.
///
/// Every point is solved from the previous solution and from the clean
/// minimizer, keeping the lower objective. A final exchange pass restarts any
/// point from another point's parameters when those score lower on its own
/// objective, so each point is optimal among all computed candidates.
pub fn sweep_curve(
    model: &dyn LossModel,
    train: &LabeledDataset,
    eval: &LabeledDataset,
    xi_grid: &[f64],
    spec: &AttackSpec,
    cfg: &OptimConfig,
) -> Result<TradeoffCurve> {
    cfg.validate()?;
    if xi_grid.is_empty() {
        return Err(Error::Argument("the weight grid is empty".into()));
    }
    for &xi in xi_grid {
        check_xi(xi)?;
    }
    if xi_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("the weight grid must be strictly increasing".into()));
    }
    if eval.input_dim() != model.input_dim() {
        return Err(Error::Dimension {
            what: "eval input dimension",
            expected: model.input_dim(),
            found: eval.input_dim(),
        });
    }
    let clean = clean_minimizer(model, train, cfg)?;
    let mut points: Vec<CurvePoint> = Vec::with_capacity(xi_grid.len());
    for (k, &xi) in xi_grid.iter().enumerate() {
        let cold = optimize_point_from(model, train, eval, xi, spec, cfg, &clean.theta)?;
        let chosen = match points.last() {
            Some(prev) if k > 0 => {
                let warm = optimize_point_from(model, train, eval, xi, spec, cfg, &prev.theta.to_dvector())?;
                if better(&warm, &cold) {
                    warm
                } else {
                    cold
                }
            }
            _ => cold,
        };
        points.push(chosen);
    }

    for _pass in 0..3 {
        let mut changed = false;
        for k in 0..points.len() {
            let xi = points[k].xi;
            let obj = JointObjective::new(model, train, spec, xi)?;
            for j in 0..points.len() {
                if j == k {
                    continue;
                }
                let cand = points[j].theta.to_dvector();
                if obj.value(&cand) < points[k].objective {
                    let restarted = optimize_point_from(model, train, eval, xi, spec, cfg, &cand)?;
                    if better(&restarted, &points[k]) {
                        points[k] = restarted;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.alpha, p.beta)).collect();
    Ok(TradeoffCurve {
        model: model.name().to_string(),
        attack: spec.clone(),
        dataset: DatasetDescriptor {
            n_train: train.len(),
            n_eval: eval.len(),
            input_dim: train.input_dim(),
        },
        seed: cfg.seed,
        frontier: pareto_filter(&pairs),
        points,
    })
}
