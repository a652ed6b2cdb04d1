//! Influence function of an adversarial attack and the quadratic estimate of
//! the clean-loss price of robustness.
//!
//! At a stationary `theta_hat` with positive definite batch Hessian `H`, the
//! robust minimizer moves as `theta_eps = theta_hat + eps * IFA + O(eps^2)`
//! with `IFA = -H^{-1} Phi` and `Phi = (1/n) sum_i mixed_i phi_i`, where
//! `phi_i` is the Hölder direction of the input gradient of sample `i`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::attack::{holder_direction, AttackSpec, Norm};
use crate::error::{check_len, Error, Result};
use crate::linalg::{damped_cholesky, eigen_extremes, sign, sup_norm};
use crate::models::{
    batch_gradient, batch_hessian, batch_loss, batch_loss_unchecked, validate_batch,
    LabeledDataset, LossModel,
};
use crate::optim::{minimize, Objective, OptimConfig, OptimResult};
use crate::tradeoff::JointObjective;

pub const DEFAULT_STATIONARITY_TOL: f64 = 1e-6;

/// Gradient sup-norm required of the retraining oracle.
pub const RETRAIN_TOL: f64 = 1e-10;

const ZERO_INPUT_GRADIENT: f64 = crate::attack::ZERO_GRADIENT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IfaOptions {
    pub stationarity_tol: f64,
    /// Initial damping `mu`; escalated automatically if `H + mu I` is not PD.
    pub damping: f64,
    pub require_stationary: bool,
}

impl Default for IfaOptions {
    fn default() -> Self {
        Self {
            stationarity_tol: DEFAULT_STATIONARITY_TOL,
            damping: 0.0,
            require_stationary: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiAssembly {
    pub phi: DVector<f64>,
    /// Samples whose input gradient vanishes; they contribute nothing.
    pub degenerate_samples: Vec<usize>,
    /// Sup-norm of the batch gradient at the expansion point.
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IfaResult {
    pub ifa: DVector<f64>,
    pub phi: DVector<f64>,
    /// `(lambda_min, lambda_max)` of the undamped batch Hessian.
    pub hessian_condition: (f64, f64),
    pub damping_used: f64,
    pub degenerate_samples: Vec<usize>,
    pub gradient_norm: f64,
    /// `|(H + mu I) ifa + Phi|`.
    pub solve_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffQuadApprox {
    pub delta_hat: f64,
    /// `Phi^T Ht^{-1} He Ht^{-1} Phi`.
    pub quad_form_value: f64,
    /// `None` when the evaluation Hessian is not positive definite.
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
}

/// `Phi = (1/n) sum_i mixed_i phi_i` at `theta_hat`.
pub fn assemble_phi(
    model: &dyn LossModel,
    theta_hat: &DVector<f64>,
    data: &LabeledDataset,
    norm: Norm,
    stationarity_tol: Option<f64>,
) -> Result<PhiAssembly> {
    let grad = batch_gradient(model, theta_hat, data)?;
    let gradient_norm = sup_norm(&grad);
    if let Some(tol) = stationarity_tol {
        if gradient_norm > tol {
            return Err(Error::Stationarity {
                grad_norm: gradient_norm,
                tol,
            });
        }
    }
    let mut phi = DVector::zeros(model.param_dim());
    let mut degenerate_samples = Vec::new();
    for i in 0..data.len() {
        let x = data.input(i);
        let y = data.target(i);
        let gx = model.grad_x(theta_hat, &x, y);
        if sup_norm(&gx) <= ZERO_INPUT_GRADIENT {
            degenerate_samples.push(i);
            continue;
        }
        let dir = holder_direction(&gx, norm)?;
        phi += model.mixed(theta_hat, &x, y) * dir;
    }
    phi /= data.len() as f64;
    Ok(PhiAssembly {
        phi,
        degenerate_samples,
        gradient_norm,
    })
}

pub fn compute_ifa(
    model: &dyn LossModel,
    theta_hat: &DVector<f64>,
    data: &LabeledDataset,
    norm: Norm,
    opts: &IfaOptions,
) -> Result<IfaResult> {
    if !(opts.damping >= 0.0) {
        return Err(Error::Argument(format!("damping must be >= 0, got {}", opts.damping)));
    }
    let tol = opts.require_stationary.then_some(opts.stationarity_tol);
    let assembly = assemble_phi(model, theta_hat, data, norm, tol)?;
    let h = batch_hessian(model, theta_hat, data)?;
    let hessian_condition = eigen_extremes(&h);
    let (chol, mu) = damped_cholesky(&h, opts.damping)?;
    let ifa = -chol.solve(&assembly.phi);
    let mut damped = h;
    for j in 0..damped.nrows() {
        damped[(j, j)] += mu;
    }
    let solve_residual = (&damped * &ifa + &assembly.phi).norm();
    Ok(IfaResult {
        ifa,
        phi: assembly.phi,
        hessian_condition,
        damping_used: mu,
        degenerate_samples: assembly.degenerate_samples,
        gradient_norm: assembly.gradient_norm,
        solve_residual,
    })
}

/// Clean-loss increase `alpha(theta_eps) - alpha(theta_hat)` on `eval`.
pub fn delta_hat_exact(
    model: &dyn LossModel,
    theta_hat: &DVector<f64>,
    theta_eps: &DVector<f64>,
    eval: &LabeledDataset,
) -> Result<f64> {
    Ok(batch_loss(model, theta_eps, eval)? - batch_loss(model, theta_hat, eval)?)
}

/// `0.5 Phi^T Ht^{-1} He Ht^{-1} Phi eps^2` with the spectral sandwich
/// `lmin(He)/lmax(Ht)^2 |Phi|^2 <= quad <= lmax(He)/lmin(Ht)^2 |Phi|^2`.
pub fn delta_hat_quadratic(
    phi: &DVector<f64>,
    h_train: &DMatrix<f64>,
    h_eval: &DMatrix<f64>,
    epsilon: f64,
) -> Result<TradeoffQuadApprox> {
    let d = phi.len();
    check_len("train Hessian rows", d, h_train.nrows())?;
    check_len("train Hessian cols", d, h_train.ncols())?;
    check_len("eval Hessian rows", d, h_eval.nrows())?;
    check_len("eval Hessian cols", d, h_eval.ncols())?;
    let chol = Cholesky::new(crate::linalg::symmetrized(h_train))
        .ok_or(Error::SingularHessian { damping: 0.0 })?;
    let v = chol.solve(phi);
    let quad_form_value = v.dot(&(h_eval * &v));
    let (et_min, et_max) = eigen_extremes(h_train);
    let (ee_min, ee_max) = eigen_extremes(h_eval);
    let phi2 = phi.norm_squared();
    let (lower_bound, upper_bound) = if ee_min > 0.0 {
        (
            Some(ee_min / (et_max * et_max) * phi2),
            Some(ee_max / (et_min * et_min) * phi2),
        )
    } else {
        (None, None)
    };
    Ok(TradeoffQuadApprox {
        delta_hat: 0.5 * quad_form_value * epsilon * epsilon,
        quad_form_value,
        lower_bound,
        upper_bound,
    })
}

/// Damped second-order model of the clean batch loss around `center`:
/// `alpha(c) + g^T (theta - c) + 0.5 (theta - c)^T (H + mu I) (theta - c)`.
#[derive(Debug, Clone)]
pub struct QuadraticSurrogate {
    center: DVector<f64>,
    value0: f64,
    grad0: DVector<f64>,
    hessian: DMatrix<f64>,
    damping: f64,
}

impl QuadraticSurrogate {
    pub fn new(
        model: &dyn LossModel,
        center: &DVector<f64>,
        data: &LabeledDataset,
        damping: f64,
    ) -> Result<Self> {
        if !(damping >= 0.0) {
            return Err(Error::Argument(format!("damping must be >= 0, got {damping}")));
        }
        validate_batch(model, center, data)?;
        let value0 = batch_loss_unchecked(model, center, data);
        let grad0 = batch_gradient(model, center, data)?;
        let h = batch_hessian(model, center, data)?;
        let (_, mu) = damped_cholesky(&h, damping)?;
        let mut hessian = h;
        for j in 0..hessian.nrows() {
            hessian[(j, j)] += mu;
        }
        Ok(Self {
            center: center.clone(),
            value0,
            grad0,
            hessian,
            damping: mu,
        })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// `H + mu I`.
    pub fn hessian_matrix(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.grad0 + &self.hessian * (theta - &self.center)
    }

    pub fn minimizer(&self) -> DVector<f64> {
        let chol = Cholesky::new(self.hessian.clone()).expect("damped Hessian is positive definite");
        &self.center - chol.solve(&self.grad0)
    }

    /// IFA of the surrogate: `-(H + mu I)^{-1} Phi` at the center, with no
    /// stationarity requirement.
    pub fn ifa(&self, model: &dyn LossModel, data: &LabeledDataset, norm: Norm) -> Result<IfaResult> {
        let opts = IfaOptions {
            damping: self.damping,
            require_stationary: false,
            ..IfaOptions::default()
        };
        compute_ifa(model, &self.center, data, norm, &opts)
    }
}

impl Objective for QuadraticSurrogate {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let s = theta - &self.center;
        self.value0 + self.grad0.dot(&s) + 0.5 * s.dot(&(&self.hessian * &s))
    }

    fn value_and_gradient(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.value(theta), self.gradient(theta))
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian(&self, _theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.hessian.clone())
    }
}

/// Whether every sample's attack direction is the same at `theta_a` and
/// `theta_b`: identical sign patterns for `l_inf`, a positive inner product
/// otherwise. A sample whose input gradient vanishes at either point counts
/// as inconsistent. The first-order expansion behind the IFA assumes these
/// directions vary continuously between the clean and robust minimizers.
pub fn directions_consistent(
    model: &dyn LossModel,
    theta_a: &DVector<f64>,
    theta_b: &DVector<f64>,
    data: &LabeledDataset,
    norm: Norm,
) -> Result<bool> {
    validate_batch(model, theta_a, data)?;
    validate_batch(model, theta_b, data)?;
    for i in 0..data.len() {
        let x = data.input(i);
        let y = data.target(i);
        let ga = model.grad_x(theta_a, &x, y);
        let gb = model.grad_x(theta_b, &x, y);
        if sup_norm(&ga) <= ZERO_INPUT_GRADIENT || sup_norm(&gb) <= ZERO_INPUT_GRADIENT {
            return Ok(false);
        }
        let same = match norm {
            Norm::Linf => ga.iter().zip(gb.iter()).all(|(a, b)| sign(*a) == sign(*b)),
            _ => holder_direction(&ga, norm)?.dot(&holder_direction(&gb, norm)?) > 0.0,
        };
        if !same {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Minimize the adversarial batch loss from `start` to gradient sup-norm
/// [`RETRAIN_TOL`].
pub fn retrain_adversarial(
    model: &dyn LossModel,
    data: &LabeledDataset,
    spec: &AttackSpec,
    start: &DVector<f64>,
) -> Result<OptimResult> {
    let obj = JointObjective::new(model, data, spec, 1.0)?;
    let cfg = OptimConfig {
        grad_tol: RETRAIN_TOL,
        newton_iters: 100,
        ..OptimConfig::default()
    };
    minimize(&obj, start, &cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfaValidationRow {
    pub epsilon: f64,
    /// `|theta_eps - theta_hat - eps * IFA|`.
    pub error: f64,
    pub retrain_grad_norm: f64,
    pub retrain_converged: bool,
}

/// Compare `eps * IFA` with the actual shift of the retrained minimizer for
/// each attack size.
pub fn ifa_validation(
    model: &dyn LossModel,
    theta_hat: &DVector<f64>,
    data: &LabeledDataset,
    norm: Norm,
    ifa: &DVector<f64>,
    epsilons: &[f64],
) -> Result<Vec<IfaValidationRow>> {
    epsilons
        .iter()
        .map(|&eps| {
            let spec = AttackSpec::new(norm, eps)?;
            let r = retrain_adversarial(model, data, &spec, theta_hat)?;
            Ok(IfaValidationRow {
                epsilon: eps,
                error: (&r.theta - theta_hat - ifa * eps).norm(),
                retrain_grad_norm: r.grad_norm,
                retrain_converged: r.converged,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Location, Role};

    fn location_data(xs: &[f64]) -> LabeledDataset {
        LabeledDataset::new(
            DMatrix::from_column_slice(xs.len(), 1, xs),
            DVector::zeros(xs.len()),
            Role::Train,
        )
        .unwrap()
    }

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    #[test]
    fn location_phi_and_ifa() {
        let model = Location::new(1);
        let data = location_data(&[0.0, 0.0, 3.0]);
        let a = assemble_phi(&model, &scalar(1.0), &data, Norm::Linf, Some(1e-6)).unwrap();
        assert!((a.phi[0] - 1.0 / 3.0).abs() < 1e-15);
        let r = compute_ifa(&model, &scalar(1.0), &data, Norm::Linf, &IfaOptions::default()).unwrap();
        assert!((r.ifa[0] + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.damping_used, 0.0);
        assert!(r.solve_residual <= 1e-8);
    }

    #[test]
    fn symmetric_data_cancels() {
        let model = Location::new(1);
        let data = location_data(&[-1.0, 1.0]);
        let r = compute_ifa(&model, &scalar(0.0), &data, Norm::L2, &IfaOptions::default()).unwrap();
        assert_eq!(r.phi[0], 0.0);
        assert_eq!(r.ifa[0], 0.0);
    }

    #[test]
    fn all_degenerate_samples_flagged() {
        let model = Location::new(1);
        let data = location_data(&[2.0, 2.0, 2.0]);
        let a = assemble_phi(&model, &scalar(2.0), &data, Norm::Linf, Some(1e-6)).unwrap();
        assert_eq!(a.phi[0], 0.0);
        assert_eq!(a.degenerate_samples, vec![0, 1, 2]);
    }

    #[test]
    fn stationarity_is_checked() {
        let model = Location::new(1);
        let data = location_data(&[0.0, 0.0, 3.0]);
        match assemble_phi(&model, &scalar(0.5), &data, Norm::Linf, Some(1e-6)) {
            Err(Error::Stationarity { grad_norm, .. }) => assert!((grad_norm - 0.5).abs() < 1e-15),
            other => panic!("expected stationarity error, got {other:?}"),
        }
    }

    #[test]
    fn location_delta_hat() {
        let model = Location::new(1);
        let data = location_data(&[0.0, 0.0, 3.0]);
        let exact = delta_hat_exact(&model, &scalar(1.0), &scalar(0.9), &data).unwrap();
        assert!((exact - 0.005).abs() < 1e-14);
        let i = DMatrix::identity(1, 1);
        let q = delta_hat_quadratic(&scalar(1.0 / 3.0), &i, &i, 0.3).unwrap();
        assert!((q.delta_hat - 0.005).abs() < 1e-15);
        assert_eq!(delta_hat_exact(&model, &scalar(1.0), &scalar(1.0), &data).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_identity_and_zero() {
        let phi = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let i = DMatrix::identity(3, 3);
        let q = delta_hat_quadratic(&phi, &i, &i, 1.0).unwrap();
        assert!((q.quad_form_value - 5.25).abs() < 1e-14);
        assert!((q.lower_bound.unwrap() - 5.25).abs() < 1e-14);
        assert!((q.upper_bound.unwrap() - 5.25).abs() < 1e-14);
        let z = delta_hat_quadratic(&DVector::zeros(3), &i, &i, 1.0).unwrap();
        assert_eq!(z.quad_form_value, 0.0);
        assert_eq!(z.upper_bound, Some(0.0));
        let semi = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0]));
        assert!(delta_hat_quadratic(&phi, &i, &semi, 1.0).unwrap().lower_bound.is_none());
        assert!(matches!(
            delta_hat_quadratic(&phi, &semi, &i, 1.0),
            Err(Error::SingularHessian { .. })
        ));
    }

    #[test]
    fn location_retraining_matches_closed_form() {
        let model = Location::new(1);
        let data = location_data(&[0.0, 0.0, 3.0]);
        let spec = AttackSpec::new(Norm::Linf, 0.3).unwrap();
        let r = retrain_adversarial(&model, &data, &spec, &scalar(1.0)).unwrap();
        assert!(r.converged);
        assert!((r.theta[0] - 0.9).abs() < 1e-10);
    }

    #[test]
    fn surrogate_at_minimizer() {
        let model = Location::new(1);
        let data = location_data(&[0.0, 0.0, 3.0]);
        let s = QuadraticSurrogate::new(&model, &scalar(1.0), &data, 0.0).unwrap();
        assert_eq!(s.minimizer(), scalar(1.0));
        assert_eq!(s.hessian_matrix()[(0, 0)], 1.0);
        let s = QuadraticSurrogate::new(&model, &scalar(0.0), &data, 0.5).unwrap();
        assert_eq!(s.hessian_matrix()[(0, 0)], 1.5);
        assert!((s.value(&scalar(0.0)) - 1.5).abs() < 1e-15);
    }
}
