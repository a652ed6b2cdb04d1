//! Loss models and the derivative contract used throughout the crate.
//!
//! A [`LossModel`] evaluates the per-sample loss `l(theta, x, y)` together
//! with the four derivative blocks the influence computations need:
//! `grad_theta` (d), `grad_x` (m), `hessian_theta` (d x d) and the mixed
//! block `mixed` (d x m, rows indexed by `theta`, columns by `x`, so that
//! `mixed * delta` is a parameter-space vector).
//!
//! Batch-level ridge terms (`ridge_weight() / 2 * |theta|^2`) are excluded
//! from every per-sample quantity and added once by the batch reductions.

mod audit;
mod linear;
mod location;
mod logistic;
mod quadnet;

pub use audit::{
    fd_step, finite_difference_audit, numerical_gradient, numerical_jacobian, relative_error,
    AuditReport,
};
pub use linear::{linear_model_attack, LinearSquared};
pub use location::Location;
pub use logistic::Logistic;
pub use quadnet::ShallowQuadNet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::attack::Norm;
use crate::error::{check_finite, check_len, Error, Result};
use crate::linalg::row;

/// A named contiguous block of the flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, offset: usize, shape: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            offset,
            shape,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flattened model parameters with a layout describing their sub-blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Vec<ParamBlock>,
}

impl ParameterVector {
    /// Validates that all values are finite and that the layout partitions
    /// `[0, d)` exactly, in order.
    pub fn new(values: DVector<f64>, layout: Vec<ParamBlock>) -> Result<Self> {
        check_finite("parameter vector", values.iter())?;
        let mut next = 0;
        for block in &layout {
            if block.offset != next {
                return Err(Error::Argument(format!(
                    "layout block `{}` starts at {} but the previous block ends at {}",
                    block.name, block.offset, next
                )));
            }
            next += block.len();
        }
        check_len("parameter layout", values.len(), next)?;
        Ok(Self {
            values: values.iter().cloned().collect(),
            layout,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn layout(&self) -> &[ParamBlock] {
        &self.layout
    }

    /// Values of the named block, if present.
    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.values[b.offset..b.offset + b.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Eval,
}

/// Design matrix (rows are samples) and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    role: Role,
}

impl LabeledDataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, role: Role) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Argument(format!(
                "dataset must have at least one row and one column, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        check_len("target vector", x.nrows(), y.len())?;
        check_finite("design matrix", x.iter())?;
        check_finite("targets", y.iter())?;
        Ok(Self { x, y, role })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn input(&self, i: usize) -> DVector<f64> {
        row(&self.x, i)
    }

    pub fn target(&self, i: usize) -> f64 {
        self.y[i]
    }
}

/// Per-sample loss with analytic derivatives.
///
/// Implementations assume shapes were validated by the caller; the free
/// functions in this module ([`loss_value`], [`derivatives`], [`batch_loss`])
/// do that validation.
pub trait LossModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Dimension `d` of the parameter vector.
    fn param_dim(&self) -> usize;

    /// Dimension `m` of an input.
    fn input_dim(&self) -> usize;

    fn layout(&self) -> Vec<ParamBlock>;

    fn loss(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> f64;

    fn grad_theta(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64>;

    fn grad_x(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64>;

    fn hessian_theta(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DMatrix<f64>;

    /// Mixed second derivative, `d x m`.
    fn mixed(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DMatrix<f64>;

    /// Weight `mu` of the batch-level term `mu / 2 * |theta|^2`.
    fn ridge_weight(&self) -> f64 {
        0.0
    }

    /// Exact maximizer of the loss over the `epsilon` ball, when the model
    /// admits one in closed form for this norm.
    fn exact_attack(
        &self,
        _theta: &DVector<f64>,
        _x: &DVector<f64>,
        _y: f64,
        _epsilon: f64,
        _norm: Norm,
    ) -> Option<DVector<f64>> {
        None
    }

    /// Predicted class label for classifiers.
    fn predict_label(&self, _theta: &DVector<f64>, _x: &DVector<f64>) -> Option<f64> {
        None
    }

    fn parameters(&self, values: DVector<f64>) -> Result<ParameterVector> {
        ParameterVector::new(values, self.layout())
    }
}

/// Which derivative blocks to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Which {
    pub grad_theta: bool,
    pub grad_x: bool,
    pub hessian_theta: bool,
    pub mixed: bool,
}

impl Which {
    pub const ALL: Which = Which {
        grad_theta: true,
        grad_x: true,
        hessian_theta: true,
        mixed: true,
    };
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DerivativeBundle {
    pub grad_theta: Option<DVector<f64>>,
    pub grad_x: Option<DVector<f64>>,
    pub hessian_theta: Option<DMatrix<f64>>,
    pub mixed: Option<DMatrix<f64>>,
}

fn validate_point(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
) -> Result<()> {
    check_len("parameter vector", model.param_dim(), theta.len())?;
    check_len("input vector", model.input_dim(), x.len())?;
    check_finite("parameter vector", theta.iter())?;
    check_finite("input vector", x.iter())?;
    check_finite("target", std::iter::once(&y))
}

pub(crate) fn validate_batch(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
) -> Result<()> {
    check_len("parameter vector", model.param_dim(), theta.len())?;
    check_len("dataset input dimension", model.input_dim(), data.input_dim())?;
    check_finite("parameter vector", theta.iter())
}

/// Validated single-sample loss.
pub fn loss_value(model: &dyn LossModel, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> Result<f64> {
    validate_point(model, theta, x, y)?;
    Ok(model.loss(theta, x, y))
}

/// Validated derivative bundle for one sample.
pub fn derivatives(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
    which: Which,
) -> Result<DerivativeBundle> {
    validate_point(model, theta, x, y)?;
    Ok(DerivativeBundle {
        grad_theta: which.grad_theta.then(|| model.grad_theta(theta, x, y)),
        grad_x: which.grad_x.then(|| model.grad_x(theta, x, y)),
        hessian_theta: which.hessian_theta.then(|| model.hessian_theta(theta, x, y)),
        mixed: which.mixed.then(|| model.mixed(theta, x, y)),
    })
}

fn ridge_value(model: &dyn LossModel, theta: &DVector<f64>) -> f64 {
    0.5 * model.ridge_weight() * theta.norm_squared()
}

/// Mean per-sample loss plus the batch ridge term.
pub fn batch_loss(model: &dyn LossModel, theta: &DVector<f64>, data: &LabeledDataset) -> Result<f64> {
    validate_batch(model, theta, data)?;
    Ok(batch_loss_unchecked(model, theta, data))
}

pub(crate) fn batch_loss_unchecked(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
) -> f64 {
    let n = data.len();
    let sum: f64 = (0..n)
        .map(|i| model.loss(theta, &data.input(i), data.target(i)))
        .sum();
    sum / n as f64 + ridge_value(model, theta)
}

/// Gradient of [`batch_loss`] with respect to the parameters.
pub fn batch_gradient(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
) -> Result<DVector<f64>> {
    validate_batch(model, theta, data)?;
    Ok(batch_gradient_at(model, theta, data, None))
}

/// Batch Hessian of [`batch_loss`], including `mu I` from the ridge term.
pub fn batch_hessian(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
) -> Result<DMatrix<f64>> {
    validate_batch(model, theta, data)?;
    Ok(batch_hessian_at(model, theta, data, None))
}

/// Mean gradient at optionally perturbed inputs `x_i + delta_i`, plus ridge.
pub(crate) fn batch_gradient_at(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
    deltas: Option<&[DVector<f64>]>,
) -> DVector<f64> {
    let n = data.len();
    let mut g = DVector::zeros(model.param_dim());
    for i in 0..n {
        let mut x = data.input(i);
        if let Some(ds) = deltas {
            x += &ds[i];
        }
        g += model.grad_theta(theta, &x, data.target(i));
    }
    g /= n as f64;
    g + theta * model.ridge_weight()
}

pub(crate) fn batch_hessian_at(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
    deltas: Option<&[DVector<f64>]>,
) -> DMatrix<f64> {
    let n = data.len();
    let d = model.param_dim();
    let mut h = DMatrix::zeros(d, d);
    for i in 0..n {
        let mut x = data.input(i);
        if let Some(ds) = deltas {
            x += &ds[i];
        }
        h += model.hessian_theta(theta, &x, data.target(i));
    }
    h /= n as f64;
    for j in 0..d {
        h[(j, j)] += model.ridge_weight();
    }
    h
}
