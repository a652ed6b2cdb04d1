use nalgebra::{DMatrix, DVector};

use super::{LossModel, ParamBlock};
use crate::attack::{holder_direction, Norm};

/// Binary logistic regression with negative log-likelihood loss for
/// `y in {0, 1}`. Parameters are `(w, b)` with `d = m + 1`.
#[derive(Debug, Clone)]
pub struct Logistic {
    m: usize,
}

impl Logistic {
    pub fn new(m: usize) -> Self {
        Self { m }
    }

    fn logit(&self, theta: &DVector<f64>, x: &DVector<f64>) -> f64 {
        theta.rows(0, self.m).dot(x) + theta[self.m]
    }

    fn augmented(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone().insert_row(self.m, 1.0)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn nll(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

impl LossModel for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn param_dim(&self) -> usize {
        self.m + 1
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn layout(&self) -> Vec<ParamBlock> {
        vec![
            ParamBlock::new("weights", 0, vec![self.m]),
            ParamBlock::new("bias", self.m, vec![1]),
        ]
    }

    fn loss(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> f64 {
        nll(self.logit(theta, x), y)
    }

    fn grad_theta(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64> {
        let g = sigmoid(self.logit(theta, x)) - y;
        self.augmented(x) * g
    }

    fn grad_x(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64> {
        let g = sigmoid(self.logit(theta, x)) - y;
        theta.rows(0, self.m) * g
    }

    fn hessian_theta(&self, theta: &DVector<f64>, x: &DVector<f64>, _y: f64) -> DMatrix<f64> {
        let s = sigmoid(self.logit(theta, x));
        let xa = self.augmented(x);
        &xa * xa.transpose() * (s * (1.0 - s))
    }

    fn mixed(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DMatrix<f64> {
        let s = sigmoid(self.logit(theta, x));
        let xa = self.augmented(x);
        let mut m = &xa * theta.rows(0, self.m).transpose() * (s * (1.0 - s));
        for c in 0..self.m {
            m[(c, c)] += s - y;
        }
        m
    }

    /// The loss is convex in the logit and the logit is affine in `x`, so the
    /// maximum over the ball sits at one of the two extreme logits
    /// `z +- epsilon |w|_q`.
    fn exact_attack(
        &self,
        theta: &DVector<f64>,
        x: &DVector<f64>,
        y: f64,
        epsilon: f64,
        norm: Norm,
    ) -> Option<DVector<f64>> {
        let w = theta.rows(0, self.m).into_owned();
        let Ok(dir) = holder_direction(&w, norm) else {
            return Some(DVector::zeros(self.m));
        };
        let z = self.logit(theta, x);
        let shift = epsilon * dir.dot(&w);
        let sign = if nll(z + shift, y) >= nll(z - shift, y) {
            1.0
        } else {
            -1.0
        };
        Some(dir * (sign * epsilon))
    }

    fn predict_label(&self, theta: &DVector<f64>, x: &DVector<f64>) -> Option<f64> {
        Some(if self.logit(theta, x) >= 0.0 { 1.0 } else { 0.0 })
    }
}
