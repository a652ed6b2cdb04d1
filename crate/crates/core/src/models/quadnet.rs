use nalgebra::{DMatrix, DVector};

use super::{LossModel, ParamBlock};
use crate::error::{Error, Result};

/// Shallow network with quadratic activation,
/// `f(x, W) = sum_j a_j (w_j^T x)^2`, trained with squared loss and the batch
/// term `mu / 2 * |W|_F^2`.
///
/// Parameters are the columns of `W` stacked: `theta = (w_1, ..., w_k)`.
#[derive(Debug, Clone)]
pub struct ShallowQuadNet {
    k: usize,
    m: usize,
    a: Vec<f64>,
    mu: f64,
}

impl ShallowQuadNet {
    pub fn new(m: usize, a: Vec<f64>, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Argument(format!("ridge weight must be positive, got {mu}")));
        }
        if a.is_empty() || m == 0 {
            return Err(Error::Argument("need at least one hidden unit and one input".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("output weights"));
        }
        Ok(Self { k: a.len(), m, a, mu })
    }

    pub fn hidden_units(&self) -> usize {
        self.k
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.a
    }

    fn unit(&self, theta: &DVector<f64>, j: usize) -> DVector<f64> {
        theta.rows(j * self.m, self.m).into_owned()
    }

    fn pre_activations(&self, theta: &DVector<f64>, x: &DVector<f64>) -> Vec<f64> {
        (0..self.k)
            .map(|j| theta.rows(j * self.m, self.m).dot(x))
            .collect()
    }

    /// Network output `f(x, W)`.
    pub fn output(&self, theta: &DVector<f64>, x: &DVector<f64>) -> f64 {
        self.pre_activations(theta, x)
            .iter()
            .zip(&self.a)
            .map(|(s, a)| a * s * s)
            .sum()
    }

    fn grad_f_theta(&self, s: &[f64], x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.k * self.m);
        for j in 0..self.k {
            g.rows_mut(j * self.m, self.m)
                .copy_from(&(x * (2.0 * self.a[j] * s[j])));
        }
        g
    }

    fn grad_f_x(&self, theta: &DVector<f64>, s: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.m);
        for j in 0..self.k {
            g += self.unit(theta, j) * (2.0 * self.a[j] * s[j]);
        }
        g
    }
}

impl LossModel for ShallowQuadNet {
    fn name(&self) -> &'static str {
        "quadnet"
    }

    fn param_dim(&self) -> usize {
        self.k * self.m
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn layout(&self) -> Vec<ParamBlock> {
        (0..self.k)
            .map(|j| ParamBlock::new(format!("w{}", j + 1), j * self.m, vec![self.m]))
            .collect()
    }

    fn loss(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> f64 {
        let r = y - self.output(theta, x);
        r * r
    }

    fn grad_theta(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64> {
        let s = self.pre_activations(theta, x);
        let r = y - self.output(theta, x);
        self.grad_f_theta(&s, x) * (-2.0 * r)
    }

    fn grad_x(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64> {
        let s = self.pre_activations(theta, x);
        let r = y - self.output(theta, x);
        self.grad_f_x(theta, &s) * (-2.0 * r)
    }

    fn hessian_theta(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DMatrix<f64> {
        let s = self.pre_activations(theta, x);
        let r = y - self.output(theta, x);
        let gf = self.grad_f_theta(&s, x);
        let mut h = &gf * gf.transpose() * 2.0;
        let xx = x * x.transpose();
        for j in 0..self.k {
            let off = j * self.m;
            let mut block = h.view_mut((off, off), (self.m, self.m));
            block -= &xx * (4.0 * r * self.a[j]);
        }
        h
    }

    fn mixed(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DMatrix<f64> {
        let s = self.pre_activations(theta, x);
        let r = y - self.output(theta, x);
        let gft = self.grad_f_theta(&s, x);
        let gfx = self.grad_f_x(theta, &s);
        let mut mixed = &gft * gfx.transpose() * 2.0;
        for j in 0..self.k {
            let w = self.unit(theta, j);
            // d/dx of (2 a_j s_j x) is 2 a_j (x w_j^T + s_j I)
            let mut block = x * w.transpose();
            for c in 0..self.m {
                block[(c, c)] += s[j];
            }
            let mut rows = mixed.rows_mut(j * self.m, self.m);
            rows -= block * (4.0 * r * self.a[j]);
        }
        mixed
    }

    fn ridge_weight(&self) -> f64 {
        self.mu
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{batch_loss, LabeledDataset, Role};

    #[test]
    fn output_and_loss_by_hand() {
        let net = ShallowQuadNet::new(2, vec![1.0], 0.2).unwrap();
        let theta = DVector::from_vec(vec![1.0, 0.0]);
        let x = DVector::from_vec(vec![2.0, 0.0]);
        assert_eq!(net.output(&theta, &x), 4.0);
        assert_eq!(net.loss(&theta, &x, 4.0), 0.0);

        // batch adds (mu/2) |W|_F^2 = 0.1 once
        let data = LabeledDataset::new(
            DMatrix::from_row_slice(1, 2, &[2.0, 0.0]),
            DVector::from_vec(vec![4.0]),
            Role::Train,
        )
        .unwrap();
        assert!((batch_loss(&net, &theta, &data).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(ShallowQuadNet::new(2, vec![1.0], 0.0).is_err());
        assert!(ShallowQuadNet::new(2, vec![], 1.0).is_err());
    }

    #[test]
    fn layout_names_columns() {
        let net = ShallowQuadNet::new(3, vec![1.0, 0.5], 0.1).unwrap();
        let names: Vec<_> = net.layout().into_iter().map(|b| b.name).collect();
        assert_eq!(names, ["w1", "w2"]);
        let p = net.parameters(DVector::from_fn(6, |i, _| i as f64)).unwrap();
        assert_eq!(p.block("w2"), Some(&[3.0, 4.0, 5.0][..]));
    }
}
