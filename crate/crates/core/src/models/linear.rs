use nalgebra::{DMatrix, DVector};

use super::{LossModel, ParamBlock};
use crate::attack::{holder_direction, Norm, Perturbation};

/// `l(theta, x, y) = (y - x^T theta)^2`, with `d = m`.
#[derive(Debug, Clone)]
pub struct LinearSquared {
    dim: usize,
}

impl LinearSquared {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LossModel for LinearSquared {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn layout(&self) -> Vec<ParamBlock> {
        vec![ParamBlock::new("theta", 0, vec![self.dim])]
    }

    fn loss(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> f64 {
        let r = y - x.dot(theta);
        r * r
    }

    fn grad_theta(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64> {
        x * (2.0 * (x.dot(theta) - y))
    }

    fn grad_x(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64> {
        theta * (2.0 * (x.dot(theta) - y))
    }

    fn hessian_theta(&self, _theta: &DVector<f64>, x: &DVector<f64>, _y: f64) -> DMatrix<f64> {
        x * x.transpose() * 2.0
    }

    fn mixed(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DMatrix<f64> {
        let r = x.dot(theta) - y;
        let mut m = x * theta.transpose() * 2.0;
        for j in 0..self.dim {
            m[(j, j)] += 2.0 * r;
        }
        m
    }

    fn exact_attack(
        &self,
        theta: &DVector<f64>,
        x: &DVector<f64>,
        y: f64,
        epsilon: f64,
        norm: Norm,
    ) -> Option<DVector<f64>> {
        Some(linear_model_attack(theta, x, y, epsilon, norm).into_delta())
    }
}

/// Exact inner maximizer for the squared loss of a linear predictor.
///
/// `delta = sgn(x^T theta - y) * epsilon * phi(theta)` where `phi` is the
/// Hölder direction of `theta`; for `p = inf` this is
/// `delta_j = sgn(theta_j) sgn(x^T theta - y) epsilon`. A zero residual takes
/// the positive sign (both signs are optimal) and zero coordinates of `theta`
/// get a zero perturbation. The attained loss is
/// `(|y - x^T theta| + epsilon * |theta|_q)^2`.
pub fn linear_model_attack(
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
    epsilon: f64,
    norm: Norm,
) -> Perturbation {
    let zero = Perturbation::zero(theta.len());
    if epsilon == 0.0 {
        return zero;
    }
    let Ok(dir) = holder_direction(theta, norm) else {
        return zero;
    };
    let s = if x.dot(theta) - y >= 0.0 { 1.0 } else { -1.0 };
    Perturbation::new(dir * (s * epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{finite_difference_audit, loss_value};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn loss_examples() {
        let m = LinearSquared::new(2);
        assert_eq!(loss_value(&m, &v(&[1.0, 1.0]), &v(&[1.0, 1.0]), 2.0).unwrap(), 0.0);
        assert_eq!(loss_value(&m, &v(&[0.0, 0.0]), &v(&[-4.0, 7.5]), 3.0).unwrap(), 9.0);
    }

    #[test]
    fn gradient_example() {
        let m = LinearSquared::new(2);
        let g = m.grad_theta(&v(&[1.0, 1.0]), &v(&[1.0, 2.0]), 0.0);
        assert_eq!(g, v(&[6.0, 12.0]));
    }

    #[test]
    fn mixed_block_at_exact_fit_matches_differences() {
        let m = LinearSquared::new(2);
        let theta = v(&[1.0, 1.0]);
        let x = v(&[1.0, 1.0]);
        let report = finite_difference_audit(&m, &theta, &x, 2.0);
        assert!(report.mixed < 1e-8, "{report:?}");
        // zero residual leaves only the outer-product part
        let mixed = m.mixed(&theta, &x, 2.0);
        assert_eq!(mixed, DMatrix::from_element(2, 2, 2.0));
    }

    #[test]
    fn attack_example_and_ties() {
        let theta = v(&[1.0, -1.0]);
        let d = linear_model_attack(&theta, &v(&[1.0, 0.0]), 0.0, 0.1, Norm::Linf);
        assert_eq!(d.delta(), &v(&[0.1, -0.1]));
        let m = LinearSquared::new(2);
        let l = m.loss(&theta, &(v(&[1.0, 0.0]) + d.delta()), 0.0);
        assert!((l - 1.44).abs() < 1e-14);

        let z = linear_model_attack(&theta, &v(&[1.0, 0.0]), 0.0, 0.0, Norm::Linf);
        assert_eq!(z.delta(), &v(&[0.0, 0.0]));

        // zero residual, theta = (1, 0): loss eps^2
        let theta = v(&[1.0, 0.0]);
        let x = v(&[2.0, 5.0]);
        let d = linear_model_attack(&theta, &x, 2.0, 0.3, Norm::Linf);
        assert_eq!(d.delta()[1], 0.0);
        assert!((m.loss(&theta, &(x + d.delta()), 2.0) - 0.09).abs() < 1e-15);
    }
}
