use nalgebra::{DMatrix, DVector};

use super::{LossModel, ParamBlock};
use crate::attack::Norm;

/// Location model `l(theta, x, y) = |theta - x|^2 / 2`; the target is unused.
///
/// The minimizer of the clean loss is the sample mean, which makes the
/// adversarial sensitivity available in closed form.
#[derive(Debug, Clone)]
pub struct Location {
    dim: usize,
}

impl Location {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LossModel for Location {
    fn name(&self) -> &'static str {
        "location"
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn layout(&self) -> Vec<ParamBlock> {
        vec![ParamBlock::new("center", 0, vec![self.dim])]
    }

    fn loss(&self, theta: &DVector<f64>, x: &DVector<f64>, _y: f64) -> f64 {
        0.5 * (theta - x).norm_squared()
    }

    fn grad_theta(&self, theta: &DVector<f64>, x: &DVector<f64>, _y: f64) -> DVector<f64> {
        theta - x
    }

    fn grad_x(&self, theta: &DVector<f64>, x: &DVector<f64>, _y: f64) -> DVector<f64> {
        x - theta
    }

    fn hessian_theta(&self, _theta: &DVector<f64>, _x: &DVector<f64>, _y: f64) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }

    fn mixed(&self, _theta: &DVector<f64>, _x: &DVector<f64>, _y: f64) -> DMatrix<f64> {
        -DMatrix::identity(self.dim, self.dim)
    }

    /// Exact for `p = 2` (push radially away from `theta`) and `p = inf`
    /// (coordinate-wise push); other norms fall back to iterative attacks.
    fn exact_attack(
        &self,
        theta: &DVector<f64>,
        x: &DVector<f64>,
        _y: f64,
        epsilon: f64,
        norm: Norm,
    ) -> Option<DVector<f64>> {
        let u = x - theta;
        match norm {
            Norm::Linf => Some(u.map(|v| if v >= 0.0 { epsilon } else { -epsilon })),
            Norm::L2 => {
                let n = u.norm();
                if n == 0.0 {
                    let mut e = DVector::zeros(self.dim);
                    e[0] = epsilon;
                    Some(e)
                } else {
                    Some(u * (epsilon / n))
                }
            }
            Norm::Lp(_) if self.dim == 1 => Some(u.map(|v| if v >= 0.0 { epsilon } else { -epsilon })),
            Norm::Lp(_) => None,
        }
    }
}
