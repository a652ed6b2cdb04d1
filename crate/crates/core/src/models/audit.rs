//! Central finite differences as an independent check on analytic derivatives.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::LossModel;

/// Step used for coordinate value `v`: `max(1e-6, 1e-6 |v|)`.
pub fn fd_step(v: f64) -> f64 {
    (1e-6 * v.abs()).max(1e-6)
}

/// Central-difference gradient of a scalar function.
pub fn numerical_gradient<F>(f: F, at: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut probe = at.clone();
    DVector::from_fn(at.len(), |i, _| {
        let h = fd_step(at[i]);
        probe[i] = at[i] + h;
        let up = f(&probe);
        probe[i] = at[i] - h;
        let down = f(&probe);
        probe[i] = at[i];
        (up - down) / (2.0 * h)
    })
}

/// Central-difference Jacobian of a vector function; column `j` holds the
/// derivative with respect to coordinate `j` of `at`.
pub fn numerical_jacobian<F>(f: F, at: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut probe = at.clone();
    let mut cols = Vec::with_capacity(at.len());
    for j in 0..at.len() {
        let h = fd_step(at[j]);
        probe[j] = at[j] + h;
        let up = f(&probe);
        probe[j] = at[j] - h;
        let down = f(&probe);
        probe[j] = at[j];
        cols.push((up - down) / (2.0 * h));
    }
    DMatrix::from_columns(&cols)
}

/// Max relative error `max|a - n| / max(1, max|n|)`; non-finite analytic
/// values are reported as infinite error.
pub fn relative_error<'a, I>(analytic: I, numeric: I) -> f64
where
    I: IntoIterator<Item = &'a f64>,
{
    let mut diff = 0.0_f64;
    let mut scale = 1.0_f64;
    for (a, n) in analytic.into_iter().zip(numeric) {
        if !a.is_finite() || !n.is_finite() {
            return f64::INFINITY;
        }
        diff = diff.max((a - n).abs());
        scale = scale.max(n.abs());
    }
    diff / scale
}

/// Block-wise maximum relative error between analytic and numerical
/// derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditReport {
    pub grad_theta: f64,
    pub grad_x: f64,
    pub hessian_theta: f64,
    pub mixed: f64,
}

impl AuditReport {
    pub fn max(&self) -> f64 {
        self.grad_theta
            .max(self.grad_x)
            .max(self.hessian_theta)
            .max(self.mixed)
    }

    pub fn passes(&self, tol: f64) -> bool {
        // NaN compares false, so a NaN block fails as well
        [self.grad_theta, self.grad_x, self.hessian_theta, self.mixed]
            .iter()
            .all(|e| *e <= tol)
    }
}

pub fn finite_difference_audit(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
) -> AuditReport {
    let num_gt = numerical_gradient(|t| model.loss(t, x, y), theta);
    let num_gx = numerical_gradient(|z| model.loss(theta, z, y), x);
    let num_h = numerical_jacobian(|t| model.grad_theta(t, x, y), theta);
    let num_mixed = numerical_jacobian(|z| model.grad_theta(theta, z, y), x);

    let gt = model.grad_theta(theta, x, y);
    let gx = model.grad_x(theta, x, y);
    let h = model.hessian_theta(theta, x, y);
    let mixed = model.mixed(theta, x, y);

    AuditReport {
        grad_theta: relative_error(gt.iter(), num_gt.iter()),
        grad_x: relative_error(gx.iter(), num_gx.iter()),
        hessian_theta: relative_error(h.iter(), num_h.iter()),
        mixed: relative_error(mixed.iter(), num_mixed.iter()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearSquared, Location, Logistic, ShallowQuadNet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5))
    }

    #[test]
    fn linear_model_passes_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = LinearSquared::new(4);
        for _ in 0..10 {
            let r = finite_difference_audit(&m, &random_vec(&mut rng, 4), &random_vec(&mut rng, 4), 0.7);
            assert!(r.passes(1e-6), "{r:?}");
        }
    }

    #[test]
    fn quadnet_passes_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = ShallowQuadNet::new(3, vec![1.0, -0.5], 0.1).unwrap();
        for _ in 0..20 {
            let y = rng.random_range(-2.0..2.0);
            let r = finite_difference_audit(&net, &random_vec(&mut rng, 6), &random_vec(&mut rng, 3), y);
            assert!(r.passes(1e-5), "{r:?}");
        }
    }

    #[test]
    fn zero_point_gives_exact_zeros() {
        let net = ShallowQuadNet::new(2, vec![1.0], 0.1).unwrap();
        let z2 = DVector::zeros(2);
        let r = finite_difference_audit(&net, &z2, &z2, 0.0);
        assert_eq!(r.max(), 0.0);
        assert_eq!(net.grad_theta(&z2, &z2, 0.0), z2);
        assert_eq!(net.grad_x(&z2, &z2, 0.0), z2);
        let m = Location::new(2);
        assert_eq!(m.grad_theta(&z2, &z2, 0.0), z2);
        let lg = Logistic::new(2);
        assert!(finite_difference_audit(&lg, &DVector::zeros(3), &z2, 1.0).passes(1e-8));
    }

    #[test]
    fn nan_is_a_failure() {
        let e = relative_error([f64::NAN].iter(), [0.0].iter());
        assert!(e.is_infinite());
        let r = AuditReport {
            grad_theta: f64::NAN,
            grad_x: 0.0,
            hessian_theta: 0.0,
            mixed: 0.0,
        };
        assert!(!r.passes(1.0));
    }
}
