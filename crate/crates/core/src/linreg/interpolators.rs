use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{null_space, pseudo_inverse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergentInterpolator {
    /// Minimum-norm least-squares fit of the training data.
    pub theta_base: DVector<f64>,
    pub theta_b: DVector<f64>,
    /// Unit null-space direction of the training design.
    pub direction: DVector<f64>,
    pub scale: f64,
    /// `|Y_t - X_t theta_b|_inf`.
    pub train_residual: f64,
    /// `|Y_t - X_t theta_b|^2 - |Y_t - X_t theta_base|^2`.
    pub train_loss_change: f64,
    /// `|Y_e - X_e theta_b|^2`.
    pub eval_loss: f64,
}

const MARGIN: f64 = 0.01;

/// Move the minimum-norm fit along a training null-space direction until the
/// evaluation loss exceeds `bound`, leaving the training fit unchanged.
///
/// The direction maximizes `|X_e v|` over unit null vectors `v`, and the step
/// is `c = (|e0| + sqrt(B)) / |X_e v| * (1 + margin)` with `e0` the base
/// evaluation residual, so `|e0 - c X_e v| > sqrt(B)` by the triangle
/// inequality.
pub fn construct_divergent_interpolators(
    x_train: &DMatrix<f64>,
    y_train: &DVector<f64>,
    x_eval: &DMatrix<f64>,
    y_eval: &DVector<f64>,
    bound: f64,
) -> Result<DivergentInterpolator> {
    check_len("train targets", x_train.nrows(), y_train.len())?;
    check_len("eval targets", x_eval.nrows(), y_eval.len())?;
    check_len("eval columns", x_train.ncols(), x_eval.ncols())?;
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(Error::Argument(format!("the loss bound must be finite and >= 0, got {bound}")));
    }
    let pinv = pseudo_inverse(x_train);
    let base = &pinv * y_train;
    let basis = null_space(x_train);
    if basis.ncols() == 0 {
        return Err(Error::ConstructionImpossible(
            "the training design has a trivial null space".into(),
        ));
    }
    let projected = x_eval * &basis;
    let svd = SVD::new(projected.clone(), false, true);
    let (k, smax) = svd
        .singular_values
        .iter()
        .cloned()
        .enumerate()
        .fold((0, 0.0), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
    let tol = x_eval.norm() * f64::EPSILON * x_eval.ncols() as f64;
    if smax <= tol {
        return Err(Error::ConstructionImpossible(
            "every training null vector is also annihilated by the evaluation design".into(),
        ));
    }
    let u = svd.v_t.expect("right singular vectors were requested").row(k).transpose();
    let mut v = &basis * u;
    // one refinement step back onto the null space
    v -= &pinv * (x_train * &v);
    v /= v.norm();

    let e0 = y_eval - x_eval * &base;
    let xv = x_eval * &v;
    let scale = if bound == 0.0 {
        0.0
    } else {
        (e0.norm() + bound.sqrt()) / xv.norm() * (1.0 + MARGIN)
    };
    let theta_b = &base + &v * scale;
    let base_loss = (y_train - x_train * &base).norm_squared();
    let r = y_train - x_train * &theta_b;
    Ok(DivergentInterpolator {
        train_residual: r.amax(),
        train_loss_change: r.norm_squared() - base_loss,
        eval_loss: (y_eval - x_eval * &theta_b).norm_squared(),
        theta_base: base,
        theta_b,
        direction: v,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_full_rank_is_impossible() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            construct_divergent_interpolators(&x, &y, &x, &y, 10.0),
            Err(Error::ConstructionImpossible(_))
        ));
    }

    #[test]
    fn eval_blind_to_null_space_is_impossible() {
        let xt = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let xe = DMatrix::from_row_slice(1, 2, &[2.0, 0.0]);
        let y = DVector::from_vec(vec![1.0]);
        assert!(matches!(
            construct_divergent_interpolators(&xt, &y, &xe, &y, 10.0),
            Err(Error::ConstructionImpossible(_))
        ));
    }

    #[test]
    fn small_example_diverges() {
        let xt = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0]);
        let xe = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0, -1.0]);
        let t = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]);
        let r = construct_divergent_interpolators(&xt, &(&xt * &t), &xe, &(&xe * &t), 1e6).unwrap();
        assert!(r.train_residual <= 1e-10);
        assert!(r.eval_loss > 1e6);
        let zero = construct_divergent_interpolators(&xt, &(&xt * &t), &xe, &(&xe * &t), 0.0).unwrap();
        assert_eq!(zero.theta_b, zero.theta_base);
    }
}
