use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::l1_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReCertificate {
    /// Attained by a direction supported on `S`.
    ExactOnSupport,
    /// Attained by a sampled cone direction.
    Sampled,
}

/// Estimate of the restricted eigenvalue
/// `tau = min (1/n) |X D|^2 / |D|^2` over the cone
/// `|D_{S^c}|_1 <= zeta |D_S|_1`.
///
/// The minimum is over a subset of the cone, so `tau_hat` is an upper bound
/// on the true constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReEstimate {
    pub tau_hat: f64,
    /// `lambda_min((1/n) X_S^T X_S)`.
    pub support_eigenvalue: f64,
    pub sampled_min: f64,
    pub certificate: ReCertificate,
    pub num_samples: usize,
}

fn rayleigh(x: &DMatrix<f64>, delta: &DVector<f64>) -> f64 {
    (x * delta).norm_squared() / (x.nrows() as f64 * delta.norm_squared())
}

/// Random cone direction: Gaussian on `S`; off the support either dense
/// Gaussian or sparse, scaled to a uniform fraction of the cone budget (half
/// the draws sit on the cone boundary).
fn cone_sample(rng: &mut ChaCha8Rng, d: usize, support: &[usize], off: &[usize], zeta: f64) -> DVector<f64> {
    let mut delta = DVector::zeros(d);
    for &j in support {
        delta[j] = StandardNormal.sample(rng);
    }
    if !off.is_empty() {
        let budget = zeta * l1_norm(&delta);
        let mut tail = DVector::zeros(off.len());
        if rng.random_bool(0.5) {
            for t in tail.iter_mut() {
                *t = StandardNormal.sample(rng);
            }
        } else {
            let k = rng.random_range(1..=off.len().min(support.len().max(1) * 2));
            for i in sample(rng, off.len(), k) {
                tail[i] = StandardNormal.sample(rng);
            }
        }
        let frac = if rng.random_bool(0.5) { 1.0 } else { rng.random::<f64>() };
        let l1 = l1_norm(&tail);
        if l1 > 0.0 {
            tail *= frac * budget / l1;
        }
        for (i, &j) in off.iter().enumerate() {
            delta[j] = tail[i];
        }
    }
    delta
}

pub fn restricted_eigenvalue_estimate(
    x: &DMatrix<f64>,
    support: &[usize],
    zeta: f64,
    num_samples: usize,
    seed: u64,
) -> Result<ReEstimate> {
    let (n, d) = x.shape();
    if support.is_empty() {
        return Err(Error::Argument("the support set must be non-empty".into()));
    }
    if let Some(&j) = support.iter().find(|&&j| j >= d) {
        return Err(Error::Argument(format!("support index {j} out of range for d = {d}")));
    }
    if !(zeta >= 1.0) {
        return Err(Error::Argument(format!("zeta must be >= 1, got {zeta}")));
    }
    let xs = x.select_columns(support);
    let gram = xs.transpose() * &xs / n as f64;
    let support_eigenvalue = SymmetricEigen::new(gram).eigenvalues.min().max(0.0);

    let off: Vec<usize> = (0..d).filter(|j| !support.contains(j)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled_min = f64::INFINITY;
    for _ in 0..num_samples {
        let delta = cone_sample(&mut rng, d, support, &off, zeta);
        if delta.norm_squared() > 0.0 {
            sampled_min = sampled_min.min(rayleigh(x, &delta));
        }
    }
    let (tau_hat, certificate) = if sampled_min < support_eigenvalue {
        (sampled_min, ReCertificate::Sampled)
    } else {
        (support_eigenvalue, ReCertificate::ExactOnSupport)
    };
    Ok(ReEstimate {
        tau_hat,
        support_eigenvalue,
        sampled_min,
        certificate,
        num_samples,
    })
}
