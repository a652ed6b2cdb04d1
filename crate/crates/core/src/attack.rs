//! Inner maximization over an `epsilon` ball in `l_p` norm.
//!
//! The first-order attack direction is the Hölder dual of the input gradient:
//! for `1/p + 1/q = 1`, `phi_k = sgn(g_k) |g_k|^(q-1) / |g|_q^(q-1)` satisfies
//! `|phi|_p = 1` and `phi^T g = |g|_q`. Exact projections are provided for
//! `p in {2, inf}`; other orders are handled by radial retraction inside PGD.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::sign;
use crate::models::{validate_batch, LabeledDataset, LossModel};

pub use crate::models::linear_model_attack;

/// Largest input dimension the corner oracle will enumerate.
pub const MAX_CORNER_DIM: usize = 12;

/// Absolute slack allowed on the ball constraint.
pub const BALL_SLACK: f64 = 1e-9;

/// Gradients with sup-norm at or below this are treated as zero.
pub const ZERO_GRADIENT: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Norm {
    L2,
    Linf,
    /// General `p` in `(1, inf)`, excluding 2.
    Lp(f64),
}

impl Norm {
    pub fn from_p(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(Norm::Linf)
        } else if p == 2.0 {
            Ok(Norm::L2)
        } else if p > 1.0 && p.is_finite() {
            Ok(Norm::Lp(p))
        } else {
            Err(Error::Argument(format!("norm order must lie in (1, inf], got {p}")))
        }
    }

    pub fn p(&self) -> f64 {
        match *self {
            Norm::L2 => 2.0,
            Norm::Linf => f64::INFINITY,
            Norm::Lp(p) => p,
        }
    }

    /// Hölder conjugate `q` with `1/p + 1/q = 1`.
    pub fn dual_exponent(&self) -> f64 {
        match *self {
            Norm::L2 => 2.0,
            Norm::Linf => 1.0,
            Norm::Lp(p) => p / (p - 1.0),
        }
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        lp_norm(v, self.p())
    }

    pub fn dual_norm(&self, v: &DVector<f64>) -> f64 {
        lp_norm(v, self.dual_exponent())
    }
}

/// `l_p` norm for `p >= 1`, including `p = inf`.
pub fn lp_norm(v: &DVector<f64>, p: f64) -> f64 {
    if p == f64::INFINITY {
        return v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    }
    if p == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if p == 2.0 {
        return v.norm();
    }
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x.abs() / scale).powf(p)).sum::<f64>().powf(1.0 / p)
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Norm::L2 => write!(f, "2"),
            Norm::Linf => write!(f, "inf"),
            Norm::Lp(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "linf" => Ok(Norm::Linf),
            "l2" => Ok(Norm::L2),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::Argument(format!("unrecognized norm order `{s}`")))?;
                Norm::from_p(p)
            }
        }
    }
}

impl Serialize for Norm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Norm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Threat model and inner-solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub norm: Norm,
    pub epsilon: f64,
    pub pgd_steps: usize,
    /// `None` selects `2.5 * epsilon / pgd_steps`.
    pub pgd_step_size: Option<f64>,
    pub seed: u64,
}

impl AttackSpec {
    pub const DEFAULT_PGD_STEPS: usize = 20;

    pub fn new(norm: Norm, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Argument(format!("attack size must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self {
            norm,
            epsilon,
            pgd_steps: Self::DEFAULT_PGD_STEPS,
            pgd_step_size: None,
            seed: 0,
        })
    }

    pub fn with_pgd(mut self, steps: usize, step_size: Option<f64>) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Argument("PGD needs at least one step".into()));
        }
        if let Some(s) = step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Argument(format!("PGD step size must be positive, got {s}")));
            }
        }
        self.pgd_steps = steps;
        self.pgd_step_size = step_size;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn step_size(&self) -> f64 {
        self.pgd_step_size
            .unwrap_or(2.5 * self.epsilon / self.pgd_steps as f64)
    }
}

/// An input perturbation `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    delta: DVector<f64>,
}

impl Perturbation {
    pub fn new(delta: DVector<f64>) -> Self {
        Self { delta }
    }

    pub fn zero(m: usize) -> Self {
        Self {
            delta: DVector::zeros(m),
        }
    }

    pub fn delta(&self) -> &DVector<f64> {
        &self.delta
    }

    pub fn into_delta(self) -> DVector<f64> {
        self.delta
    }

    pub fn within(&self, norm: Norm, epsilon: f64) -> bool {
        norm.norm(&self.delta) <= epsilon + BALL_SLACK
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub perturbation: Perturbation,
    pub loss: f64,
    /// The input gradient vanished at the clean point.
    pub degenerate: bool,
}

/// Unit-`l_p` direction maximizing `phi^T g` (Hölder equality case).
///
/// Coordinates where `g` vanishes get zero; for `p = inf` that is a chosen
/// tie-break since any value in `[-1, 1]` is optimal there.
pub fn holder_direction(g: &DVector<f64>, norm: Norm) -> Result<DVector<f64>> {
    let scale = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale <= ZERO_GRADIENT || !scale.is_finite() {
        return Err(Error::DegenerateGradient);
    }
    Ok(match norm {
        Norm::Linf => g.map(sign),
        Norm::L2 => g / g.norm(),
        Norm::Lp(p) => {
            let q = norm.dual_exponent();
            let u = g.map(|v| v.abs() / scale);
            let denom = u.iter().map(|v| v.powf(q)).sum::<f64>().powf(1.0 / p);
            DVector::from_fn(g.len(), |i, _| sign(g[i]) * u[i].powf(q - 1.0) / denom)
        }
    })
}

/// Euclidean projection onto the `epsilon` ball for `p in {2, inf}`.
pub fn project_lp_ball(v: &DVector<f64>, epsilon: f64, norm: Norm) -> Result<DVector<f64>> {
    if !(epsilon >= 0.0) {
        return Err(Error::Argument(format!("ball radius must be >= 0, got {epsilon}")));
    }
    match norm {
        Norm::Linf => Ok(v.map(|x| x.clamp(-epsilon, epsilon))),
        Norm::L2 => {
            let n = v.norm();
            Ok(if n <= epsilon { v.clone() } else { v * (epsilon / n) })
        }
        Norm::Lp(p) => Err(Error::Argument(format!(
            "exact projection is only available for p = 2 and p = inf, not p = {p}"
        ))),
    }
}

/// Projection for `p in {2, inf}`, radial rescaling onto the ball otherwise.
fn retract(v: &DVector<f64>, epsilon: f64, norm: Norm) -> DVector<f64> {
    match norm {
        Norm::Lp(_) => {
            let n = norm.norm(v);
            if n <= epsilon {
                v.clone()
            } else {
                v * (epsilon / n)
            }
        }
        _ => project_lp_ball(v, epsilon, norm).expect("radius validated by caller"),
    }
}

/// Projected ascent from `delta = 0` with Hölder-direction steps.
///
/// Returns the best iterate by loss; the one-step attack
/// `epsilon * phi(grad_x l(x))` is always among the candidates.
pub fn pgd_attack(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
    spec: &AttackSpec,
) -> Result<AttackOutcome> {
    crate::models::loss_value(model, theta, x, y)?;
    Ok(pgd_unchecked(model, theta, x, y, spec))
}

fn pgd_unchecked(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
    spec: &AttackSpec,
) -> AttackOutcome {
    let m = x.len();
    let clean = model.loss(theta, x, y);
    let mut best = AttackOutcome {
        perturbation: Perturbation::zero(m),
        loss: clean,
        degenerate: false,
    };
    if spec.epsilon == 0.0 {
        return best;
    }
    let Ok(dir0) = holder_direction(&model.grad_x(theta, x, y), spec.norm) else {
        best.degenerate = true;
        return best;
    };
    let consider = |delta: DVector<f64>, best: &mut AttackOutcome| {
        let loss = model.loss(theta, &(x + &delta), y);
        if loss > best.loss {
            best.loss = loss;
            best.perturbation = Perturbation::new(delta);
        }
    };
    consider(retract(&(&dir0 * spec.epsilon), spec.epsilon, spec.norm), &mut best);

    let step = spec.step_size();
    let mut delta = DVector::zeros(m);
    let mut dir = dir0;
    for _ in 0..spec.pgd_steps {
        delta = retract(&(&delta + &dir * step), spec.epsilon, spec.norm);
        consider(delta.clone(), &mut best);
        match holder_direction(&model.grad_x(theta, &(x + &delta), y), spec.norm) {
            Ok(d) => dir = d,
            Err(_) => break,
        }
    }
    best
}

/// Exhaustive search over the `2^m` corners of the `l_inf` ball.
pub fn corner_oracle_attack(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
    epsilon: f64,
    norm: Norm,
) -> Result<AttackOutcome> {
    if norm != Norm::Linf {
        return Err(Error::Argument("the corner oracle only covers the l_inf ball".into()));
    }
    let m = x.len();
    if m > MAX_CORNER_DIM {
        return Err(Error::Refused(format!(
            "input dimension {m} exceeds {MAX_CORNER_DIM} (2^m corners)"
        )));
    }
    let clean = crate::models::loss_value(model, theta, x, y)?;
    let mut best = AttackOutcome {
        perturbation: Perturbation::zero(m),
        loss: clean,
        degenerate: false,
    };
    if epsilon == 0.0 {
        return Ok(best);
    }
    best.loss = f64::NEG_INFINITY;
    for mask in 0u32..(1u32 << m) {
        let delta = DVector::from_fn(m, |i, _| if mask >> i & 1 == 1 { epsilon } else { -epsilon });
        let loss = model.loss(theta, &(x + &delta), y);
        if loss > best.loss {
            best.loss = loss;
            best.perturbation = Perturbation::new(delta);
        }
    }
    Ok(best)
}

/// Best available inner solver: the model's closed form when it has one,
/// PGD otherwise.
pub fn inner_max(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
    spec: &AttackSpec,
) -> AttackOutcome {
    if spec.epsilon == 0.0 {
        return AttackOutcome {
            perturbation: Perturbation::zero(x.len()),
            loss: model.loss(theta, x, y),
            degenerate: false,
        };
    }
    match model.exact_attack(theta, x, y, spec.epsilon, spec.norm) {
        Some(delta) => {
            let loss = model.loss(theta, &(x + &delta), y);
            AttackOutcome {
                perturbation: Perturbation::new(delta),
                loss,
                degenerate: false,
            }
        }
        None => {
            let pgd = pgd_unchecked(model, theta, x, y, spec);
            refine_fixed_point(model, theta, x, y, spec, pgd)
        }
    }
}

const FIXED_POINT_ITERS: usize = 50;

/// Polish an attack with the boundary fixed-point map
/// `delta <- epsilon * phi(grad_x l(x + delta))`, keeping the best loss seen.
///
/// At a boundary maximizer the input gradient is aligned with the ball's
/// normal, which is exactly a fixed point of this map; PGD with a fixed step
/// count only gets close.
pub fn refine_fixed_point(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
    spec: &AttackSpec,
    mut best: AttackOutcome,
) -> AttackOutcome {
    if spec.epsilon == 0.0 || best.degenerate {
        return best;
    }
    let mut delta = best.perturbation.delta().clone();
    for _ in 0..FIXED_POINT_ITERS {
        let Ok(dir) = holder_direction(&model.grad_x(theta, &(x + &delta), y), spec.norm) else {
            break;
        };
        let next = dir * spec.epsilon;
        let step = (&next - &delta).amax();
        delta = next;
        let loss = model.loss(theta, &(x + &delta), y);
        if loss > best.loss {
            best.loss = loss;
            best.perturbation = Perturbation::new(delta.clone());
        }
        if step <= 1e-15 * spec.epsilon {
            break;
        }
    }
    best
}

/// Per-sample inner maximizers for a whole dataset, in sample order.
pub fn batch_inner_max(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
    spec: &AttackSpec,
) -> Result<Vec<AttackOutcome>> {
    validate_batch(model, theta, data)?;
    Ok((0..data.len())
        .map(|i| inner_max(model, theta, &data.input(i), data.target(i), spec))
        .collect())
}

/// Mean worst-case loss over the dataset plus the batch ridge term.
pub fn adversarial_batch_loss(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    data: &LabeledDataset,
    spec: &AttackSpec,
) -> Result<f64> {
    let outcomes = batch_inner_max(model, theta, data, spec)?;
    Ok(mean_adversarial_loss(model, theta, &outcomes))
}

pub(crate) fn mean_adversarial_loss(
    model: &dyn LossModel,
    theta: &DVector<f64>,
    outcomes: &[AttackOutcome],
) -> f64 {
    let sum: f64 = outcomes.iter().map(|o| o.loss).sum();
    sum / outcomes.len() as f64 + 0.5 * model.ridge_weight() * theta.norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearSquared, ShallowQuadNet};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn holder_examples() {
        let g = v(&[3.0, -4.0]);
        let d = holder_direction(&g, Norm::L2).unwrap();
        assert!((d - v(&[0.6, -0.8])).amax() < 1e-15);
        assert_eq!(holder_direction(&g, Norm::Linf).unwrap(), v(&[1.0, -1.0]));

        let g = v(&[1.0, 1.0, 0.0]);
        let p3 = Norm::from_p(3.0).unwrap();
        let d = holder_direction(&g, p3).unwrap();
        assert!((p3.norm(&d) - 1.0).abs() < 1e-14);
        assert!((d.dot(&g) - p3.dual_norm(&g)).abs() < 1e-14);
        assert_eq!(d[2], 0.0);
        assert!(matches!(
            holder_direction(&v(&[0.0, 0.0]), Norm::L2),
            Err(Error::DegenerateGradient)
        ));
    }

    #[test]
    fn projection_examples() {
        let inside = v(&[0.1, -0.2]);
        assert_eq!(project_lp_ball(&inside, 1.0, Norm::L2).unwrap(), inside);
        assert_eq!(project_lp_ball(&inside, 1.0, Norm::Linf).unwrap(), inside);
        let p = project_lp_ball(&v(&[3.0, 4.0]), 1.0, Norm::L2).unwrap();
        assert!((p - v(&[0.6, 0.8])).amax() < 1e-15);
        assert_eq!(project_lp_ball(&v(&[2.0, -0.5]), 1.0, Norm::Linf).unwrap(), v(&[1.0, -0.5]));
        assert!(project_lp_ball(&inside, 1.0, Norm::from_p(3.0).unwrap()).is_err());
    }

    #[test]
    fn norm_parsing_round_trips() {
        for s in ["2", "inf", "3"] {
            let n: Norm = s.parse().unwrap();
            assert_eq!(n.to_string(), s);
        }
        assert!("1".parse::<Norm>().is_err());
        assert!("x".parse::<Norm>().is_err());
    }

    #[test]
    fn pgd_on_linear_reaches_closed_form() {
        let m = LinearSquared::new(3);
        let theta = v(&[0.5, -1.0, 2.0]);
        let x = v(&[0.2, 0.4, -0.1]);
        let spec = AttackSpec::new(Norm::Linf, 0.1).unwrap();
        let pgd = pgd_attack(&m, &theta, &x, 1.0, &spec).unwrap();
        let exact = linear_model_attack(&theta, &x, 1.0, 0.1, Norm::Linf);
        let exact_loss = m.loss(&theta, &(&x + exact.delta()), 1.0);
        assert!((pgd.loss - exact_loss).abs() < 1e-10);
        let corner = corner_oracle_attack(&m, &theta, &x, 1.0, 0.1, Norm::Linf).unwrap();
        assert!((corner.loss - exact_loss).abs() < 1e-10);
    }

    #[test]
    fn zero_radius_and_degenerate_start() {
        let m = LinearSquared::new(2);
        let theta = v(&[1.0, 1.0]);
        let x = v(&[1.0, 1.0]);
        let spec = AttackSpec::new(Norm::Linf, 0.0).unwrap();
        assert_eq!(pgd_attack(&m, &theta, &x, 0.0, &spec).unwrap().perturbation.delta(), &v(&[0.0, 0.0]));
        assert_eq!(corner_oracle_attack(&m, &theta, &x, 0.0, 0.0, Norm::Linf).unwrap().loss, 4.0);
        // exact fit: zero input gradient at the start
        let spec = AttackSpec::new(Norm::Linf, 0.1).unwrap();
        let out = pgd_attack(&m, &theta, &x, 2.0, &spec).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.perturbation.delta(), &v(&[0.0, 0.0]));
    }

    #[test]
    fn corner_oracle_limits() {
        let m = LinearSquared::new(13);
        let z = DVector::zeros(13);
        assert!(matches!(
            corner_oracle_attack(&m, &z, &z, 0.0, 0.1, Norm::Linf),
            Err(Error::Refused(_))
        ));
        // m = 1: larger of the two endpoint losses
        let m1 = LinearSquared::new(1);
        let out = corner_oracle_attack(&m1, &v(&[2.0]), &v(&[0.5]), 0.0, 0.25, Norm::Linf).unwrap();
        let ends = [m1.loss(&v(&[2.0]), &v(&[0.25]), 0.0), m1.loss(&v(&[2.0]), &v(&[0.75]), 0.0)];
        assert_eq!(out.loss, ends[0].max(ends[1]));
    }

    #[test]
    fn pgd_beats_random_points_on_quadnet() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let net = ShallowQuadNet::new(3, vec![1.0, 0.5], 0.1).unwrap();
        let spec = AttackSpec::new(Norm::Linf, 0.05).unwrap();
        for _ in 0..5 {
            let theta = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let y = rng.random_range(-1.0..1.0);
            let out = pgd_attack(&net, &theta, &x, y, &spec).unwrap();
            assert!(out.perturbation.within(Norm::Linf, 0.05));
            for _ in 0..100 {
                let d = DVector::from_fn(3, |_, _| rng.random_range(-0.05..0.05));
                assert!(out.loss >= net.loss(&theta, &(&x + d), y));
            }
        }
    }

    fn nonzero_vec() -> impl Strategy<Value = DVector<f64>> {
        prop::collection::vec(-10.0..10.0f64, 1..8)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-6))
            .prop_map(DVector::from_vec)
    }

    fn any_norm() -> impl Strategy<Value = Norm> {
        prop_oneof![
            Just(Norm::L2),
            Just(Norm::Linf),
            (1.1..8.0f64).prop_map(|p| Norm::from_p(p).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn holder_equality(g in nonzero_vec(), norm in any_norm()) {
            let d = holder_direction(&g, norm).unwrap();
            let scale = g.amax();
            prop_assert!((norm.norm(&d) - 1.0).abs() < 1e-12);
            prop_assert!((d.dot(&g) - norm.dual_norm(&g)).abs() < 1e-12 * scale.max(1.0));
        }

        #[test]
        fn holder_scale_invariant(g in nonzero_vec(), norm in any_norm(), c in 1e-3..1e3f64) {
            let a = holder_direction(&g, norm).unwrap();
            let b = holder_direction(&(&g * c), norm).unwrap();
            prop_assert!((a - b).amax() < 1e-12);
        }

        #[test]
        fn pgd_stays_in_ball(
            theta in prop::collection::vec(-2.0..2.0f64, 6),
            x in prop::collection::vec(-2.0..2.0f64, 3),
            y in -2.0..2.0f64,
            eps in 0.0..0.5f64,
            norm in any_norm(),
        ) {
            let net = ShallowQuadNet::new(3, vec![1.0, -0.7], 0.1).unwrap();
            let spec = AttackSpec::new(norm, eps).unwrap();
            let out = pgd_attack(&net, &DVector::from_vec(theta), &DVector::from_vec(x), y, &spec).unwrap();
            prop_assert!(out.perturbation.within(norm, eps));
        }
    }
}
