//! Seeded synthetic data, dataset splitting and CSV ingestion.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)` in a fixed
//! draw order, so a configuration determines its output bit for bit.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linreg::LinRegProblem;
use crate::models::{LabeledDataset, LossModel, Role, ShallowQuadNet};

/// Identity of the random source, recorded in every artifact.
pub const GENERATOR_ID: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64) + rand_distr 0.5 StandardNormal";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// Independent `+1` / `-1` entries with probability one half each.
    Bernoulli,
    /// Independent standard normal entries.
    Gaussian,
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bernoulli" => Ok(Design::Bernoulli),
            "gaussian" => Ok(Design::Gaussian),
            _ => Err(Error::Argument(format!("unknown design `{s}` (bernoulli | gaussian)"))),
        }
    }
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Design::Bernoulli => "bernoulli",
            Design::Gaussian => "gaussian",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub d: usize,
    /// Support size of `theta*`; `None` means dense (`s = d`).
    pub s: Option<usize>,
    pub design: Design,
    pub noise_std: f64,
    pub seed: u64,
    pub signal_scale: f64,
}

impl GeneratorConfig {
    pub fn new(n: usize, d: usize, design: Design, seed: u64) -> Self {
        Self {
            n,
            d,
            s: None,
            design,
            noise_std: 0.0,
            seed,
            signal_scale: 1.0,
        }
    }

    pub fn with_sparsity(mut self, s: usize) -> Self {
        self.s = Some(s);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Argument("n and d must be positive".into()));
        }
        if let Some(s) = self.s {
            if s > self.d {
                return Err(Error::Argument(format!("sparsity s = {s} exceeds d = {}", self.d)));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Argument(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !(self.signal_scale > 0.0 && self.signal_scale.is_finite()) {
            return Err(Error::Argument(format!("signal_scale must be > 0, got {}", self.signal_scale)));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Row-major draw of an `n x d` design.
pub fn design_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, design: Design) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] = match design {
                Design::Bernoulli => {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Design::Gaussian => normal(rng),
            };
        }
    }
    x
}

/// Draw order: design (row-major), support indices, support signs, noise.
pub fn generate_problem(cfg: &GeneratorConfig) -> Result<LinRegProblem> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = design_matrix(&mut rng, cfg.n, cfg.d, cfg.design);
    let s = cfg.s.unwrap_or(cfg.d);
    let mut support: Vec<usize> = sample(&mut rng, cfg.d, s).into_vec();
    support.sort_unstable();
    let mut theta = DVector::zeros(cfg.d);
    for &j in &support {
        theta[j] = if rng.random_bool(0.5) {
            cfg.signal_scale
        } else {
            -cfg.signal_scale
        };
    }
    let mut y = &x * &theta;
    if cfg.noise_std > 0.0 {
        for v in y.iter_mut() {
            *v += cfg.noise_std * normal(&mut rng);
        }
    }
    LinRegProblem::new(x, y)?.with_truth(theta)
}

pub fn problem_dataset(problem: &LinRegProblem, role: Role) -> Result<LabeledDataset> {
    LabeledDataset::new(problem.x.clone(), problem.y.clone(), role)
}

/// Teacher-student data for the quadratic network: standard normal inputs,
/// a standard normal teacher, and Gaussian label noise. Returns the dataset
/// and the teacher parameters.
pub fn quadnet_teacher(
    model: &ShallowQuadNet,
    n: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(LabeledDataset, DVector<f64>)> {
    if n == 0 {
        return Err(Error::Argument("n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teacher = DVector::from_fn(model.param_dim(), |_, _| normal(&mut rng));
    let mut x = DMatrix::zeros(n, model.input_dim());
    for i in 0..n {
        for j in 0..model.input_dim() {
            x[(i, j)] = normal(&mut rng);
        }
    }
    let mut y = DVector::zeros(n);
    for i in 0..n {
        y[i] = model.output(&teacher, &x.row(i).transpose()) + noise_std * normal(&mut rng);
    }
    Ok((LabeledDataset::new(x, y, Role::Train)?, teacher))
}

/// Binary labels from a logistic teacher `(w*, 0)` with standard normal
/// `w*` and inputs.
pub fn logistic_teacher(n: usize, m: usize, seed: u64) -> Result<(LabeledDataset, DVector<f64>)> {
    if n == 0 || m == 0 {
        return Err(Error::Argument("n and m must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DVector::from_fn(m, |_, _| normal(&mut rng));
    let mut x = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            x[(i, j)] = normal(&mut rng);
        }
    }
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let z = x.row(i).transpose().dot(&w);
        let p = 1.0 / (1.0 + (-z).exp());
        y[i] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
    }
    let mut theta = DVector::zeros(m + 1);
    theta.rows_mut(0, m).copy_from(&w);
    Ok((LabeledDataset::new(x, y, Role::Train)?, theta))
}

/// Standard normal inputs with zero targets, for the location model.
pub fn gaussian_points(n: usize, m: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 || m == 0 {
        return Err(Error::Argument("n and m must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = design_matrix(&mut rng, n, m, Design::Gaussian);
    LabeledDataset::new(x, DVector::zeros(n), Role::Train)
}

/// Seeded permutation split into `(train, eval)`; each part keeps the
/// original row order.
pub fn split(data: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = data.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Argument(format!(
            "fraction {train_fraction} of {n} rows leaves an empty part"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = perm[..n_train].to_vec();
    let mut eval_idx = perm[n_train..].to_vec();
    train_idx.sort_unstable();
    eval_idx.sort_unstable();
    let take = |idx: &[usize], role| {
        LabeledDataset::new(
            data.x().select_rows(idx),
            DVector::from_iterator(idx.len(), idx.iter().map(|&i| data.target(i))),
            role,
        )
    };
    Ok((take(&train_idx, Role::Train)?, take(&eval_idx, Role::Eval)?))
}

/// Parse a headerless numeric CSV whose last column is the target.
///
/// Header rows are not supported and fail on line 1.
pub fn parse_csv(text: &str) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if let Some(w) = width {
            if record.len() != w {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} columns, found {}", record.len()),
                });
            }
        } else {
            if record.len() < 2 {
                return Err(Error::Parse {
                    line,
                    message: "need at least one feature column and a target column".into(),
                });
            }
            width = Some(record.len());
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("column {}: `{cell}` is not a finite number", c + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let Some(width) = width else {
        return Err(Error::Parse {
            line: 1,
            message: "empty file".into(),
        });
    };
    let n = rows.len();
    let m = width - 1;
    let x = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
    let y = DVector::from_fn(n, |i, _| rows[i][m]);
    LabeledDataset::new(x, y, Role::Train)
}

pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    parse_csv(&std::fs::read_to_string(path)?)
}

/// Rows `x_1, ..., x_m, y` with shortest round-trip float formatting.
/// Shortest round-trip text for a real, switching to exponent form for very
/// small or large magnitudes.
pub fn format_real(v: f64) -> String {
    format!("{v:?}")
}

pub fn dataset_csv(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for i in 0..x.nrows() {
        let mut row: Vec<String> = x.row(i).iter().map(|&v| format_real(v)).collect();
        row.push(format_real(y[i]));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_entries_are_signs() {
        let p = generate_problem(&GeneratorConfig::new(4, 6, Design::Bernoulli, 3)).unwrap();
        assert!(p.x.iter().all(|&v| v == 1.0 || v == -1.0));
        assert!(p.realizable);
        assert_eq!((&p.y - &p.x * p.theta_star.as_ref().unwrap()).amax(), 0.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig::new(40, 80, Design::Gaussian, 11).with_sparsity(5);
        let a = generate_problem(&cfg).unwrap();
        let b = generate_problem(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.support.as_ref().unwrap().len(), 5);
        let other = generate_problem(&GeneratorConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.x, other.x);
    }

    #[test]
    fn noise_breaks_realizability() {
        let cfg = GeneratorConfig {
            noise_std: 0.1,
            ..GeneratorConfig::new(10, 5, Design::Gaussian, 1)
        };
        assert!(!generate_problem(&cfg).unwrap().realizable);
    }

    #[test]
    fn sparsity_above_dimension_is_rejected() {
        let cfg = GeneratorConfig::new(4, 3, Design::Gaussian, 0).with_sparsity(4);
        assert!(matches!(generate_problem(&cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn bernoulli_column_means_vanish() {
        let p = generate_problem(&GeneratorConfig::new(10_000, 5, Design::Bernoulli, 8)).unwrap();
        for j in 0..5 {
            assert!(p.x.column(j).mean().abs() < 0.05);
        }
    }

    #[test]
    fn split_halves() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let d = LabeledDataset::new(x, DVector::from_fn(10, |i, _| i as f64), Role::Train).unwrap();
        let (a, b) = split(&d, 0.5, 3).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let mut all: Vec<f64> = a.y().iter().chain(b.y().iter()).cloned().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(split(&d, 0.5, 3).unwrap(), (a, b));
        assert!(split(&d, 0.01, 3).is_err());
        assert!(split(&d, 1.0, 3).is_err());
    }

    #[test]
    fn csv_parsing() {
        let d = parse_csv("1,2,3\n4,5,6\n").unwrap();
        assert_eq!((d.len(), d.input_dim()), (2, 2));
        assert_eq!(d.target(1), 6.0);
        assert!(matches!(parse_csv(""), Err(Error::Parse { .. })));
        match parse_csv("a,b,y\n1,2,3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected a parse error, got {other:?}"),
        }
        match parse_csv("1,2,3\n4,5\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = generate_problem(&GeneratorConfig::new(3, 2, Design::Gaussian, 5)).unwrap();
        let d = parse_csv(&dataset_csv(&p.x, &p.y).unwrap()).unwrap();
        assert_eq!(d.x(), &p.x);
        assert_eq!(d.y(), &p.y);
    }
}
