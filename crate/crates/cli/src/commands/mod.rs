pub mod curve;
pub mod gen;
pub mod ifa;
pub mod linreg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use advtrade::data::{self, Design};
use advtrade::models::{LinearSquared, Location, Logistic, ShallowQuadNet};
use advtrade::{LabeledDataset, LossModel, Role};
use clap::Args;
use serde::Serialize;

use crate::config::{read_config, Resolver};
use crate::output::{document, metadata, write_atomic};
use crate::{CliError, Common};

/// Resolved settings plus the output directory of one invocation.
pub struct Run {
    pub resolver: Resolver,
    pub out: PathBuf,
    pub seed: u64,
}

impl Run {
    pub fn start(common: &Common) -> Result<Self, CliError> {
        let mut resolver = Resolver::new(read_config(common.config.as_deref())?);
        let out: String = resolver.or(
            "out",
            common.out.as_ref().map(|p| p.display().to_string()),
            ".".to_string(),
        )?;
        let seed = resolver.or("seed", common.seed, 0u64)?;
        Ok(Self {
            resolver,
            out: PathBuf::from(out),
            seed,
        })
    }

    /// Close the resolver (rejecting unknown keys) and return the resolved map.
    pub fn finish(self) -> Result<(BTreeMap<String, String>, PathBuf), CliError> {
        Ok((self.resolver.finish()?, self.out))
    }
}

pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    command: &str,
    config: &BTreeMap<String, String>,
    body: &T,
) -> Result<PathBuf, CliError> {
    let text = document(metadata(command, config), body)?;
    Ok(write_atomic(dir, name, text.as_bytes())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Linear,
    Quadnet,
    Logistic,
    Location,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Quadnet => "quadnet",
            ModelKind::Logistic => "logistic",
            ModelKind::Location => "location",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

/// Model and dataset flags shared by `curve` and `ifa`.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Headerless CSV, last column the target; omit to generate data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Generated sample count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Input dimension of generated data.
    #[arg(long)]
    pub m: Option<usize>,
    /// Hidden units of the quadratic network (output weights `1/j`).
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Ridge weight of the quadratic network.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Label noise of generated data.
    #[arg(long)]
    pub noise: Option<f64>,
}

pub struct Setup {
    pub model: Box<dyn LossModel>,
    pub data: LabeledDataset,
}

fn build_model(kind: ModelKind, m: usize, hidden: usize, mu: f64) -> Result<Box<dyn LossModel>, CliError> {
    Ok(match kind {
        ModelKind::Linear => Box::new(LinearSquared::new(m)),
        ModelKind::Quadnet => {
            let a = (1..=hidden).map(|j| 1.0 / j as f64).collect();
            Box::new(ShallowQuadNet::new(m, a, mu)?)
        }
        ModelKind::Logistic => Box::new(Logistic::new(m)),
        ModelKind::Location => Box::new(Location::new(m)),
    })
}

pub fn setup(run: &mut Run, args: &ModelArgs, default_model: ModelKind) -> Result<Setup, CliError> {
    let r = &mut run.resolver;
    let kind = r.or("model", args.model, default_model)?;
    let data_path: Option<String> = r.opt("data", args.data.as_ref().map(|p| p.display().to_string()))?;
    let n = r.or("n", args.n, 50usize)?;
    let m = r.or("m", args.m, 3usize)?;
    let hidden = r.or("hidden", args.hidden, 2usize)?;
    let mu = r.or("mu", args.mu, 0.1f64)?;
    let noise = r.or("noise", args.noise, 0.5f64)?;
    let seed = run.seed;

    if let Some(path) = data_path {
        let data = data::load_csv(Path::new(&path))?;
        let model = build_model(kind, data.input_dim(), hidden, mu)?;
        return Ok(Setup { model, data });
    }
    let model = build_model(kind, m, hidden, mu)?;
    let data = match kind {
        ModelKind::Linear => {
            let mut cfg = data::GeneratorConfig::new(n, m, Design::Gaussian, seed);
            cfg.noise_std = noise;
            data::problem_dataset(&data::generate_problem(&cfg)?, Role::Train)?
        }
        ModelKind::Quadnet => {
            let net = ShallowQuadNet::new(m, (1..=hidden).map(|j| 1.0 / j as f64).collect(), mu)?;
            data::quadnet_teacher(&net, n, noise, seed)?.0
        }
        ModelKind::Logistic => data::logistic_teacher(n, m, seed)?.0,
        ModelKind::Location => data::gaussian_points(n, m, seed)?,
    };
    Ok(Setup { model, data })
}
