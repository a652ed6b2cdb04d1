use std::path::PathBuf;

use advtrade::data::{self, Design, GeneratorConfig};
use clap::Args;
use serde::Serialize;

use super::{write_json, Run};
use crate::output::write_atomic;
use crate::{CliError, Common};

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// `gaussian` or `bernoulli`.
    #[arg(long)]
    pub design: Option<Design>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Support size of the ground truth; dense when omitted.
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub signal_scale: Option<f64>,
}

#[derive(Serialize)]
struct ProblemDocument<'a> {
    generator: &'a GeneratorConfig,
    n: usize,
    d: usize,
    realizable: bool,
    support: &'a [usize],
    theta_star: Vec<f64>,
    data_file: &'static str,
}

pub fn resolve(run: &mut Run, args: &GenArgs) -> Result<GeneratorConfig, CliError> {
    let r = &mut run.resolver;
    let design = r.or("design", args.design, Design::Gaussian)?;
    let n = r.required("n", args.n)?;
    let d = r.required("d", args.d)?;
    let s = r.opt("s", args.s)?;
    let noise_std = r.or("noise-std", args.noise_std, 0.0)?;
    let signal_scale = r.or("signal-scale", args.signal_scale, 1.0)?;
    Ok(GeneratorConfig {
        n,
        d,
        s,
        design,
        noise_std,
        seed: run.seed,
        signal_scale,
    })
}

pub fn run(args: &GenArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start(&args.common)?;
    let cfg = resolve(&mut run, args)?;
    let (config, out) = run.finish()?;
    let problem = data::generate_problem(&cfg)?;
    let csv = data::dataset_csv(&problem.x, &problem.y)?;
    let doc = ProblemDocument {
        generator: &cfg,
        n: problem.n(),
        d: problem.d(),
        realizable: problem.realizable,
        support: problem.support.as_deref().unwrap_or(&[]),
        theta_star: problem.theta_star.as_ref().map(|t| t.as_slice().to_vec()).unwrap_or_default(),
        data_file: "problem.csv",
    };
    Ok(vec![
        write_atomic(&out, "problem.csv", csv.as_bytes())?,
        write_json(&out, "problem.json", "gen", &config, &doc)?,
    ])
}
