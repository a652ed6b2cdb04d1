use std::path::PathBuf;

use advtrade::data::split;
use advtrade::tradeoff::{curve_csv, frontier_dat, gnuplot_script, sweep_curve, CurveDocument, DEFAULT_XI_GRID};
use advtrade::{AttackSpec, Norm, OptimConfig};
use clap::Args;
use serde::Serialize;

use super::{setup, write_json, ModelArgs, ModelKind, Run};
use crate::config::FloatList;
use crate::output::write_atomic;
use crate::{CliError, Common};

#[derive(Args, Debug)]
pub struct CurveArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Attack norm: `2`, `inf` or any real `p >= 1`.
    #[arg(long)]
    pub p: Option<Norm>,
    /// Attack radius; 0.3 for `p = 2` and 0.015 otherwise when omitted.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Comma-separated weights in (0, 1).
    #[arg(long)]
    pub xi: Option<FloatList>,
    /// Fraction of rows used for training; the rest is the evaluation set.
    /// When omitted the curve is evaluated on the training set.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub pgd_steps: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
}

pub fn default_epsilon(norm: Norm) -> f64 {
    match norm {
        Norm::L2 => 0.3,
        _ => 0.015,
    }
}

#[derive(Serialize)]
struct CurveBody {
    curve: CurveDocument,
    n_train: usize,
    n_eval: usize,
    warnings: Vec<String>,
}

pub fn run(args: &CurveArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start(&args.common)?;
    let s = setup(&mut run, &args.model, ModelKind::Quadnet)?;
    let r = &mut run.resolver;
    let norm = r.or("p", args.p, Norm::L2)?;
    let epsilon = r.or("epsilon", args.epsilon, default_epsilon(norm))?;
    let grid = r.or("xi", args.xi.clone(), FloatList(DEFAULT_XI_GRID.to_vec()))?;
    let fraction = r.opt("train-fraction", args.train_fraction)?;
    let pgd_steps = r.or("pgd-steps", args.pgd_steps, 20usize)?;
    let defaults = OptimConfig::default();
    let cfg = OptimConfig {
        max_iters: r.or("max-iters", args.max_iters, defaults.max_iters)?,
        grad_tol: r.or("grad-tol", args.grad_tol, defaults.grad_tol)?,
        seed: run.seed,
        ..defaults
    };
    let seed = run.seed;
    let (config, out) = run.finish()?;

    let spec = AttackSpec::new(norm, epsilon)?.with_pgd(pgd_steps, None)?.with_seed(seed);
    let (train, eval) = match fraction {
        Some(f) => split(&s.data, f, seed)?,
        None => (s.data.clone(), s.data.clone()),
    };
    let mut warnings = Vec::new();
    // Without an attack every weight gives the same objective, so one point suffices.
    let xi_grid = if epsilon == 0.0 && grid.0.len() > 1 {
        warnings.push(format!("epsilon = 0: the curve collapses to the single weight {}", grid.0[0]));
        vec![grid.0[0]]
    } else {
        grid.0
    };
    let curve = sweep_curve(s.model.as_ref(), &train, &eval, &xi_grid, &spec, &cfg)?;
    for p in curve.points.iter().filter(|p| !p.converged) {
        warnings.push(format!(
            "xi = {}: optimizer stopped at gradient norm {:e}",
            p.xi, p.grad_norm_final
        ));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let body = CurveBody {
        curve: CurveDocument::from(&curve),
        n_train: train.len(),
        n_eval: eval.len(),
        warnings,
    };
    Ok(vec![
        write_json(&out, "curve.json", "curve", &config, &body)?,
        write_atomic(&out, "curve.csv", curve_csv(&curve)?.as_bytes())?,
        write_atomic(&out, "frontier.dat", frontier_dat(&curve).as_bytes())?,
        write_atomic(
            &out,
            "frontier.gp",
            gnuplot_script(&curve, "frontier.dat", "frontier.png").as_bytes(),
        )?,
    ])
}
