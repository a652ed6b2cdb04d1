use std::fmt::Write as _;
use std::path::PathBuf;

use advtrade::data::{format_real, generate_problem, Design, GeneratorConfig};
use advtrade::linreg::{
    check_corollary1_bound, check_theorem2_equivalence, construct_divergent_interpolators,
    restricted_eigenvalue_estimate, theorem3_curve, AdvSolveOptions, Corollary1Report,
    DivergentInterpolator, EquivalenceReport, LinRegProblem, Penalty, ReEstimate, Theorem3Curve,
};
use advtrade::tradeoff::DEFAULT_XI_GRID;
use advtrade::{Error, Norm};
use clap::Args;
use serde::Serialize;

use super::{write_json, Run};
use crate::config::FloatList;
use crate::output::write_atomic;
use crate::{CliError, Common};

#[derive(Args, Debug)]
pub struct LinregArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub design: Option<Design>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// `inf` runs the LASSO equivalence check; `2` only the weighted curve.
    #[arg(long)]
    pub p: Option<Norm>,
    #[arg(long)]
    pub xi: Option<FloatList>,
    /// Cone samples for the restricted-eigenvalue estimate.
    #[arg(long)]
    pub re_samples: Option<usize>,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Also build training interpolators with evaluation loss above `--B`,
    /// using `n` extra evaluation rows from the same ground truth.
    #[arg(long)]
    pub example2: bool,
    #[arg(long = "B", alias = "b")]
    pub b: Option<f64>,
}

#[derive(Serialize)]
struct ProblemSummary {
    generator: GeneratorConfig,
    n_train: usize,
    n_eval: usize,
    theta_star: Vec<f64>,
    support: Vec<usize>,
}

#[derive(Serialize)]
struct LinregBody {
    problem: ProblemSummary,
    re_estimate: ReEstimate,
    equivalence: Option<EquivalenceReport>,
    corollary1: Option<Corollary1Report>,
    weighted_curve: Theorem3Curve,
    example2: Option<DivergentInterpolator>,
}

fn split_rows(full: &LinRegProblem, n: usize) -> Result<(LinRegProblem, LinRegProblem), Error> {
    let truth = full.theta_star.clone().expect("generated problems carry a ground truth");
    let part = |start: usize, len: usize| {
        LinRegProblem::new(full.x.rows(start, len).into_owned(), full.y.rows(start, len).into_owned())?
            .with_truth(truth.clone())
    };
    Ok((part(0, n)?, part(n, full.n() - n)?))
}

pub fn run(args: &LinregArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start(&args.common)?;
    let r = &mut run.resolver;
    let design = r.or("design", args.design, Design::Gaussian)?;
    let n = r.or("n", args.n, 40usize)?;
    let d = r.or("d", args.d, 80usize)?;
    let s = r.or("s", args.s, 5usize)?;
    let epsilon = r.or("epsilon", args.epsilon, 0.05)?;
    let norm = r.or("p", args.p, Norm::Linf)?;
    let grid = r.or("xi", args.xi.clone(), FloatList(DEFAULT_XI_GRID.to_vec()))?;
    let re_samples = r.or("re-samples", args.re_samples, 2000usize)?;
    let zeta = r.or("zeta", args.zeta, 1.0)?;
    let example2 = r.flag("example2", args.example2)?;
    let bound = if example2 { Some(r.or("b", args.b, 1e6)?) } else { r.opt("b", args.b)? };
    let seed = run.seed;
    let (config, out) = run.finish()?;

    let penalty = Penalty::from_attack(norm)?;
    let rows = if example2 { 2 * n } else { n };
    let generator = GeneratorConfig::new(rows, d, design, seed).with_sparsity(s);
    let full = generate_problem(&generator)?;
    let (problem, eval) = if example2 {
        let (t, e) = split_rows(&full, n)?;
        (t, Some(e))
    } else {
        (full, None)
    };
    let theta_star = problem.theta_star.clone().expect("generated problems carry a ground truth");
    let support = problem.support.clone().unwrap_or_default();

    let re = restricted_eigenvalue_estimate(&problem.x, &support, zeta, re_samples, seed)?;
    let (equivalence, corollary1) = match penalty {
        Penalty::L1 => {
            let opts = AdvSolveOptions {
                seed,
                ..AdvSolveOptions::default()
            };
            let eq = check_theorem2_equivalence(&problem, epsilon, &opts)?;
            let c1 = check_corollary1_bound(&problem, &eq.theta_adv, epsilon, re.tau_hat)?;
            (Some(eq), Some(c1))
        }
        Penalty::L2 => (None, None),
    };
    let weighted_curve = theorem3_curve(&problem, epsilon, penalty, &grid.0, re.tau_hat, seed)?;
    let example2 = match (&eval, bound) {
        (Some(e), Some(b)) => Some(construct_divergent_interpolators(&problem.x, &problem.y, &e.x, &e.y, b)?),
        _ => None,
    };

    let body = LinregBody {
        problem: ProblemSummary {
            generator,
            n_train: problem.n(),
            n_eval: eval.as_ref().map_or(0, |e| e.n()),
            theta_star: theta_star.as_slice().to_vec(),
            support,
        },
        re_estimate: re,
        equivalence,
        corollary1,
        weighted_curve,
        example2,
    };
    let mut files = vec![write_json(&out, "linreg_report.json", "linreg-check", &config, &body)?];
    if let Some(ex) = &body.example2 {
        let mut text = String::from("theta_b\n");
        for v in ex.theta_b.iter() {
            writeln!(text, "{}", format_real(*v)).expect("writing to a String");
        }
        files.push(write_atomic(&out, "theta_b.csv", text.as_bytes())?);
    }
    Ok(files)
}
