use std::path::PathBuf;

use advtrade::ifa::{compute_ifa, ifa_validation, IfaOptions, IfaValidationRow, DEFAULT_STATIONARITY_TOL};
use advtrade::data::format_real;
use advtrade::tradeoff::clean_minimizer;
use advtrade::{Norm, OptimConfig};
use clap::Args;
use serde::Serialize;

use super::{setup, write_json, ModelArgs, ModelKind, Run};
use crate::config::FloatList;
use crate::output::write_atomic;
use crate::{CliError, Common};

#[derive(Args, Debug)]
pub struct IfaArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub p: Option<Norm>,
    /// Attack radii of the retraining validation table.
    #[arg(long)]
    pub validate_epsilons: Option<FloatList>,
    /// Gradient sup-norm required at the fitted parameter.
    #[arg(long)]
    pub stationarity_tol: Option<f64>,
    /// Initial Hessian damping.
    #[arg(long)]
    pub damping: Option<f64>,
}

#[derive(Serialize)]
struct IfaBody {
    model: String,
    p: String,
    theta_hat: Vec<f64>,
    fit_iterations: usize,
    ifa: Vec<f64>,
    phi: Vec<f64>,
    hessian_lambda_min: f64,
    hessian_lambda_max: f64,
    damping_used: f64,
    degenerate_samples: Vec<usize>,
    gradient_norm: f64,
    solve_residual: f64,
    validation: Vec<IfaValidationRow>,
}

fn validation_csv(rows: &[IfaValidationRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epsilon", "error", "retrain_grad_norm", "retrain_converged"])?;
    for row in rows {
        w.write_record([
            format_real(row.epsilon),
            format_real(row.error),
            format_real(row.retrain_grad_norm),
            row.retrain_converged.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn run(args: &IfaArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start(&args.common)?;
    let s = setup(&mut run, &args.model, ModelKind::Quadnet)?;
    let r = &mut run.resolver;
    let norm = r.or("p", args.p, Norm::L2)?;
    let epsilons = r.or("validate-epsilons", args.validate_epsilons.clone(), FloatList(vec![0.01, 0.005]))?;
    let opts = IfaOptions {
        stationarity_tol: r.or("stationarity-tol", args.stationarity_tol, DEFAULT_STATIONARITY_TOL)?,
        damping: r.or("damping", args.damping, 0.0)?,
        require_stationary: true,
    };
    let fit_cfg = OptimConfig {
        grad_tol: 1e-10,
        seed: run.seed,
        ..OptimConfig::default()
    };
    let (config, out) = run.finish()?;

    let model = s.model.as_ref();
    let fit = clean_minimizer(model, &s.data, &fit_cfg)?;
    let result = compute_ifa(model, &fit.theta, &s.data, norm, &opts)?;
    let validation = ifa_validation(model, &fit.theta, &s.data, norm, &result.ifa, &epsilons.0)?;
    let body = IfaBody {
        model: model.name().to_string(),
        p: norm.to_string(),
        theta_hat: fit.theta.as_slice().to_vec(),
        fit_iterations: fit.iterations,
        ifa: result.ifa.as_slice().to_vec(),
        phi: result.phi.as_slice().to_vec(),
        hessian_lambda_min: result.hessian_condition.0,
        hessian_lambda_max: result.hessian_condition.1,
        damping_used: result.damping_used,
        degenerate_samples: result.degenerate_samples,
        gradient_norm: result.gradient_norm,
        solve_residual: result.solve_residual,
        validation: validation.clone(),
    };
    Ok(vec![
        write_json(&out, "ifa.json", "ifa", &config, &body)?,
        write_atomic(&out, "ifa_validation.csv", validation_csv(&validation)?.as_bytes())?,
    ])
}
