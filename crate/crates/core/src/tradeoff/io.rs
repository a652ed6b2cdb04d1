use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::TradeoffCurve;
use crate::data::format_real;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackDocument {
    pub p: String,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDocument {
    pub xi: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy_clean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy_adv: Option<f64>,
    pub converged: bool,
    pub grad_norm_final: f64,
    pub theta: Vec<f64>,
}

/// Serialized form of a [`TradeoffCurve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDocument {
    pub model: String,
    pub attack: AttackDocument,
    pub seed: u64,
    pub points: Vec<PointDocument>,
    pub frontier: Vec<usize>,
}

impl From<&TradeoffCurve> for CurveDocument {
    fn from(c: &TradeoffCurve) -> Self {
        Self {
            model: c.model.clone(),
            attack: AttackDocument {
                p: c.attack.norm.to_string(),
                epsilon: c.attack.epsilon,
            },
            seed: c.seed,
            points: c
                .points
                .iter()
                .map(|p| PointDocument {
                    xi: p.xi,
                    alpha: p.alpha,
                    beta: p.beta,
                    accuracy_clean: p.accuracy_clean,
                    accuracy_adv: p.accuracy_adv,
                    converged: p.converged,
                    grad_norm_final: p.grad_norm_final,
                    theta: p.theta.as_slice().to_vec(),
                })
                .collect(),
            frontier: c.frontier.clone(),
        }
    }
}

pub fn curve_json(curve: &TradeoffCurve) -> Result<String> {
    Ok(serde_json::to_string_pretty(&CurveDocument::from(curve))?)
}

fn opt(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

/// One row per point: `xi,alpha,beta,accuracy_clean,accuracy_adv,converged,on_frontier`.
pub fn curve_csv(curve: &TradeoffCurve) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "xi",
        "alpha",
        "beta",
        "accuracy_clean",
        "accuracy_adv",
        "converged",
        "on_frontier",
    ])?;
    for (i, p) in curve.points.iter().enumerate() {
        w.write_record([
            format_real(p.xi),
            format_real(p.alpha),
            format_real(p.beta),
            opt(p.accuracy_clean),
            opt(p.accuracy_adv),
            p.converged.to_string(),
            curve.frontier.contains(&i).to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Two whitespace-separated columns `alpha beta`, one frontier point per line.
pub fn frontier_dat(curve: &TradeoffCurve) -> String {
    let mut s = String::from("# alpha beta\n");
    for p in curve.frontier_points() {
        writeln!(s, "{} {}", format_real(p.alpha), format_real(p.beta)).expect("writing to a String");
    }
    s
}

pub fn gnuplot_script(curve: &TradeoffCurve, dat_file: &str, png_file: &str) -> String {
    format!(
        "set terminal pngcairo size 800,600\n\
         set output '{png_file}'\n\
         set xlabel 'clean loss (alpha)'\n\
         set ylabel 'adversarial loss (beta)'\n\
         set title '{} p={} eps={}'\n\
         plot '{dat_file}' using 1:2 with linespoints title 'frontier'\n",
        curve.model, curve.attack.norm, curve.attack.epsilon
    )
}
