//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Each check prints its measured quantities next to the verdict.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use advtrade::attack::{adversarial_batch_loss, corner_oracle_attack, inner_max};
use advtrade::data::{generate_problem, quadnet_teacher, Design, GeneratorConfig};
use advtrade::ifa::{compute_ifa, delta_hat_quadratic, directions_consistent, retrain_adversarial, IfaOptions, RETRAIN_TOL};
use advtrade::linreg::{
    check_corollary1_bound, check_theorem2_equivalence, construct_divergent_interpolators,
    restricted_eigenvalue_estimate, solve_adv_linreg, AdvSolveOptions, LinRegProblem, Penalty,
};
use advtrade::models::{finite_difference_audit, LinearSquared, Location, Logistic, ShallowQuadNet};
use advtrade::nalgebra::{DMatrix, DVector, SymmetricEigen};
use advtrade::tradeoff::{clean_minimizer, curve_dominates, danskin_gradient, sweep_curve, DEFAULT_XI_GRID};
use advtrade::{AttackSpec, LabeledDataset, LossModel, Norm, OptimConfig, Role};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

fn quadnet() -> ShallowQuadNet {
    ShallowQuadNet::new(3, vec![1.0, 0.5], 0.1).expect("valid network")
}

fn c1_derivative_audit() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let models: Vec<(Box<dyn LossModel>, bool)> = vec![
        (Box::new(LinearSquared::new(4)), false),
        (Box::new(ShallowQuadNet::new(4, vec![1.0, 0.5, 1.0 / 3.0], 0.1).unwrap()), false),
        (Box::new(Logistic::new(4)), true),
    ];
    let mut worst = Vec::new();
    let mut pass = true;
    for (model, binary) in &models {
        let mut max = 0.0f64;
        for _ in 0..100 {
            let theta = gaussian_vec(&mut rng, model.param_dim());
            let x = gaussian_vec(&mut rng, model.input_dim());
            let y = if *binary { f64::from(rng.random_bool(0.5)) } else { normal(&mut rng) };
            let report = finite_difference_audit(model.as_ref(), &theta, &x, y);
            max = max.max(report.max());
        }
        pass &= max <= 1e-5;
        worst.push(format!("{} {max:.1e}", model.name()));
    }
    verdict(pass, format!("max relative error: {}", worst.join(", ")))
}

fn c2_holder_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let d = 1 + k % 12;
        let model = LinearSquared::new(d);
        let theta = gaussian_vec(&mut rng, d);
        let x = gaussian_vec(&mut rng, d);
        let y = normal(&mut rng);
        let eps = rng.random_range(0.01..1.0);
        let spec = AttackSpec::new(Norm::Linf, eps).unwrap();
        let closed = inner_max(&model, &theta, &x, y, &spec);
        let corner = corner_oracle_attack(&model, &theta, &x, y, eps, Norm::Linf).unwrap();
        worst = worst.max((closed.loss - corner.loss).abs());
    }
    verdict(worst <= 1e-10, format!("max loss gap {worst:.1e} over 50 instances"))
}

fn c3_location_ifa() -> Verdict {
    let data = LabeledDataset::new(
        DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 3.0]),
        DVector::zeros(3),
        Role::Train,
    )
    .unwrap();
    let model = Location::new(1);
    let theta_hat = DVector::from_element(1, 1.0);
    let ifa = compute_ifa(&model, &theta_hat, &data, Norm::Linf, &IfaOptions::default()).unwrap();
    let ifa_err = (ifa.ifa[0] + 1.0 / 3.0).abs();
    // analytic oracle: theta_eps = 1 - eps / 3
    let eps = 0.01;
    let spec = AttackSpec::new(Norm::Linf, eps).unwrap();
    let retrained = retrain_adversarial(&model, &data, &spec, &theta_hat).unwrap();
    let retrain_err = (retrained.theta[0] - (1.0 - eps / 3.0)).abs();
    verdict(
        ifa_err <= 1e-6 && retrain_err <= 1e-8,
        format!("ifa {:.12} (|err| {ifa_err:.1e}), retrained theta err {retrain_err:.1e}", ifa.ifa[0]),
    )
}

/// First seed whose retraining reaches the tolerance for both norms at both
/// radii; the ratio bound is then asserted on that instance.
/// First instance (seeds 0..20) whose loss is differentiable along the whole
/// segment being tested: the gradient sign pattern at the fit is kept by the
/// first-order prediction and by every retrained solution at `eps` and `eps/2`,
/// and the fit and all retrainings converge. Selection never looks at the ratio.
fn c4_ifa_first_order() -> Verdict {
    let net = quadnet();
    let eps = 1e-2;
    let norms = [Norm::L2, Norm::Linf];
    for seed in 0..20u64 {
        let (data, _) = quadnet_teacher(&net, 50, 0.5, seed).unwrap();
        let cfg = OptimConfig {
            grad_tol: 1e-10,
            seed,
            ..OptimConfig::default()
        };
        let fit = clean_minimizer(&net, &data, &cfg).unwrap();
        if !fit.converged {
            continue;
        }
        let theta = &fit.theta;
        let consistent = |other: &DVector<f64>, norm| directions_consistent(&net, theta, other, &data, norm).unwrap();
        let ifas: Vec<_> = norms
            .iter()
            .map(|&norm| compute_ifa(&net, theta, &data, norm, &IfaOptions::default()).unwrap().ifa)
            .collect();
        let smooth = norms.iter().zip(&ifas).all(|(&norm, ifa)| {
            [eps, eps / 2.0].iter().all(|&e| consistent(&(theta + ifa * e), norm))
        });
        if !smooth {
            continue;
        }
        let mut detail = Vec::new();
        let mut usable = true;
        let mut pass = true;
        for (&norm, ifa) in norms.iter().zip(&ifas) {
            let mut errors = Vec::new();
            for e in [eps, eps / 2.0] {
                let rt = retrain_adversarial(&net, &data, &AttackSpec::new(norm, e).unwrap(), theta).unwrap();
                usable &= rt.converged && rt.grad_norm <= RETRAIN_TOL && consistent(&rt.theta, norm);
                errors.push((&rt.theta - theta - ifa * e).norm());
            }
            let ratio = errors[1] / errors[0];
            pass &= ratio <= 0.35;
            detail.push(format!("p={norm}: ratio {ratio:.4} (error(eps) {:.2e})", errors[0]));
        }
        if usable {
            return verdict(pass, format!("seed {seed}: {}", detail.join(", ")));
        }
    }
    verdict(false, "no seed in 0..20 stayed on a smooth piece of the loss")
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = gaussian_mat(rng, d, d);
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

fn c5_spectral_sandwich() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_slack = f64::INFINITY;
    let mut worst_quad = 0.0f64;
    let mut pass = true;
    for _ in 0..100 {
        let ht = random_spd(&mut rng, 5);
        let he = random_spd(&mut rng, 5);
        let phi = gaussian_vec(&mut rng, 5);
        let approx = delta_hat_quadratic(&phi, &ht, &he, 0.1).unwrap();
        // oracle through the eigendecomposition of Ht
        let et = SymmetricEigen::new(ht.clone());
        let inv = &et.eigenvectors
            * DMatrix::from_diagonal(&et.eigenvalues.map(|l| 1.0 / l))
            * et.eigenvectors.transpose();
        let v = inv * &phi;
        let quad = v.dot(&(&he * &v));
        let ee = SymmetricEigen::new(he.clone()).eigenvalues;
        let (tmin, tmax) = (et.eigenvalues.min(), et.eigenvalues.max());
        let lower = ee.min() / (tmax * tmax) * phi.norm_squared();
        let upper = ee.max() / (tmin * tmin) * phi.norm_squared();
        let (Some(lb), Some(ub)) = (approx.lower_bound, approx.upper_bound) else {
            pass = false;
            continue;
        };
        let q = approx.quad_form_value;
        worst_quad = worst_quad.max((q - quad).abs() / quad);
        pass &= lb <= q + 1e-10 && q <= ub + 1e-10;
        pass &= lower <= quad + 1e-10 && quad <= upper + 1e-10;
        pass &= (lb - lower).abs() <= 1e-10 * lower.max(1.0) && (ub - upper).abs() <= 1e-10 * upper.max(1.0);
        worst_slack = worst_slack.min((q - lb).min(ub - q));
    }
    pass &= worst_quad <= 1e-10;
    verdict(
        pass,
        format!("min slack {worst_slack:.2e}, max relative quad-form gap {worst_quad:.1e}"),
    )
}

fn equivalence_instances() -> Vec<(LinRegProblem, f64, u64)> {
    let mut out = Vec::new();
    for seed in 0..10u64 {
        let p = generate_problem(&GeneratorConfig::new(40, 80, Design::Gaussian, seed).with_sparsity(5)).unwrap();
        for eps in [0.01, 0.05] {
            out.push((p.clone(), eps, seed));
        }
    }
    out
}

fn c6_c7_equivalence_and_bound() -> (Verdict, Verdict) {
    let (mut p6, mut p7) = (true, true);
    let (mut worst_disc, mut worst_b, mut worst_gap, mut worst_ratio) = (0.0f64, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for (problem, eps, seed) in equivalence_instances() {
        let truth = problem.theta_star.clone().unwrap();
        let l1: f64 = truth.iter().map(|v| v.abs()).sum();
        let opts = AdvSolveOptions {
            seed,
            ..AdvSolveOptions::default()
        };
        let rep = check_theorem2_equivalence(&problem, eps, &opts).unwrap();
        let disc = rep.discrepancy / (1.0 + truth.norm());
        worst_disc = worst_disc.max(disc);
        worst_b = worst_b.max(rep.b_hat - eps * l1);
        // independent evaluation of the identity at theta*
        let n = problem.n() as f64;
        let direct: f64 = (&problem.y - &problem.x * &truth)
            .iter()
            .map(|r| (r.abs() + eps * l1).powi(2))
            .sum::<f64>()
            / n;
        let gap = (direct - eps * eps * l1 * l1).abs().max(rep.truth_identity_gap);
        worst_gap = worst_gap.max(gap);
        p6 &= disc <= 1e-3 && rep.b_hat <= eps * l1 && gap <= 1e-10;

        let support = problem.support.clone().unwrap();
        let re = restricted_eigenvalue_estimate(&problem.x, &support, 1.0, 2000, seed).unwrap();
        let c1 = check_corollary1_bound(&problem, &rep.theta_adv, eps, re.tau_hat).unwrap();
        let bound = eps * l1 / re.tau_hat.sqrt();
        let err = (&rep.theta_adv - &truth).norm();
        worst_ratio = worst_ratio.max(err / bound);
        p7 &= re.tau_hat > 0.0 && err <= bound && c1.satisfied_l1 == Some(true);
    }
    (
        verdict(
            p6,
            format!(
                "max discrepancy/(1+|theta*|) {worst_disc:.1e}, max b_hat - eps|theta*|_1 {worst_b:.2e}, max identity gap {worst_gap:.1e}"
            ),
        ),
        verdict(p7, format!("max error/bound {worst_ratio:.2e} over 20 instances")),
    )
}

fn c8_divergent_interpolators() -> Verdict {
    let full = generate_problem(&GeneratorConfig::new(20, 30, Design::Bernoulli, 8).with_sparsity(5)).unwrap();
    let (xt, yt) = (full.x.rows(0, 10).into_owned(), full.y.rows(0, 10).into_owned());
    let (xe, ye) = (full.x.rows(10, 10).into_owned(), full.y.rows(10, 10).into_owned());
    let ex = construct_divergent_interpolators(&xt, &yt, &xe, &ye, 1e6).unwrap();
    let train_residual = (&yt - &xt * &ex.theta_b).amax();
    let eval_loss = (&ye - &xe * &ex.theta_b).norm_squared();
    verdict(
        train_residual <= 1e-10 && eval_loss > 1e6,
        format!("train residual {train_residual:.1e}, eval loss {eval_loss:.4e}"),
    )
}

fn c9_min_norm_limit() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let p = generate_problem(&GeneratorConfig::new(20, 50, Design::Gaussian, 100 + seed).with_sparsity(5)).unwrap();
        let opts = AdvSolveOptions {
            seed,
            ..AdvSolveOptions::default()
        };
        let sol = solve_adv_linreg(&p.x, &p.y, 1e-3, Penalty::L2, &opts).unwrap();
        let pinv = p.x.clone().pseudo_inverse(1e-12).unwrap();
        worst = worst.max((sol.theta - pinv * &p.y).norm());
    }
    verdict(worst <= 1e-3, format!("max |theta - X^+ Y| {worst:.2e}"))
}

fn c10_curve_monotonicity() -> Verdict {
    let net = quadnet();
    let (data, _) = quadnet_teacher(&net, 50, 0.5, 0).unwrap();
    let cfg = OptimConfig::default();
    let curve = |eps: f64| {
        let spec = AttackSpec::new(Norm::Linf, eps).unwrap();
        sweep_curve(&net, &data, &data, &DEFAULT_XI_GRID, &spec, &cfg).unwrap()
    };
    let c05 = curve(0.05);
    let pts = c05.alpha_beta();
    let mono = pts.windows(2).all(|w| w[1].0 >= w[0].0 - 1e-6 && w[1].1 <= w[0].1 + 1e-6);
    let c0 = curve(0.0);
    let first = &c0.points[0];
    let collapse = c0.points.iter().fold(0.0f64, |m, p| {
        m.max((p.alpha - first.alpha).abs())
            .max((p.beta - first.beta).abs())
            .max((p.theta.to_dvector() - first.theta.to_dvector()).amax())
    });
    let c10 = curve(0.1);
    let dominated = curve_dominates(&c10.alpha_beta(), &pts, 1e-4);
    let fmt: Vec<String> = pts.iter().map(|(a, b)| format!("({a:.5},{b:.5})")).collect();
    verdict(
        mono && collapse <= 1e-10 && dominated,
        format!(
            "eps=0.05 (alpha,beta) {}; eps=0 spread {collapse:.1e}; eps=0.1 dominated {dominated}",
            fmt.join(" ")
        ),
    )
}

/// Central differences of the adversarial batch loss with the inner solver
/// re-run at each shifted parameter; points where an `l_inf` perturbation
/// changes sign pattern across the stencil are kinks and are skipped.
fn c11_danskin() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let models: Vec<(Box<dyn LossModel>, bool)> = vec![
        (Box::new(LinearSquared::new(3)), false),
        (Box::new(Logistic::new(3)), true),
        (Box::new(quadnet()), false),
        (Box::new(Location::new(3)), false),
    ];
    let h = 1e-6;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut worst = 0.0f64;
    let mut attempts = 0;
    while checked < 50 && attempts < 500 {
        attempts += 1;
        let (model, binary) = &models[attempts % models.len()];
        let model = model.as_ref();
        let norm = if attempts % 2 == 0 { Norm::L2 } else { Norm::Linf };
        let n = 8;
        let x = gaussian_mat(&mut rng, n, model.input_dim());
        let y = DVector::from_fn(n, |_, _| if *binary { f64::from(rng.random_bool(0.5)) } else { normal(&mut rng) });
        let data = LabeledDataset::new(x, y, Role::Train).unwrap();
        let theta = gaussian_vec(&mut rng, model.param_dim());
        let spec = AttackSpec::new(norm, 0.1).unwrap().with_seed(attempts as u64);
        let g = danskin_gradient(model, &theta, &data, &spec).unwrap();
        let mut fd = DVector::zeros(theta.len());
        let mut kink = false;
        for j in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            if norm == Norm::Linf {
                for i in 0..n {
                    let (xi, yi) = (data.input(i), data.target(i));
                    let dp = inner_max(model, &tp, &xi, yi, &spec).perturbation.into_delta();
                    let dm = inner_max(model, &tm, &xi, yi, &spec).perturbation.into_delta();
                    kink |= dp.iter().zip(dm.iter()).any(|(a, b)| a.signum() != b.signum());
                }
            }
            let lp = adversarial_batch_loss(model, &tp, &data, &spec).unwrap();
            let lm = adversarial_batch_loss(model, &tm, &data, &spec).unwrap();
            fd[j] = (lp - lm) / (2.0 * h);
        }
        if kink {
            skipped += 1;
            continue;
        }
        let rel = (&g - &fd).norm() / g.norm().max(1e-8);
        worst = worst.max(rel);
        checked += 1;
    }
    verdict(
        checked == 50 && worst <= 1e-4,
        format!("{checked} points, {skipped} kinks skipped, max relative error {worst:.1e}"),
    )
}

fn strip_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("\"generated_at_unix\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn snapshot(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, strip_timestamp(&std::fs::read_to_string(&p).unwrap()))
        })
        .collect();
    files.sort();
    files
}

fn c12_determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_advtrade");
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "seed = 3\nxi = 0.25,0.75\nn = 20\n").unwrap();
    let cfg_s = cfg.to_str().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        // the directory is recorded in the metadata, so it is reused but
        // emptied so a skipped write cannot pass as identical
        if out.exists() {
            std::fs::remove_dir_all(&out).unwrap();
        }
        let commands: [&[&str]; 4] = [
            &["gen", "--design", "bernoulli", "--n", "10", "--d", "30", "--seed", "7", "--out", out_s],
            &["curve", "--config", cfg_s, "--model", "quadnet", "--p", "inf", "--epsilon", "0.05", "--out", out_s],
            &["ifa", "--model", "quadnet", "--n", "30", "--seed", "2", "--out", out_s],
            &[
                "linreg-check", "--n", "20", "--d", "40", "--s", "3", "--re-samples", "200", "--xi", "0.5",
                "--example2", "--out", out_s,
            ],
        ];
        for args in commands {
            let status = Command::new(bin).args(args).output().unwrap();
            if !status.status.success() {
                return verdict(
                    false,
                    format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&status.stderr)),
                );
            }
        }
        runs.push(snapshot(&out));
    }
    let same = runs[0] == runs[1];
    let names: Vec<&str> = runs[0].iter().map(|f| f.0.as_str()).collect();
    verdict(
        same && names.len() == 10,
        format!("{} artifacts, identical {same}: {}", names.len(), names.join(" ")),
    )
}

fn report(name: &str, budget: Duration, run: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = run();
    print_line(name, budget, start.elapsed(), v)
}

fn print_line(name: &str, budget: Duration, elapsed: Duration, v: Verdict) -> bool {
    let pass = v.pass && elapsed <= budget;
    println!(
        "{} {name} [{:.1}s / {:.0}s] {}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64(),
        v.detail
    );
    pass
}

fn main() {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= report("criterion 1 derivative audit", secs(10), c1_derivative_audit);
    ok &= report("criterion 2 Holder attack exactness", secs(10), c2_holder_exactness);
    ok &= report("criterion 3 location IFA", secs(1), c3_location_ifa);
    ok &= report("criterion 4 IFA first-order validity", secs(120), c4_ifa_first_order);
    ok &= report("criterion 5 spectral sandwich", secs(5), c5_spectral_sandwich);
    // 6 and 7 share their solves; each is charged the full shared time
    let start = Instant::now();
    let (v6, v7) = c6_c7_equivalence_and_bound();
    let shared = start.elapsed();
    ok &= print_line("criterion 6 LASSO equivalence", secs(300), shared, v6);
    ok &= print_line("criterion 7 error bound", secs(300), shared, v7);
    ok &= report("criterion 8 divergent interpolators", secs(1), c8_divergent_interpolators);
    ok &= report("criterion 9 min-norm limit", secs(60), c9_min_norm_limit);
    ok &= report("criterion 10 curve monotonicity", secs(180), c10_curve_monotonicity);
    ok &= report("criterion 11 Danskin gradient", secs(30), c11_danskin);
    ok &= report("criterion 12 CLI determinism", secs(60), c12_determinism);
    if !ok {
        std::process::exit(1);
    }
}
