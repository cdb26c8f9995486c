//! Built-in self-check: a small battery of numerical oracles run against
//! the library on random trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::density::LpNestedModel;
use crate::fitting::{loglik_grad_p, whiten};
use crate::geometry::{grad_p_log_surface, log_surface_area, log_surface_area_beta, log_volume};
use crate::nrf::{factorial_log_density, transform_dataset, Nrf};
use crate::polar::{log_jacobian_det, to_polar};
use crate::radial::RadialModel;
use crate::sampler::{sample, sample_uniform_ball};
use crate::stats::{ks_test, log_abs_det, mc_log_volume, numerical_gradient, numerical_jacobian, rel_close};
use crate::tree::{random_tree, LpTree};
use crate::Result;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{mark}  {:<28} {}", self.name, self.detail)
    }
}

fn result(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn random_model(rng: &mut ChaCha8Rng, n: usize) -> LpNestedModel {
    let tree = random_tree(rng, n, 0.6..3.0);
    let radial = RadialModel::LogNormal {
        mu: rng.random_range(-0.5..0.5),
        sigma: rng.random_range(0.3..1.0),
    };
    LpNestedModel::new(tree, radial).expect("valid radial")
}

/// Runs every check. `samples` sets the Monte Carlo and KS sample sizes.
pub fn run_checks(seed: u64, samples: usize) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks: Vec<fn(&mut ChaCha8Rng, usize) -> Result<CheckResult>> = vec![
        closed_form_measures,
        surface_forms_agree,
        mc_volume,
        gradient_x,
        gradient_p,
        gradient_log_surface,
        polar_jacobian,
        radius_ks,
        nrf_identity,
        whitening,
    ];
    checks
        .into_iter()
        .enumerate()
        .map(|(k, check)| {
            check(&mut rng, samples).unwrap_or_else(|e| result(&format!("check {k}"), false, format!("error: {e}")))
        })
        .collect()
}

fn closed_form_measures(_: &mut ChaCha8Rng, _: usize) -> Result<CheckResult> {
    let s = log_surface_area(&LpTree::flat(3, 2.0)?, 1.0)?.exp();
    let v = log_volume(&LpTree::flat(3, 1.0)?, 1.0)?.exp();
    let err = (s - 4.0 * std::f64::consts::PI).abs().max((v - 4.0 / 3.0).abs());
    Ok(result("sphere 4π, cross-polytope 4/3", err < 1e-10, format!("max error {err:.2e}")))
}

fn surface_forms_agree(rng: &mut ChaCha8Rng, _: usize) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let n = rng.random_range(2..8);
        let t = random_tree(rng, n, 0.3..5.0);
        worst = worst.max((log_surface_area(&t, 1.3)? - log_surface_area_beta(&t, 1.3)?).abs());
    }
    Ok(result("gamma vs beta surface", worst < 1e-12, format!("max error {worst:.2e}")))
}

fn mc_volume(rng: &mut ChaCha8Rng, samples: usize) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for _ in 0..5 {
        let n = rng.random_range(2..5);
        let t = random_tree(rng, n, 0.5..4.0);
        let (est, se) = mc_log_volume(&t, rng, samples * 10);
        worst = worst.max((est - log_volume(&t, 1.0)?).abs() / se.max(1e-300));
    }
    Ok(result("volume vs Monte Carlo", worst < 4.0, format!("max deviation {worst:.2} SE")))
}

fn fd_report(name: &str, pairs: &[(f64, f64)]) -> CheckResult {
    let worst = pairs
        .iter()
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-3))
        .fold(0.0, f64::max);
    result(name, worst < 1e-5, format!("max relative error {worst:.2e}"))
}

fn gradient_x(rng: &mut ChaCha8Rng, _: usize) -> Result<CheckResult> {
    let mut pairs = Vec::new();
    for _ in 0..10 {
        let t = random_tree(rng, 5, 0.6..3.0);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.2..1.5) * if rng.random() { 1.0 } else { -1.0 }).collect();
        let g = t.gradient_x(&x)?;
        let num = numerical_gradient(|v| t.value(v).unwrap(), &x, 1e-6);
        pairs.extend(g.into_iter().zip(num));
    }
    Ok(fd_report("gradient of f in x", &pairs))
}

fn gradient_p(rng: &mut ChaCha8Rng, _: usize) -> Result<CheckResult> {
    let mut pairs = Vec::new();
    for _ in 0..10 {
        let t = random_tree(rng, 5, 0.6..3.0);
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.2..1.5)).collect();
        let g = t.gradient_p(&x)?;
        let num = numerical_gradient(|ps| t.with_exponents(ps).unwrap().value(&x).unwrap(), &t.exponents(), 1e-6);
        pairs.extend(g.into_iter().zip(num));
    }
    let model = random_model(rng, 4);
    let data = sample(&model, rng, 200);
    let (_, g) = loglik_grad_p(&model, &data)?;
    let num = numerical_gradient(
        |ps| {
            let mut m = model.clone();
            m.set_tree(model.tree().with_exponents(ps).unwrap()).unwrap();
            crate::fitting::log_likelihood(&m, &data).unwrap()
        },
        &model.tree().exponents(),
        1e-5,
    );
    pairs.extend(g.into_iter().zip(num));
    Ok(fd_report("gradients in p", &pairs))
}

fn gradient_log_surface(rng: &mut ChaCha8Rng, _: usize) -> Result<CheckResult> {
    let mut pairs = Vec::new();
    for _ in 0..10 {
        let t = random_tree(rng, 6, 0.5..4.0);
        let num = numerical_gradient(
            |ps| log_surface_area(&t.with_exponents(ps).unwrap(), 1.0).unwrap(),
            &t.exponents(),
            1e-6,
        );
        pairs.extend(grad_p_log_surface(&t).into_iter().zip(num));
    }
    Ok(fd_report("gradient of log surface", &pairs))
}

fn polar_jacobian(rng: &mut ChaCha8Rng, _: usize) -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let t = random_tree(rng, 4, 0.7..3.0);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.3..1.0)).collect();
        let pt = to_polar(&t, &x)?;
        let analytic = log_jacobian_det(&t, &pt)?;
        let sign = pt.last_sign;
        let mut coords = vec![pt.r];
        coords.extend(&pt.u);
        let jac = numerical_jacobian(
            |c| {
                let p = crate::polar::PolarPoint {
                    r: c[0],
                    u: c[1..].to_vec(),
                    last_sign: sign,
                };
                crate::polar::from_polar(&t, &p).unwrap()
            },
            &coords,
            1e-7,
        );
        let num = log_abs_det(&jac);
        worst = worst.max((analytic - num).abs() / analytic.abs().max(1.0));
    }
    Ok(result("polar Jacobian", worst < 1e-4, format!("max relative error {worst:.2e}")))
}

fn radius_ks(rng: &mut ChaCha8Rng, samples: usize) -> Result<CheckResult> {
    let mut worst = 1.0_f64;
    for _ in 0..3 {
        let model = random_model(rng, 4);
        let data = sample(&model, rng, samples);
        let r: Vec<f64> = data.rows().map(|x| model.tree().value(x).unwrap()).collect();
        worst = worst.min(ks_test(&r, |v| model.radial().cdf(v)).p_value);
    }
    let t = random_tree(rng, 3, 0.5..3.0);
    let ball = sample_uniform_ball(&t, rng, samples);
    let r: Vec<f64> = ball.rows().map(|x| t.value(x).unwrap()).collect();
    worst = worst.min(ks_test(&r, |v| v.clamp(0.0, 1.0).powi(3)).p_value);
    // four tests at level 0.01 each; Bonferroni to keep the report stable
    Ok(result("sampler radii KS", worst > 0.0025, format!("min p-value {worst:.3}")))
}

fn nrf_identity(rng: &mut ChaCha8Rng, _: usize) -> Result<CheckResult> {
    let model = random_model(rng, 4);
    let data = sample(&model, rng, 200);
    let (z, lj) = transform_dataset(&model, &data)?;
    let ps = Nrf::new(model.tree(), model.radial())?.output_exponents();
    let mut worst = 0.0_f64;
    for ((x, zi), l) in data.rows().zip(z.rows()).zip(&lj) {
        worst = worst.max((model.log_density(x)? - factorial_log_density(zi, &ps) - l).abs());
    }
    Ok(result("NRF change of variables", worst < 1e-8, format!("max error {worst:.2e}")))
}

fn whitening(rng: &mut ChaCha8Rng, _: usize) -> Result<CheckResult> {
    let model = random_model(rng, 3);
    let data = sample(&model, rng, 2000);
    let w = whiten(&data)?;
    let m = w.data.m() as f64;
    let mut worst = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            let c: f64 = w.data.rows().map(|r| r[i] * r[j]).sum::<f64>() / m;
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((c - want).abs());
        }
    }
    Ok(result("whitened covariance", rel_close(worst, 0.0, 1e-8, 1.0), format!("max error {worst:.2e}")))
}
