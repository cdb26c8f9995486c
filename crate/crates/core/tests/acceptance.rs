//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! with a non-zero status if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use lpnested::bayes::{location_posterior_by_quadrature, location_posterior_grid, LocationPrior};
use lpnested::data::Dataset;
use lpnested::density::{root_children_dirichlet_check, uniform_sphere_log_density};
use lpnested::fitting::{fit, log_likelihood, loglik_grad_p, loglik_grad_p_counted, loglik_grad_w, Block, FitConfig};
use lpnested::geometry::{grad_p_log_surface, log_surface_area, log_volume};
use lpnested::nrf::{
    factorial_log_density, pgn_cdf, radial_remap, target_radial, transform_dataset, white_scale, Nrf,
};
use lpnested::polar::{from_polar, log_jacobian_det, to_polar, PolarPoint};
use lpnested::radial::{fit_radial, RadialFamily};
use lpnested::sampler::{sample, sample_counted, sample_uniform_ball};
use lpnested::stats::{correlation, ks_test, linear_fit, log_abs_det, mc_log_volume, numerical_gradient, numerical_jacobian};
use lpnested::tree::random_tree;
use lpnested::{LpNestedModel, LpTree, RadialModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> DMatrix<f64> {
    DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| spread * rng.sample::<f64, _>(StandardNormal))
}

fn random_rotation(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

fn random_radial(rng: &mut ChaCha8Rng, kind: usize) -> RadialModel {
    match kind % 3 {
        0 => RadialModel::LogNormal {
            mu: rng.random_range(-0.5..0.5),
            sigma: rng.random_range(0.2..1.0),
        },
        1 => {
            let p = rng.random_range(0.7..3.0);
            RadialModel::GammaP {
                shape: rng.random_range(0.8..4.0),
                scale: rng.random_range(0.5..2.0),
                p,
            }
        }
        _ => RadialModel::LogNormalMixture {
            weights: vec![0.3, 0.7],
            mus: vec![-0.5, 0.6],
            sigmas: vec![0.3, 0.4],
        },
    }
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(lo..hi) * if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

/// `max |a − b| / max |b|`.
fn vector_rel_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    let kmax = (4.0 / h).ceil() as i64;
    for k in -kmax..=kmax {
        let t = k as f64 * h;
        let s = 0.5 * PI * t.sinh();
        let x = s.tanh();
        let w = 0.5 * PI * t.cosh() / s.cosh().powi(2);
        if w < 1e-300 || x.abs() >= 1.0 {
            continue;
        }
        sum += w * f(mid + half * x);
    }
    sum * h * half
}

// 1. closed-form volume and surface against oracles
fn geometry() -> Outcome {
    let mut rng = rng(1);
    let mut worst = 0.0_f64;
    for k in 0..20 {
        let n = 2 + k % 3;
        let t = random_tree(&mut rng, n, 0.5..4.0);
        let (est, _) = mc_log_volume(&t, &mut rng, 10_000_000);
        let exact = log_volume(&t, 1.0).unwrap();
        worst = worst.max(((est - exact).exp() - 1.0).abs());
    }
    let s = log_surface_area(&LpTree::flat(3, 2.0).unwrap(), 1.0).unwrap().exp();
    let v = log_volume(&LpTree::flat(3, 1.0).unwrap(), 1.0).unwrap().exp();
    let closed = (s - 4.0 * PI).abs().max((v - 4.0 / 3.0).abs());
    outcome(
        worst < 0.01 && closed < 1e-10,
        format!("MC volume max rel dev {worst:.2e} (< 1e-2); 4π / 4/3 max err {closed:.1e} (< 1e-10)"),
    )
}

// 2. analytic Jacobians against numerical determinants
fn jacobians() -> Outcome {
    let mut rng = rng(2);
    let mut polar_worst = 0.0_f64;
    for k in 0..100 {
        let n = 2 + k % 4;
        let t = random_tree(&mut rng, n, 0.6..3.0);
        let x = random_point(&mut rng, n, 0.2, 1.5);
        let pt = to_polar(&t, &x).unwrap();
        let analytic = log_jacobian_det(&t, &pt).unwrap();
        let sign = pt.last_sign;
        let mut coords = vec![pt.r];
        coords.extend(&pt.u);
        let jac = numerical_jacobian(
            |c| {
                let p = PolarPoint {
                    r: c[0],
                    u: c[1..].to_vec(),
                    last_sign: sign,
                };
                from_polar(&t, &p).unwrap()
            },
            &coords,
            1e-6,
        );
        polar_worst = polar_worst.max(((analytic - log_abs_det(&jac)).exp() - 1.0).abs());
    }
    let mut nrf_worst = 0.0_f64;
    for k in 0..50 {
        let t = random_tree(&mut rng, 3, 0.6..3.0);
        let radial = random_radial(&mut rng, k);
        let nrf = Nrf::new(&t, &radial).unwrap();
        let model = LpNestedModel::new(t, radial).unwrap();
        let y = sample(&model, &mut rng, 1);
        let y = y.row(0);
        let (_, analytic) = nrf.apply(y).unwrap();
        let jac = numerical_jacobian(|v| nrf.apply(v).unwrap().0, y, 1e-6 * lpnested_scale(y));
        nrf_worst = nrf_worst.max(((analytic - log_abs_det(&jac)).exp() - 1.0).abs());
    }
    outcome(
        polar_worst < 1e-4 && nrf_worst < 1e-4,
        format!("polar det max rel err {polar_worst:.2e} (100 pts); NRF det {nrf_worst:.2e} (50 pts); tol 1e-4"),
    )
}

fn lpnested_scale(y: &[f64]) -> f64 {
    y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-3)
}

// 3. gradients against central finite differences
fn gradients() -> Outcome {
    let mut rng = rng(3);
    let h = 1e-5;
    let (mut gx, mut gp, mut gs) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let n = rng.random_range(2..7);
        let t = random_tree(&mut rng, n, 0.6..3.0);
        let x = random_point(&mut rng, n, 0.2, 1.5);
        let num = numerical_gradient(|v| t.value(v).unwrap(), &x, h);
        gx = gx.max(vector_rel_error(&t.gradient_x(&x).unwrap(), &num));
        let num = numerical_gradient(|ps| t.with_exponents(ps).unwrap().value(&x).unwrap(), &t.exponents(), h);
        gp = gp.max(vector_rel_error(&t.gradient_p(&x).unwrap(), &num));
        let num = numerical_gradient(|ps| log_surface_area(&t.with_exponents(ps).unwrap(), 1.0).unwrap(), &t.exponents(), h);
        gs = gs.max(vector_rel_error(&grad_p_log_surface(&t), &num));
    }
    let (mut gl, mut gw) = (0.0_f64, 0.0_f64);
    for k in 0..5 {
        let n = 3 + k % 2;
        let t = random_tree(&mut rng, n, 0.6..3.0);
        let w = random_matrix(&mut rng, n, 0.3);
        let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = LpNestedModel::new(t, random_radial(&mut rng, k))
            .unwrap()
            .with_transform(w.clone())
            .unwrap()
            .with_mean(mean)
            .unwrap();
        // central differences are only accurate away from the kinks of f at
        // y_i = 0, where ∂f/∂y_i diverges for exponents below one
        let data = sample(&model, &mut rng, 2000);
        let kept: Vec<f64> = data
            .rows()
            .filter(|x| model.to_latent(x).unwrap().iter().all(|v| v.abs() >= 0.05))
            .take(500)
            .flatten()
            .copied()
            .collect();
        let data = Dataset::from_flat(n, kept).unwrap();
        let (_, g) = loglik_grad_p(&model, &data).unwrap();
        let num = numerical_gradient(
            |ps| {
                let mut m = model.clone();
                m.set_tree(model.tree().with_exponents(ps).unwrap()).unwrap();
                log_likelihood(&m, &data).unwrap()
            },
            &model.tree().exponents(),
            h,
        );
        gl = gl.max(vector_rel_error(&g, &num));
        let (_, g) = loglik_grad_w(&model, &data).unwrap();
        let num = numerical_gradient(
            |flat| {
                let mut m = model.clone();
                m.set_transform(Some(DMatrix::from_column_slice(n, n, flat))).unwrap();
                log_likelihood(&m, &data).unwrap()
            },
            w.as_slice(),
            // truncation error dominates at larger steps for exponents below one
            1e-6,
        );
        gw = gw.max(vector_rel_error(g.as_slice(), &num));
    }
    let worst = gx.max(gp).max(gs).max(gl).max(gw);
    outcome(
        worst < 1e-5,
        format!("rel err ∇x f {gx:.1e}, ∇p f {gp:.1e}, ∇p log S {gs:.1e}, ∇p LL {gl:.1e}, ∇W LL {gw:.1e} (< 1e-5)"),
    )
}

// 4. sampler law
fn sampler_law() -> Outcome {
    let mut rng = rng(4);
    let mut ks_fail = 0;
    let mut dir_fail = 0;
    let mut min_p = 1.0_f64;
    for k in 0..10 {
        let n = 2 + k % 4;
        let t = random_tree(&mut rng, n, 0.5..3.0);
        let w = random_matrix(&mut rng, n, 0.3);
        let model = LpNestedModel::new(t, random_radial(&mut rng, k)).unwrap().with_transform(w).unwrap();
        let data = sample(&model, &mut rng, 100_000);
        let r: Vec<f64> = data
            .rows()
            .map(|x| model.tree().value(&model.to_latent(x).unwrap()).unwrap())
            .collect();
        let ks = ks_test(&r, |v| model.radial().cdf(v));
        min_p = min_p.min(ks.p_value);
        if !ks.passes(0.01) {
            ks_fail += 1;
        }
        if !root_children_dirichlet_check(&model, &data).unwrap().passed {
            dir_fail += 1;
        }
    }
    let mut ball_fail = 0;
    for n in [2, 3, 5] {
        let t = random_tree(&mut rng, n, 0.5..3.0);
        let d = sample_uniform_ball(&t, &mut rng, 100_000);
        let r: Vec<f64> = d.rows().map(|x| t.value(x).unwrap()).collect();
        // density n r^{n−1} on [0, 1]
        if !ks_test(&r, |v| v.clamp(0.0, 1.0).powi(n as i32)).passes(0.01) {
            ball_fail += 1;
        }
    }
    outcome(
        ks_fail == 0 && dir_fail == 0 && ball_fail == 0,
        format!(
            "radial KS failures {ks_fail}/10 (min p {min_p:.3}); Dirichlet failures {dir_fail}/10; uniform-ball failures {ball_fail}/3"
        ),
    )
}

// 5. normalization
fn normalization() -> Outcome {
    let mut rng = rng(5);
    let mut worst = 0.0_f64;
    let radials = [
        RadialModel::LogNormal { mu: 0.0, sigma: 0.5 },
        RadialModel::GammaP { shape: 2.0, scale: 1.0, p: 1.5 },
        RadialModel::LogNormalMixture {
            weights: vec![0.4, 0.6],
            mus: vec![-0.3, 0.5],
            sigmas: vec![0.3, 0.3],
        },
    ];
    for (k, radial) in radials.into_iter().enumerate() {
        let t = LpTree::flat(2, [0.7, 2.0, 3.5][k]).unwrap();
        let w = random_matrix(&mut rng, 2, 0.3);
        let det = w.determinant().abs();
        let bound = radial.quantile_upper(1e-9).unwrap();
        let model = LpNestedModel::new(t, radial).unwrap().with_transform(w).unwrap();
        // integrate over y = W x, where f(y) ≥ |y_i| keeps the mass inside the box
        let cells = 1600;
        let h = 2.0 * bound / cells as f64;
        let mut total = 0.0;
        for i in 0..cells {
            for j in 0..cells {
                let y = [-bound + (i as f64 + 0.5) * h, -bound + (j as f64 + 0.5) * h];
                let x = model.from_latent(&y).unwrap();
                total += model.log_density(&x).unwrap().exp();
            }
        }
        total *= h * h / det;
        worst = worst.max((total - 1.0).abs());
    }
    let mut sphere_worst = 0.0_f64;
    for p in [0.6, 1.0, 2.0, 4.0] {
        let t = LpTree::flat(2, p).unwrap();
        let total = 2.0
            * tanh_sinh(
                |u| {
                    let pt = PolarPoint { r: 1.0, u: vec![u], last_sign: 1.0 };
                    uniform_sphere_log_density(&t, &pt).map(f64::exp).unwrap_or(0.0)
                },
                0.0,
                1.0,
                0.02,
            );
        sphere_worst = sphere_worst.max((total - 1.0).abs());
    }
    for text in ["(1.7 0 1 2)", "(0.8 0 (2.5 1 2))", "(2.0 (0.6 0 1) 2)"] {
        let t = LpTree::parse(text).unwrap();
        let edge = |u1: f64| {
            // largest u2 with f(u1, u2, 0) ≤ 1
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if t.value(&[u1, mid, 0.0]).unwrap() <= 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        // the density is even in every coordinate and has kinks on the axes
        let total = 4.0
            * tanh_sinh(
                |u1| {
                    tanh_sinh(
                        |u2| {
                            let pt = PolarPoint { r: 1.0, u: vec![u1, u2], last_sign: 1.0 };
                            uniform_sphere_log_density(&t, &pt).map(f64::exp).unwrap_or(0.0)
                        },
                        0.0,
                        edge(u1),
                        0.05,
                    )
                },
                0.0,
                1.0,
                0.05,
            );
        sphere_worst = sphere_worst.max((total - 1.0).abs());
    }
    outcome(
        worst < 0.02 && sphere_worst < 0.01,
        format!("n=2 density mass max dev {worst:.2e} (< 2e-2); uniform-sphere mass max dev {sphere_worst:.2e} (< 1e-2)"),
    )
}

// 6. fitting recovery
fn fitting() -> Outcome {
    let mut rng = rng(6);
    let truth = LpTree::parse("(2.0 0 (1.0 1 2))").unwrap();
    let radial = RadialModel::LogNormal { mu: 0.0, sigma: 0.5 };
    let model = LpNestedModel::new(truth.clone(), radial).unwrap();
    let y = sample(&model, &mut rng, 100_000);

    let start = truth.with_exponents(&[1.4, 1.6]).unwrap();
    let cfg = FitConfig {
        blocks: vec![Block::Radial, Block::P],
        whiten: false,
        ..FitConfig::default()
    };
    let p_fit = fit(&start, RadialFamily::LogNormal, &y, &cfg).unwrap();
    let ps = p_fit.model.tree().exponents();
    let p_err = (ps[0] - 2.0).abs().max((ps[1] - 1.0).abs());

    let rot = random_rotation(&mut rng, 3);
    let x = y.map_rows(|yi, xi| {
        for j in 0..3 {
            xi[j] = (0..3).map(|i| rot[(i, j)] * yi[i]).sum();
        }
    });
    let cfg = FitConfig {
        whiten: false,
        starts: 4,
        seed: 6,
        ..FitConfig::default()
    };
    let q_fit = fit(&start, RadialFamily::LogNormal, &x, &cfg).unwrap();
    let w = q_fit.model.transform_matrix().cloned().unwrap_or_else(|| DMatrix::identity(3, 3));
    let groups: [&[usize]; 2] = [&[0], &[1, 2]];
    let projector = |m: &DMatrix<f64>, rows: &[usize]| {
        let sub = m.select_rows(rows.iter());
        let sub = DMatrix::from_fn(sub.nrows(), 3, |i, j| sub[(i, j)] / sub.row(i).norm());
        // orthonormalize the rows before projecting
        let q = sub.transpose().qr().q();
        &q * q.transpose()
    };
    let sub_err = groups
        .iter()
        .map(|g| (projector(&w, g) - projector(&rot, g)).norm())
        .fold(0.0, f64::max);
    let qps = q_fit.model.tree().exponents();

    let monotone = |trace: &[lpnested::fitting::TraceEntry]| {
        trace
            .windows(2)
            .filter(|w| w[0].start == w[1].start)
            .all(|w| w[1].loglik >= w[0].loglik)
    };
    let mono = monotone(&p_fit.trace) && monotone(&q_fit.trace);
    outcome(
        p_err < 0.1 && sub_err < 0.05 && mono,
        format!(
            "p = ({:.3}, {:.3}) max err {p_err:.3} (< 0.1); subspace err {sub_err:.3} (< 0.05), p there ({:.3}, {:.3}); trace monotone {mono}",
            ps[0], ps[1], qps[0], qps[1]
        ),
    )
}

// 7. nested radial factorization
fn nrf() -> Outcome {
    let mut rng = rng(7);
    let t = LpTree::parse("(1.3 (0.8 0 1) (2.2 2 3))").unwrap();
    let w = random_matrix(&mut rng, 4, 0.3);
    let model = LpNestedModel::new(t, RadialModel::LogNormal { mu: 0.0, sigma: 1.0 })
        .unwrap()
        .with_transform(w)
        .unwrap();
    let data = sample(&model, &mut rng, 100_000);
    let (z, lj) = transform_dataset(&model, &data).unwrap();
    let ps = Nrf::new(model.tree(), model.radial()).unwrap().output_exponents();
    let mut ks_fail = 0;
    for (j, &p) in ps.iter().enumerate() {
        if !ks_test(&z.column(j), |v| pgn_cdf(v, p, white_scale(p))).passes(0.01) {
            ks_fail += 1;
        }
    }
    let max_corr = |d: &Dataset| {
        let sq: Vec<Vec<f64>> = (0..4).map(|j| d.column(j).iter().map(|v| v * v).collect()).collect();
        let mut worst = 0.0_f64;
        for i in 0..4 {
            for j in i + 1..4 {
                worst = worst.max(correlation(&sq[i], &sq[j]).abs());
            }
        }
        worst
    };
    let after = max_corr(&z);
    let latent = data.map_rows(|x, y| y.copy_from_slice(&model.to_latent(x).unwrap()));
    let before = max_corr(&latent);
    let mut cov_err = 0.0_f64;
    for ((x, zi), l) in data.rows().zip(z.rows()).zip(&lj) {
        let lhs = model.log_density(x).unwrap();
        let rhs = factorial_log_density(zi, &ps) + l + model.log_det_w();
        cov_err = cov_err.max((lhs - rhs).abs());
    }

    // Gaussian data on a flat L2 tree is already factorial
    let gauss = Dataset::from_flat(3, (0..300_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).unwrap();
    let t2 = LpTree::flat(3, 2.0).unwrap();
    let radii: Vec<f64> = gauss.rows().map(|x| t2.value(x).unwrap()).collect();
    let source = fit_radial(RadialFamily::GammaP { p: 2.0 }, &radii).unwrap();
    let target = target_radial(3, 2.0);
    let mut sorted = radii.clone();
    sorted.sort_by(f64::total_cmp);
    let distortion = (1..100)
        .map(|k| {
            let r = sorted[k * sorted.len() / 100];
            (radial_remap(r, &source, &target).unwrap() / r - 1.0).abs()
        })
        .fold(0.0, f64::max);

    outcome(
        ks_fail == 0 && after < 0.03 && cov_err < 1e-8 && distortion < 0.01,
        format!(
            "marginal KS failures {ks_fail}/4; max |corr(z²)| {after:.4} (< 0.03, before {before:.3}); change-of-variables err {cov_err:.1e} (< 1e-8); Gaussian remap distortion {distortion:.1e} (< 1e-2)"
        ),
    )
}

// 8. factoriality and the Gaussian special case
fn factoriality() -> Outcome {
    let mut rng = rng(8);
    let (n, p) = (4, 1.5);
    let t = LpTree::flat(n, p).unwrap();
    let model = LpNestedModel::new(t, RadialModel::GammaP { shape: n as f64 / p, scale: 1.3, p }).unwrap();
    let data = sample(&model, &mut rng, 100_000);
    let cols: Vec<Vec<f64>> = (0..n).map(|j| data.column(j).iter().map(|v| v.abs().powf(p)).collect()).collect();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max(correlation(&cols[i], &cols[j]).abs());
        }
    }

    let n = 3;
    let w = random_matrix(&mut rng, n, 0.4);
    let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gauss = LpNestedModel::new(LpTree::flat(n, 2.0).unwrap(), RadialModel::GammaP { shape: 1.5, scale: 2.0, p: 2.0 })
        .unwrap()
        .with_transform(w.clone())
        .unwrap()
        .with_mean(mu.clone())
        .unwrap();
    let sigma = (w.transpose() * &w).try_inverse().unwrap();
    let chol = sigma.clone().cholesky().unwrap();
    let log_det_sigma: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let mut mvn_err = 0.0_f64;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..n).map(|_| 3.0 * rng.random_range(-1.0..1.0)).collect();
        let d = nalgebra::DVector::from_iterator(n, x.iter().zip(&mu).map(|(a, b)| a - b));
        let quad = d.dot(&chol.solve(&d));
        let want = -0.5 * (n as f64 * (2.0 * PI).ln() + log_det_sigma + quad);
        let got = gauss.log_density(&x).unwrap();
        mvn_err = mvn_err.max((got - want).abs() / want.abs().max(1.0));
    }
    outcome(
        worst < 0.02 && mvn_err < 1e-10,
        format!("max |corr(|x_i|^p, |x_j|^p)| {worst:.4} (< 0.02); Gaussian vs MVN max err {mvn_err:.1e} (< 1e-10)"),
    )
}

// 9. location posterior under a scale prior
fn bayes() -> Outcome {
    let t = LpTree::parse("(1.3 0 1)").unwrap();
    let data = Dataset::from_rows(&[vec![0.2, -0.4], vec![1.1, 0.3], vec![-0.6, 0.9]]).unwrap();
    let points: Vec<Vec<f64>> = (0..15)
        .flat_map(|i| (0..15).map(move |j| vec![-1.03 + 0.15 * i as f64, -1.07 + 0.15 * j as f64]))
        .collect();
    let prior = LocationPrior::Flat;
    let closed = location_posterior_grid(&t, &data, points.clone(), &prior).unwrap();
    let a = LpNestedModel::new(t.clone(), RadialModel::LogNormal { mu: 0.2, sigma: 0.6 }).unwrap();
    let b = LpNestedModel::new(t.clone(), RadialModel::GammaP { shape: 2.5, scale: 1.5, p: 1.3 }).unwrap();
    let qa = location_posterior_by_quadrature(&a, &data, points.clone(), &prior, 801).unwrap();
    let qb = location_posterior_by_quadrature(&b, &data, points, &prior, 801).unwrap();
    let rel = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| ((u - v).exp() - 1.0).abs()).fold(0.0, f64::max);
    let between = rel(&qa.log_posterior, &qb.log_posterior);
    let vs_closed = rel(&closed.log_posterior, &qa.log_posterior).max(rel(&closed.log_posterior, &qb.log_posterior));
    outcome(
        between < 0.01 && vs_closed < 0.01,
        format!("two radials max rel diff {between:.1e}; closed form vs quadrature {vs_closed:.1e} (< 1e-2)"),
    )
}

// 10. work per sample and per p-gradient
fn complexity() -> Outcome {
    let mut rng = rng(10);
    let ns = [4usize, 8, 16, 32, 64];
    let m = 1000;
    let mut per_sample = Vec::new();
    let mut per_grad = Vec::new();
    for &n in &ns {
        let t = random_tree(&mut rng, n, 0.8..2.5);
        let model = LpNestedModel::new(t, RadialModel::LogNormal { mu: 0.0, sigma: 0.5 }).unwrap();
        let (data, visits) = sample_counted(&model, &mut rng, m);
        per_sample.push(visits as f64 / m as f64);
        let (_, _, visits) = loglik_grad_p_counted(&model, &data).unwrap();
        per_grad.push(visits as f64 / m as f64);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let fs = linear_fit(&xs, &per_sample);
    let fg = linear_fit(&xs, &per_grad);
    let t = random_tree(&mut rng, 16, 0.8..2.5);
    let model = LpNestedModel::new(t, RadialModel::LogNormal { mu: 0.0, sigma: 0.5 }).unwrap();
    let ms = [500usize, 1000, 2000, 4000, 8000];
    let visits: Vec<f64> = ms
        .iter()
        .map(|&m| {
            let data = sample(&model, &mut rng, m);
            loglik_grad_p_counted(&model, &data).unwrap().2 as f64
        })
        .collect();
    let fm = linear_fit(&ms.iter().map(|&m| m as f64).collect::<Vec<_>>(), &visits);
    outcome(
        fs.r_squared > 0.99 && fg.r_squared > 0.99 && fm.r_squared > 0.99,
        format!(
            "R² sample visits vs n {:.4}, gradient visits vs n {:.4}, vs m {:.4} (> 0.99); slopes {:.2}, {:.2} per leaf",
            fs.r_squared, fg.r_squared, fm.r_squared, fs.slope, fg.slope
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("geometry", geometry),
        ("jacobians", jacobians),
        ("gradients", gradients),
        ("sampler law", sampler_law),
        ("normalization", normalization),
        ("fitting recovery", fitting),
        ("radial factorization", nrf),
        ("factoriality", factoriality),
        ("location posterior", bayes),
        ("complexity", complexity),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let o = run();
        let mark = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failed += 1;
        }
        println!("[{mark}] {:>2} {name}: {} ({:.1}s)", k + 1, o.detail, clock.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
