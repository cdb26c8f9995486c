//! Statistical tests and numerical oracles used to validate the model:
//! Kolmogorov–Smirnov and χ² tests, correlations, least-squares lines,
//! finite-difference derivatives and Monte Carlo volumes.

use nalgebra::DMatrix;
use rand::Rng;

use crate::special::{gamma_q, kolmogorov_sf};
use crate::tree::LpTree;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// One-sample Kolmogorov–Smirnov test of `samples` against `cdf`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / m).max((i + 1) as f64 / m - c)
        })
        .fold(0.0, f64::max);
    KsResult {
        statistic,
        p_value: ks_p_value(statistic, sorted.len()),
    }
}

/// Asymptotic p-value of a KS statistic `d` from `m` samples.
pub fn ks_p_value(d: f64, m: usize) -> f64 {
    let sm = (m as f64).sqrt();
    kolmogorov_sf((sm + 0.12 + 0.11 / sm) * d)
}

/// Upper tail `P(χ²_dof > stat)`.
pub fn chi_square_sf(stat: f64, dof: usize) -> f64 {
    gamma_q(dof as f64 / 2.0, stat.max(0.0) / 2.0).unwrap_or(f64::NAN)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Least-squares line `y ≈ slope·x + intercept` and its `R²`.
#[derive(Clone, Copy, Debug)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared: if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) },
    }
}

/// Central-difference gradient of a scalar function.
pub fn numerical_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian `J[i][j] = ∂f_i/∂x_j`.
pub fn numerical_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> DMatrix<f64> {
    let out = f(x).len();
    let mut jac = DMatrix::zeros(out, x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let up = f(&xp);
        xp[j] = x[j] - h;
        let down = f(&xp);
        xp[j] = x[j];
        for i in 0..out {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

/// `log |det A|` by LU decomposition.
pub fn log_abs_det(a: &DMatrix<f64>) -> f64 {
    let lu = a.clone().lu();
    let u = lu.u();
    (0..u.nrows()).map(|i| u[(i, i)].abs().ln()).sum()
}

/// Whether `a` and `b` agree to relative tolerance `tol`, where magnitudes
/// below `floor` count as `floor`.
pub fn rel_close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(floor)
}

/// Monte Carlo estimate of `log V_f(1)` by rejection from `[−1, 1]^n`,
/// which contains the unit ball because `f(x) ≥ |x_i|`. Returns the estimate
/// and its standard error.
pub fn mc_log_volume<R: Rng + ?Sized>(tree: &LpTree, rng: &mut R, count: usize) -> (f64, f64) {
    let n = tree.n();
    let mut x = vec![0.0; n];
    let mut scratch = vec![0.0; tree.nodes().len()];
    let mut hits = 0usize;
    for _ in 0..count {
        for v in x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        if tree.evaluate_into(&x, &mut scratch) <= 1.0 {
            hits += 1;
        }
    }
    let q = hits as f64 / count as f64;
    let log_v = n as f64 * std::f64::consts::LN_2 + q.ln();
    (log_v, ((1.0 - q) / (q * count as f64)).sqrt())
}
