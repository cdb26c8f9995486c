//! Radial densities on the positive half-line.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{
    digamma, gamma_p, gamma_q, inv_gamma_p, inv_gamma_q, ln_gamma, normal_cdf, normal_quantile,
    trigamma,
};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const SIGMA_FLOOR: f64 = 1e-6;

/// A univariate density on `(0, ∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params")]
pub enum RadialModel {
    /// Law of `G^{1/p}` for `G ~ Gamma(shape, scale)`.
    #[serde(rename = "gammap")]
    GammaP { shape: f64, scale: f64, p: f64 },
    /// Radius of the uniform distribution on an `n`-dimensional ball:
    /// density `n r^{n−1}` on `(0, 1]`.
    #[serde(rename = "uniform_ball")]
    UniformBall { n: usize },
    #[serde(rename = "lognormal")]
    LogNormal { mu: f64, sigma: f64 },
    #[serde(rename = "lnmix")]
    LogNormalMixture {
        weights: Vec<f64>,
        mus: Vec<f64>,
        sigmas: Vec<f64>,
    },
}

/// Families that [`fit_radial`] can estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadialFamily {
    LogNormal,
    /// Gamma-p with the exponent held fixed.
    GammaP { p: f64 },
    LogNormalMixture { k: usize },
}

impl std::str::FromStr for RadialFamily {
    type Err = Error;

    /// Parses `lognormal`, `gammap[:P]` (default `P = 2`) or `lnmix[:K]`
    /// (default `K = 4`).
    fn from_str(s: &str) -> Result<RadialFamily> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let bad = || Error::Data(format!("unknown radial family '{s}'"));
        match (name, arg) {
            ("lognormal", None) => Ok(RadialFamily::LogNormal),
            ("gammap", None) => Ok(RadialFamily::GammaP { p: 2.0 }),
            ("gammap", Some(a)) => {
                let p: f64 = a.parse().map_err(|_| bad())?;
                if !(p > 0.0) || !p.is_finite() {
                    return Err(bad());
                }
                Ok(RadialFamily::GammaP { p })
            }
            ("lnmix", None) => Ok(RadialFamily::LogNormalMixture { k: 4 }),
            ("lnmix", Some(a)) => match a.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(RadialFamily::LogNormalMixture { k }),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

fn normal_log_pdf(y: f64, mu: f64, sigma: f64) -> f64 {
    let z = (y - mu) / sigma;
    -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln G` for `G ~ Gamma(shape, 1)`, accurate for tiny shapes where `G`
/// itself underflows.
pub(crate) fn ln_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.ln()
    } else {
        // G = G' U^{1/a} with G' ~ Gamma(a + 1)
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let u: f64 = 1.0 - rng.random::<f64>();
        g.ln() + u.ln() / shape
    }
}

impl RadialModel {
    /// Checks parameter domains.
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Data(format!("radial parameter {name} must be positive, got {v}")))
            }
        };
        match self {
            RadialModel::GammaP { shape, scale, p } => {
                pos("shape", *shape)?;
                pos("scale", *scale)?;
                pos("p", *p)
            }
            RadialModel::UniformBall { n } => {
                if *n == 0 {
                    return Err(Error::Data("uniform ball dimension must be positive".into()));
                }
                Ok(())
            }
            RadialModel::LogNormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(Error::Data(format!("log-normal mu must be finite, got {mu}")));
                }
                pos("sigma", *sigma)
            }
            RadialModel::LogNormalMixture {
                weights,
                mus,
                sigmas,
            } => {
                if weights.is_empty() || weights.len() != mus.len() || mus.len() != sigmas.len() {
                    return Err(Error::Data(
                        "mixture weights, mus and sigmas must be non-empty and equally long".into(),
                    ));
                }
                for &w in weights {
                    if !(w >= 0.0) || !w.is_finite() {
                        return Err(Error::Data(format!("mixture weight {w} is invalid")));
                    }
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-8 {
                    return Err(Error::Data(format!("mixture weights sum to {total}, not 1")));
                }
                for &m in mus {
                    if !m.is_finite() {
                        return Err(Error::Data(format!("mixture mean {m} is not finite")));
                    }
                }
                sigmas.iter().try_for_each(|&s| pos("sigma", s))
            }
        }
    }

    /// `log ϱ(r)`; `−∞` outside the support.
    pub fn log_pdf(&self, r: f64) -> f64 {
        if !(r > 0.0) {
            return f64::NEG_INFINITY;
        }
        match self {
            RadialModel::GammaP { shape, scale, p } => {
                p.ln() + (shape * p - 1.0) * r.ln() - r.powf(*p) / scale
                    - ln_gamma(*shape)
                    - shape * scale.ln()
            }
            RadialModel::UniformBall { n } => {
                if r > 1.0 {
                    f64::NEG_INFINITY
                } else {
                    (*n as f64).ln() + (*n as f64 - 1.0) * r.ln()
                }
            }
            RadialModel::LogNormal { mu, sigma } => {
                let y = r.ln();
                normal_log_pdf(y, *mu, *sigma) - y
            }
            RadialModel::LogNormalMixture {
                weights,
                mus,
                sigmas,
            } => {
                let y = r.ln();
                log_sum_exp(
                    (0..weights.len()).map(|k| weights[k].ln() + normal_log_pdf(y, mus[k], sigmas[k])),
                ) - y
            }
        }
    }

    pub fn pdf(&self, r: f64) -> f64 {
        self.log_pdf(r).exp()
    }

    /// `d/dr log ϱ(r)` for `r` in the interior of the support.
    pub fn d_log_pdf(&self, r: f64) -> f64 {
        match self {
            RadialModel::GammaP { shape, scale, p } => {
                (shape * p - 1.0) / r - p * r.powf(p - 1.0) / scale
            }
            RadialModel::UniformBall { n } => (*n as f64 - 1.0) / r,
            RadialModel::LogNormal { mu, sigma } => {
                -(1.0 + (r.ln() - mu) / (sigma * sigma)) / r
            }
            RadialModel::LogNormalMixture {
                weights,
                mus,
                sigmas,
            } => {
                let y = r.ln();
                let logs: Vec<f64> = (0..weights.len())
                    .map(|k| weights[k].ln() + normal_log_pdf(y, mus[k], sigmas[k]))
                    .collect();
                let total = log_sum_exp(logs.iter().copied());
                let s: f64 = logs
                    .iter()
                    .enumerate()
                    .map(|(k, l)| (l - total).exp() * (mus[k] - y) / (sigmas[k] * sigmas[k]))
                    .sum();
                (s - 1.0) / r
            }
        }
    }

    /// `P(R ≤ r)`.
    pub fn cdf(&self, r: f64) -> f64 {
        if !(r > 0.0) {
            return 0.0;
        }
        match self {
            RadialModel::GammaP { shape, scale, p } => {
                gamma_p(*shape, r.powf(*p) / scale).expect("validated parameters")
            }
            RadialModel::UniformBall { n } => r.min(1.0).powi(*n as i32),
            RadialModel::LogNormal { mu, sigma } => normal_cdf((r.ln() - mu) / sigma),
            RadialModel::LogNormalMixture {
                weights,
                mus,
                sigmas,
            } => {
                let y = r.ln();
                (0..weights.len())
                    .map(|k| weights[k] * normal_cdf((y - mus[k]) / sigmas[k]))
                    .sum()
            }
        }
    }

    /// `P(R > r)`, accurate in the upper tail.
    pub fn sf(&self, r: f64) -> f64 {
        if !(r > 0.0) {
            return 1.0;
        }
        match self {
            RadialModel::GammaP { shape, scale, p } => {
                gamma_q(*shape, r.powf(*p) / scale).expect("validated parameters")
            }
            RadialModel::UniformBall { n } => {
                if r >= 1.0 {
                    0.0
                } else {
                    // 1 − r^n without cancellation
                    -(*n as f64 * r.ln()).exp_m1()
                }
            }
            RadialModel::LogNormal { mu, sigma } => normal_cdf(-(r.ln() - mu) / sigma),
            RadialModel::LogNormalMixture {
                weights,
                mus,
                sigmas,
            } => {
                let y = r.ln();
                (0..weights.len())
                    .map(|k| weights[k] * normal_cdf(-(y - mus[k]) / sigmas[k]))
                    .sum()
            }
        }
    }

    /// The `r` with `cdf(r) = q`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        check_probability(q)?;
        match self {
            RadialModel::GammaP { shape, scale, p } => {
                Ok((scale * inv_gamma_p(*shape, q)?).powf(1.0 / p))
            }
            RadialModel::UniformBall { n } => Ok(q.powf(1.0 / *n as f64)),
            RadialModel::LogNormal { mu, sigma } => Ok((mu + sigma * normal_quantile(q)?).exp()),
            RadialModel::LogNormalMixture { .. } => self.invert_numerically(q, false),
        }
    }

    /// The `r` with `sf(r) = q`.
    pub fn quantile_upper(&self, q: f64) -> Result<f64> {
        check_probability(q)?;
        match self {
            RadialModel::GammaP { shape, scale, p } => {
                Ok((scale * inv_gamma_q(*shape, q)?).powf(1.0 / p))
            }
            RadialModel::UniformBall { n } => Ok(((-q).ln_1p() / *n as f64).exp()),
            RadialModel::LogNormal { mu, sigma } => Ok((mu - sigma * normal_quantile(q)?).exp()),
            RadialModel::LogNormalMixture { .. } => self.invert_numerically(q, true),
        }
    }

    /// Safeguarded Newton on `log r`.
    fn invert_numerically(&self, q: f64, upper: bool) -> Result<f64> {
        let RadialModel::LogNormalMixture { mus, sigmas, .. } = self else {
            unreachable!()
        };
        if q == 0.0 {
            return Ok(if upper { f64::INFINITY } else { 0.0 });
        }
        if q == 1.0 {
            return Ok(if upper { 0.0 } else { f64::INFINITY });
        }
        // increasing residual in y = log r
        let residual = |y: f64| {
            let r = y.exp();
            if upper {
                q - self.sf(r)
            } else {
                self.cdf(r) - q
            }
        };
        let mut lo = (0..mus.len())
            .map(|k| mus[k] - 40.0 * sigmas[k])
            .fold(f64::INFINITY, f64::min);
        let mut hi = (0..mus.len())
            .map(|k| mus[k] + 40.0 * sigmas[k])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut y = 0.5 * (lo + hi);
        for _ in 0..200 {
            let res = residual(y);
            if res == 0.0 {
                return Ok(y.exp());
            }
            if res < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            // d cdf / d y = r ϱ(r)
            let dens = (self.log_pdf(y.exp()) + y).exp();
            let mut next = y - res / dens;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() < 1e-14 * (1.0 + y.abs()) || hi - lo < 1e-14 * (1.0 + y.abs()) {
                return Ok(next.exp());
            }
            y = next;
        }
        Err(Error::Numeric(format!("mixture quantile did not converge at q = {q}")))
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RadialModel::GammaP { shape, scale, p } => {
                ((scale.ln() + ln_gamma_variate(rng, *shape)) / p).exp()
            }
            RadialModel::UniformBall { n } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                u.powf(1.0 / *n as f64)
            }
            RadialModel::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
            RadialModel::LogNormalMixture {
                weights,
                mus,
                sigmas,
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                (mus[k] + sigmas[k] * z).exp()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    /// `Σ log ϱ(r_i)`.
    pub fn log_likelihood(&self, radii: &[f64]) -> f64 {
        radii.iter().map(|&r| self.log_pdf(r)).sum()
    }
}

fn check_probability(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("probability must lie in [0, 1], got {q}")));
    }
    Ok(())
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 2 {
        return Err(Error::Data(format!(
            "radial fitting needs at least two points, got {}",
            radii.len()
        )));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(Error::Data(format!("radii must be positive and finite, got {r}")));
    }
    Ok(())
}

/// Maximum-likelihood estimate of `family` on `radii`.
pub fn fit_radial(family: RadialFamily, radii: &[f64]) -> Result<RadialModel> {
    check_radii(radii)?;
    match family {
        RadialFamily::LogNormal => {
            let m = radii.len() as f64;
            let mu = radii.iter().map(|r| r.ln()).sum::<f64>() / m;
            let var = radii.iter().map(|r| (r.ln() - mu).powi(2)).sum::<f64>() / m;
            Ok(RadialModel::LogNormal {
                mu,
                sigma: var.sqrt().max(SIGMA_FLOOR),
            })
        }
        RadialFamily::GammaP { p } => fit_gamma_p(p, radii),
        RadialFamily::LogNormalMixture { k } => {
            let init = mixture_init(k, radii)?;
            refine_mixture(&init, radii)
        }
    }
}

fn fit_gamma_p(p: f64, radii: &[f64]) -> Result<RadialModel> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Domain(format!("gamma-p exponent must be positive, got {p}")));
    }
    // t = r^p ~ Gamma(u, s); in logs to keep large p finite
    let m = radii.len() as f64;
    let logs: Vec<f64> = radii.iter().map(|r| p * r.ln()).collect();
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ln_mean = shift + (logs.iter().map(|l| (l - shift).exp()).sum::<f64>() / m).ln();
    let mean_ln = logs.iter().sum::<f64>() / m;
    let c = ln_mean - mean_ln;
    if !(c > 1e-12) {
        return Err(Error::Data("radii are (numerically) all equal".into()));
    }
    // ln u − ψ(u) = c
    let mut u = (3.0 - c + ((c - 3.0).powi(2) + 24.0 * c).sqrt()) / (12.0 * c);
    for _ in 0..100 {
        let f = u.ln() - digamma(u) - c;
        let df = 1.0 / u - trigamma(u);
        let next = (u - f / df).max(0.5 * u);
        let done = (next - u).abs() <= 1e-14 * u;
        u = next;
        if done {
            break;
        }
    }
    let scale = (ln_mean - u.ln()).exp();
    Ok(RadialModel::GammaP { shape: u, scale, p })
}

fn mixture_init(k: usize, radii: &[f64]) -> Result<RadialModel> {
    if k == 0 {
        return Err(Error::Data("mixture needs at least one component".into()));
    }
    if k > radii.len() {
        return Err(Error::Data(format!(
            "mixture with {k} components needs at least {k} points, got {}",
            radii.len()
        )));
    }
    let mut ys: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    ys.sort_by(f64::total_cmp);
    let m = ys.len();
    let mut weights = Vec::with_capacity(k);
    let mut mus = Vec::with_capacity(k);
    let mut sigmas = Vec::with_capacity(k);
    for j in 0..k {
        let slice = &ys[j * m / k..(j + 1) * m / k];
        let len = slice.len() as f64;
        let mu = slice.iter().sum::<f64>() / len;
        let var = slice.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / len;
        weights.push(len / m as f64);
        mus.push(mu);
        sigmas.push(var.sqrt().max(SIGMA_FLOOR));
    }
    Ok(RadialModel::LogNormalMixture {
        weights,
        mus,
        sigmas,
    })
}

/// EM iterations on a log-normal mixture, starting from `model`. Stops at a
/// relative log-likelihood change below `1e-9` or after 500 iterations.
/// The result never has a lower likelihood than the start.
pub fn refine_mixture(model: &RadialModel, radii: &[f64]) -> Result<RadialModel> {
    refine_mixture_traced(model, radii).map(|(m, _)| m)
}

/// As [`refine_mixture`], also returning the log-likelihood after each
/// iteration (the first entry is the starting value).
pub fn refine_mixture_traced(model: &RadialModel, radii: &[f64]) -> Result<(RadialModel, Vec<f64>)> {
    check_radii(radii)?;
    let RadialModel::LogNormalMixture {
        weights,
        mus,
        sigmas,
    } = model
    else {
        return Err(Error::Data("EM refinement needs a log-normal mixture".into()));
    };
    model.validate()?;
    let ys: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let sum_y: f64 = ys.iter().sum();
    let k = weights.len();
    let m = ys.len();
    let (mut w, mut mu, mut sg) = (weights.clone(), mus.clone(), sigmas.clone());
    let mut resp = vec![0.0; m * k];

    // E step; returns the log-likelihood in r
    let e_step = |w: &[f64], mu: &[f64], sg: &[f64], resp: &mut [f64]| -> f64 {
        let mut ll = 0.0;
        for (i, &y) in ys.iter().enumerate() {
            let row = &mut resp[i * k..(i + 1) * k];
            for j in 0..k {
                row[j] = if w[j] > 0.0 {
                    w[j].ln() + normal_log_pdf(y, mu[j], sg[j])
                } else {
                    f64::NEG_INFINITY
                };
            }
            let total = log_sum_exp(row.iter().copied());
            for v in row.iter_mut() {
                *v = (*v - total).exp();
            }
            ll += total;
        }
        ll - sum_y
    };

    let mut ll = e_step(&w, &mu, &sg, &mut resp);
    let mut trace = vec![ll];
    let mut best = (w.clone(), mu.clone(), sg.clone(), ll);
    for _ in 0..500 {
        for j in 0..k {
            let nj: f64 = (0..m).map(|i| resp[i * k + j]).sum();
            if nj <= 1e-300 {
                w[j] = 0.0;
                continue;
            }
            let mj = (0..m).map(|i| resp[i * k + j] * ys[i]).sum::<f64>() / nj;
            let vj = (0..m)
                .map(|i| resp[i * k + j] * (ys[i] - mj).powi(2))
                .sum::<f64>()
                / nj;
            w[j] = nj / m as f64;
            mu[j] = mj;
            sg[j] = vj.sqrt().max(SIGMA_FLOOR);
        }
        let total_w: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total_w);
        let next = e_step(&w, &mu, &sg, &mut resp);
        trace.push(next);
        if next > best.3 {
            best = (w.clone(), mu.clone(), sg.clone(), next);
        }
        let done = ((next - ll) / ll.abs().max(1e-300)).abs() < 1e-9;
        ll = next;
        if done {
            break;
        }
    }
    let (weights, mus, sigmas, _) = best;
    Ok((
        RadialModel::LogNormalMixture {
            weights,
            mus,
            sigmas,
        },
        trace,
    ))
}
