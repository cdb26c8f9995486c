//! Location inference under an unknown scale.
//!
//! With `x − μ` distributed as `τⁿ ρ(τ(x − μ))` and the improper prior
//! `1/τ` on the scale, integrating `τ` out leaves `f(x − μ)^{−n} / S_f(1)`
//! whatever the radial law of `ρ`. The constant of the improper prior is
//! dropped.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::density::LpNestedModel;
use crate::error::{check_dim, Error, Result};
use crate::geometry::log_surface_area;
use crate::tree::LpTree;

/// Prior on the location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LocationPrior {
    Flat,
    /// Independent normal coordinates.
    Gaussian { mean: Vec<f64>, sd: Vec<f64> },
}

impl LocationPrior {
    pub fn validate(&self, n: usize) -> Result<()> {
        if let LocationPrior::Gaussian { mean, sd } = self {
            check_dim(n, mean.len())?;
            check_dim(n, sd.len())?;
            if sd.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::Data("gaussian prior needs finite means and positive sds".into()));
            }
        }
        Ok(())
    }

    pub fn log_density(&self, mu: &[f64]) -> f64 {
        match self {
            LocationPrior::Flat => 0.0,
            LocationPrior::Gaussian { mean, sd } => mu
                .iter()
                .zip(mean)
                .zip(sd)
                .map(|((x, m), s)| {
                    let z = (x - m) / s;
                    -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                })
                .sum(),
        }
    }
}

/// `−n log f(x − μ) + log π(μ) − log S_f(1)`.
pub fn location_log_joint(tree: &LpTree, x: &[f64], mu: &[f64], prior: &LocationPrior) -> Result<f64> {
    let n = tree.n();
    check_dim(n, x.len())?;
    check_dim(n, mu.len())?;
    Ok(-(n as f64) * residual_log_norm(tree, x, mu)? + prior.log_density(mu) - log_surface_area(tree, 1.0)?)
}

fn residual_log_norm(tree: &LpTree, x: &[f64], mu: &[f64]) -> Result<f64> {
    let d: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let f = tree.value(&d)?;
    if f == 0.0 {
        return Err(Error::Singular(format!("location {mu:?} coincides with a data point")));
    }
    Ok(f.ln())
}

/// One axis of a rectangular grid; `count` equally spaced values from `min`
/// to `max` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + step * i as f64).collect()
    }
}

/// Grid of locations: either the product of per-coordinate axes or an
/// explicit point list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<Axis>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default = "flat")]
    pub prior: LocationPrior,
}

fn flat() -> LocationPrior {
    LocationPrior::Flat
}

impl GridSpec {
    pub fn from_json(text: &str) -> Result<GridSpec> {
        Ok(serde_json::from_str(text)?)
    }

    /// Grid points in row-major order (last axis fastest).
    pub fn points(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        self.prior.validate(n)?;
        let points = match (&self.axes, &self.points) {
            (Some(axes), None) => {
                check_dim(n, axes.len())?;
                if axes.iter().any(|a| a.count == 0 || !a.min.is_finite() || !a.max.is_finite()) {
                    return Err(Error::Data("grid axes need finite bounds and a positive count".into()));
                }
                let mut points = vec![Vec::with_capacity(n)];
                for axis in axes {
                    let values = axis.values();
                    points = points
                        .into_iter()
                        .flat_map(|p| {
                            values.iter().map(move |&v| {
                                let mut q = p.clone();
                                q.push(v);
                                q
                            })
                        })
                        .collect();
                }
                points
            }
            (None, Some(points)) => {
                for p in points {
                    check_dim(n, p.len())?;
                    if p.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Data("grid points must be finite".into()));
                    }
                }
                points.clone()
            }
            _ => return Err(Error::Data("grid needs exactly one of 'axes' or 'points'".into())),
        };
        if points.is_empty() {
            return Err(Error::Data("grid is empty".into()));
        }
        Ok(points)
    }
}

#[derive(Clone, Debug)]
pub struct PosteriorGrid {
    pub points: Vec<Vec<f64>>,
    /// Unnormalized `Σ_j −n log f(x_j − μ) + log π(μ)`.
    pub log_joint: Vec<f64>,
    /// `log_joint` normalized over the grid.
    pub log_posterior: Vec<f64>,
}

impl PosteriorGrid {
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_posterior.iter().map(|l| l.exp()).collect()
    }

    /// Entropy of the normalized grid weights in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .log_posterior
            .iter()
            .map(|l| if l.is_finite() { l.exp() * l } else { 0.0 })
            .sum::<f64>()
    }

    pub fn argmax(&self) -> &[f64] {
        let best = self
            .log_posterior
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("grid is not empty");
        &self.points[best]
    }
}

/// Normalizes log weights by log-sum-exp.
pub fn log_normalize(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + log_w.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    log_w.iter().map(|l| l - lse).collect()
}

/// Posterior of the location on a grid for i.i.d. observations, each with
/// its own scale integrated out.
pub fn location_posterior_grid(
    tree: &LpTree,
    data: &Dataset,
    points: Vec<Vec<f64>>,
    prior: &LocationPrior,
) -> Result<PosteriorGrid> {
    let n = tree.n();
    check_dim(n, data.n())?;
    prior.validate(n)?;
    let log_joint = points
        .iter()
        .map(|mu| {
            check_dim(n, mu.len())?;
            let mut sum = prior.log_density(mu);
            for x in data.rows() {
                sum -= n as f64 * residual_log_norm(tree, x, mu)?;
            }
            Ok(sum)
        })
        .collect::<Result<Vec<f64>>>()?;
    let log_posterior = log_normalize(&log_joint);
    Ok(PosteriorGrid {
        points,
        log_joint,
        log_posterior,
    })
}

/// `log ∫₀^∞ τ^{n−1} ρ(τ(x − μ)) dτ` by quadrature, where `ρ` is the
/// model's density (its transform and mean are ignored). The integral is
/// taken in `log τ` by the trapezoid rule over the range where the radial
/// law has mass.
pub fn scale_marginal_by_quadrature(model: &LpNestedModel, x: &[f64], mu: &[f64], nodes: usize) -> Result<f64> {
    let n = model.n();
    check_dim(n, x.len())?;
    check_dim(n, mu.len())?;
    let latent = LpNestedModel::new(model.tree().clone(), model.radial().clone())?;
    let d: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let f = model.tree().value(&d)?;
    if f == 0.0 {
        return Err(Error::Singular("location coincides with the data point".into()));
    }
    let radial = model.radial();
    let lo = radial.quantile(1e-14)?.ln() - 1.0 - f.ln();
    let hi = radial.quantile_upper(1e-14)?.ln() + 1.0 - f.ln();
    let h = (hi - lo) / (nodes - 1) as f64;
    let mut scaled = vec![0.0; n];
    let mut terms = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let ln_tau = lo + h * k as f64;
        let tau = ln_tau.exp();
        scaled.iter_mut().zip(&d).for_each(|(s, v)| *s = tau * v);
        // τ^{n−1} ρ(τ d) dτ = τⁿ ρ(τ d) d log τ
        let w = if k == 0 || k == nodes - 1 { 0.5f64.ln() } else { 0.0 };
        terms.push(latent.log_density(&scaled)? + n as f64 * ln_tau + w);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln() + h.ln())
}

/// Grid posterior computed by quadrature over the scale for every
/// observation; agrees with [`location_posterior_grid`] for any radial law.
pub fn location_posterior_by_quadrature(
    model: &LpNestedModel,
    data: &Dataset,
    points: Vec<Vec<f64>>,
    prior: &LocationPrior,
    nodes: usize,
) -> Result<PosteriorGrid> {
    check_dim(model.n(), data.n())?;
    let log_joint = points
        .iter()
        .map(|mu| {
            let mut sum = prior.log_density(mu);
            for x in data.rows() {
                sum += scale_marginal_by_quadrature(model, x, mu, nodes)?;
            }
            Ok(sum)
        })
        .collect::<Result<Vec<f64>>>()?;
    let log_posterior = log_normalize(&log_joint);
    Ok(PosteriorGrid {
        points,
        log_joint,
        log_posterior,
    })
}
