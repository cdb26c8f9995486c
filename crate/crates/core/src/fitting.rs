//! Maximum-likelihood fitting.
//!
//! The model is fitted by block-coordinate ascent over the radial
//! parameters, the exponent vector `p` and the orthogonal factor `Q` of
//! `W = Q W₀`, where `W₀` whitens the data. Reported log-likelihoods always
//! include `log |det W|`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::density::LpNestedModel;
use crate::error::{check_dim, Error, Result};
use crate::geometry::grad_p_log_surface;
use crate::radial::{fit_radial, refine_mixture, RadialFamily, RadialModel};
use crate::tree::{LpTree, P_MAX, P_MIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Radial,
    P,
    Q,
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Block::Radial => "radial",
            Block::P => "p",
            Block::Q => "q",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Iteration cap for each p or Q block.
    pub max_iters: usize,
    /// Cap on the number of radial → p → Q cycles.
    pub max_cycles: usize,
    /// Relative log-likelihood change that ends a block or the whole fit.
    pub tolerance: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Backtracking factor of the line search.
    pub shrink: f64,
    /// Sufficient-increase constant of the line search.
    pub armijo: f64,
    pub blocks: Vec<Block>,
    /// Whiten the data before fitting; otherwise `W₀ = I` and `μ = 0`.
    pub whiten: bool,
    /// Number of random restarts; the best result is kept.
    pub starts: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 100,
            max_cycles: 20,
            tolerance: 1e-7,
            p_min: P_MIN,
            p_max: P_MAX,
            shrink: 0.5,
            armijo: 1e-4,
            blocks: vec![Block::Radial, Block::P, Block::Q],
            whiten: true,
            starts: 1,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tolerance", self.tolerance),
            ("p_min", self.p_min),
            ("p_max", self.p_max),
            ("armijo", self.armijo),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Data(format!("config {name} must be positive, got {v}")));
            }
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Data(format!("config shrink must lie in (0, 1), got {}", self.shrink)));
        }
        if self.p_min >= self.p_max {
            return Err(Error::Data("config p_min must be below p_max".into()));
        }
        if self.max_iters == 0 || self.max_cycles == 0 || self.starts == 0 {
            return Err(Error::Data("config iteration counts must be positive".into()));
        }
        if self.blocks.is_empty() {
            return Err(Error::Data("config needs at least one block".into()));
        }
        Ok(())
    }
}

/// Whitening transform of a dataset.
#[derive(Clone, Debug)]
pub struct Whitening {
    /// `Σ^{−1/2}`.
    pub w0: DMatrix<f64>,
    pub mean: Vec<f64>,
    /// `W₀ (x − mean)` for every sample.
    pub data: Dataset,
}

/// Symmetric inverse square root of the sample covariance (normalized by
/// `m`).
pub fn whiten(data: &Dataset) -> Result<Whitening> {
    let (m, n) = (data.m(), data.n());
    if m <= n {
        return Err(Error::Data(format!("whitening needs more samples ({m}) than dimensions ({n})")));
    }
    let mut mean = vec![0.0; n];
    for row in data.rows() {
        mean.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for row in data.rows() {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let v = cov[(i, j)] / m as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-12 * max) {
        return Err(Error::Singular(format!(
            "sample covariance is rank deficient (eigenvalues {min:.3e} .. {max:.3e})"
        )));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let w0 = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    let white = data.map_rows(|x, y| {
        for i in 0..n {
            y[i] = (0..n).map(|j| w0[(i, j)] * (x[j] - mean[j])).sum();
        }
    });
    Ok(Whitening { w0, mean, data: white })
}

/// Per-dataset sums over samples.
struct Accumulated {
    loglik: f64,
    grad_p: Vec<f64>,
    grad_w: Option<DMatrix<f64>>,
    visits: u64,
}

fn accumulate(model: &LpNestedModel, data: &Dataset, want_p: bool, want_w: bool) -> Result<Accumulated> {
    check_dim(model.n(), data.n())?;
    let tree = model.tree();
    let n = tree.n();
    let nodes = tree.nodes().len() as u64;
    let radial = model.radial();
    let mut y = vec![0.0; n];
    let mut xc = vec![0.0; n];
    let mut values = vec![0.0; tree.nodes().len()];
    let mut chain = vec![0.0; tree.nodes().len()];
    let mut gp = vec![0.0; tree.inner_count()];
    let mut gy = vec![0.0; n];
    let mut grad_p = vec![0.0; tree.inner_count()];
    let mut grad_w = want_w.then(|| DMatrix::<f64>::zeros(n, n));
    let mut loglik = 0.0;
    let mut visits = 0u64;
    for x in data.rows() {
        match model.mean() {
            Some(mu) => xc.iter_mut().enumerate().for_each(|(i, v)| *v = x[i] - mu[i]),
            None => xc.copy_from_slice(x),
        }
        model.to_latent_into(x, &mut y);
        let f = tree.evaluate_into(&y, &mut values);
        visits += nodes;
        if !(f > 0.0) {
            return Err(Error::Data("a sample maps to f(W(x − μ)) = 0".into()));
        }
        loglik += radial.log_pdf(f) - (n as f64 - 1.0) * f.ln();
        if !want_p && !want_w {
            continue;
        }
        let coef = radial.d_log_pdf(f) - (n as f64 - 1.0) / f;
        tree.chain_factors(&values, &mut chain);
        visits += nodes;
        if want_p {
            tree.gradient_p_from(&values, &chain, &mut gp);
            visits += nodes;
            grad_p.iter_mut().zip(&gp).for_each(|(a, b)| *a += coef * b);
        }
        if let Some(gw) = grad_w.as_mut() {
            tree.gradient_x_from(&y, &chain, &mut gy);
            visits += nodes;
            for i in 0..n {
                let c = coef * gy[i];
                for j in 0..n {
                    gw[(i, j)] += c * xc[j];
                }
            }
        }
    }
    let m = data.m() as f64;
    loglik += m * (model.log_det_w() - model.log_surface());
    if want_p {
        let gs = grad_p_log_surface(tree);
        grad_p.iter_mut().zip(&gs).for_each(|(a, b)| *a -= m * b);
    }
    if let Some(gw) = grad_w.as_mut() {
        // ∂ log |det W| / ∂W = W⁻ᵀ
        match model.inverse_transform() {
            Some(inv) => *gw += inv.transpose() * m,
            None => (0..n).for_each(|i| gw[(i, i)] += m),
        }
    }
    Ok(Accumulated {
        loglik,
        grad_p,
        grad_w,
        visits,
    })
}

/// Total log-likelihood `Σ log ρ(x_i)` (including `log |det W|`).
pub fn log_likelihood(model: &LpNestedModel, data: &Dataset) -> Result<f64> {
    Ok(accumulate(model, data, false, false)?.loglik)
}

/// Log-likelihood and its gradient with respect to the exponents (pre-order
/// over inner nodes), radial parameters held fixed.
pub fn loglik_grad_p(model: &LpNestedModel, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    let acc = accumulate(model, data, true, false)?;
    Ok((acc.loglik, acc.grad_p))
}

/// As [`loglik_grad_p`], also returning the number of tree-node visits.
pub fn loglik_grad_p_counted(model: &LpNestedModel, data: &Dataset) -> Result<(f64, Vec<f64>, u64)> {
    let acc = accumulate(model, data, true, false)?;
    Ok((acc.loglik, acc.grad_p, acc.visits))
}

/// Log-likelihood and its gradient with respect to `W`.
pub fn loglik_grad_w(model: &LpNestedModel, data: &Dataset) -> Result<(f64, DMatrix<f64>)> {
    let acc = accumulate(model, data, false, true)?;
    Ok((acc.loglik, acc.grad_w.expect("requested")))
}

/// Result of one p or Q block.
#[derive(Clone, Debug)]
pub struct BlockResult {
    pub model: LpNestedModel,
    pub loglik: f64,
    pub iterations: usize,
}

fn with_exponents(model: &LpNestedModel, ps: &[f64]) -> Result<LpNestedModel> {
    let mut next = model.clone();
    next.set_tree(model.tree().with_exponents(ps)?)?;
    Ok(next)
}

/// Projected gradient ascent on the exponents with Armijo backtracking.
pub fn fit_p(model: &LpNestedModel, data: &Dataset, cfg: &FitConfig) -> Result<BlockResult> {
    cfg.validate()?;
    let m = data.m() as f64;
    let mut current = model.clone();
    let (mut ll, mut grad) = loglik_grad_p(&current, data)?;
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let ps = current.tree().exponents();
        let g: Vec<f64> = grad.iter().map(|v| v / m).collect();
        let sup = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if sup <= cfg.tolerance {
            break;
        }
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = ps
                .iter()
                .zip(&g)
                .map(|(p, d)| (p + t * d).clamp(cfg.p_min, cfg.p_max))
                .collect();
            let moved: f64 = trial.iter().zip(&ps).zip(&grad).map(|((a, b), d)| (a - b) * d).sum();
            if moved <= 0.0 {
                break;
            }
            let candidate = with_exponents(&current, &trial)?;
            match loglik_grad_p(&candidate, data) {
                Ok((cll, cgrad)) if cll >= ll + cfg.armijo * moved => {
                    accepted = Some((candidate, cll, cgrad));
                    break;
                }
                _ => t *= cfg.shrink,
            }
        }
        let Some((candidate, cll, cgrad)) = accepted else {
            break;
        };
        let rel = (cll - ll) / ll.abs().max(1.0);
        current = candidate;
        ll = cll;
        grad = cgrad;
        step = t / cfg.shrink;
        if rel < cfg.tolerance {
            break;
        }
    }
    Ok(BlockResult {
        model: current,
        loglik: ll,
        iterations,
    })
}

/// Projects onto the nearest orthogonal matrix.
fn orthonormalize(q: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = q.clone().svd(true, true);
    svd.u.expect("requested") * svd.v_t.expect("requested")
}

/// Geodesic line search on `SO(n)` for `Q` in `W = Q W₀`; the model's
/// current `W` must equal `q · w0`.
pub fn fit_q(
    model: &LpNestedModel,
    data: &Dataset,
    w0: &DMatrix<f64>,
    q: &DMatrix<f64>,
    cfg: &FitConfig,
) -> Result<(BlockResult, DMatrix<f64>)> {
    cfg.validate()?;
    let m = data.m() as f64;
    let mut q = q.clone();
    let mut current = model.clone();
    current.set_transform(Some(&q * w0))?;
    let (mut ll, mut g) = loglik_grad_w(&current, data)?;
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    for it in 0..cfg.max_iters {
        iterations += 1;
        let gq = &g * w0.transpose();
        let a = (&gq * q.transpose() - &q * gq.transpose()) * (0.5 / m);
        let norm2 = a.norm_squared();
        if norm2.sqrt() <= cfg.tolerance {
            break;
        }
        // keep the first rotation angle moderate
        let mut t = step.min(0.5 / norm2.sqrt());
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = (&a * t).exp() * &q;
            if (it + 1) % 50 == 0 {
                trial = orthonormalize(&trial);
            }
            let mut candidate = current.clone();
            candidate.set_transform(Some(&trial * w0))?;
            match loglik_grad_w(&candidate, data) {
                Ok((cll, cg)) if cll >= ll + cfg.armijo * t * m * norm2 => {
                    accepted = Some((candidate, trial, cll, cg));
                    break;
                }
                _ => t *= cfg.shrink,
            }
        }
        let Some((candidate, trial, cll, cg)) = accepted else {
            break;
        };
        let rel = (cll - ll) / ll.abs().max(1.0);
        current = candidate;
        q = trial;
        ll = cll;
        g = cg;
        step = t / cfg.shrink;
        if rel < cfg.tolerance {
            break;
        }
    }
    Ok((
        BlockResult {
            model: current,
            loglik: ll,
            iterations,
        },
        q,
    ))
}

/// One entry of the fitting trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub start: usize,
    pub cycle: usize,
    pub block: Block,
    pub loglik: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: LpNestedModel,
    /// Orthogonal factor of the fitted `W = Q W₀`.
    pub q: DMatrix<f64>,
    pub w0: DMatrix<f64>,
    pub loglik: f64,
    pub trace: Vec<TraceEntry>,
}

fn same_family(model: &RadialModel, family: RadialFamily) -> bool {
    match (model, family) {
        (RadialModel::LogNormal { .. }, RadialFamily::LogNormal) => true,
        (RadialModel::GammaP { p, .. }, RadialFamily::GammaP { p: q }) => *p == q,
        (RadialModel::LogNormalMixture { weights, .. }, RadialFamily::LogNormalMixture { k }) => {
            weights.len() == k
        }
        _ => false,
    }
}

/// Radii `f(W(x − μ))` of every sample.
pub fn radii(model: &LpNestedModel, data: &Dataset) -> Result<Vec<f64>> {
    check_dim(model.n(), data.n())?;
    let tree = model.tree();
    let mut y = vec![0.0; tree.n()];
    let mut values = vec![0.0; tree.nodes().len()];
    Ok(data
        .rows()
        .map(|x| {
            model.to_latent_into(x, &mut y);
            tree.evaluate_into(&y, &mut values)
        })
        .collect())
}

/// Refits the radial law on the current radii; keeps the best of a fresh
/// fit, a warm-started refinement and the current law.
pub fn fit_radial_block(model: &LpNestedModel, family: RadialFamily, data: &Dataset) -> Result<LpNestedModel> {
    let r = radii(model, data)?;
    let mut candidates = vec![fit_radial(family, &r)?];
    if same_family(model.radial(), family) {
        if let RadialFamily::LogNormalMixture { .. } = family {
            candidates.push(refine_mixture(model.radial(), &r)?);
        }
        candidates.push(model.radial().clone());
    }
    let best = candidates
        .into_iter()
        .map(|c| (c.log_likelihood(&r), c))
        .filter(|(ll, _)| ll.is_finite())
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Numeric("no radial candidate has a finite likelihood".into()))?
        .1;
    let mut next = model.clone();
    next.set_radial(best)?;
    Ok(next)
}

fn random_rotation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = orthonormalize(&g);
    if q.determinant() < 0.0 {
        q.row_mut(0).neg_mut();
    }
    q
}

/// Fits radial parameters, exponents and rotation to `data` for the given
/// tree topology. The exponents of `tree` are the starting point.
pub fn fit(tree: &LpTree, family: RadialFamily, data: &Dataset, cfg: &FitConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    check_dim(tree.n(), data.n())?;
    let n = tree.n();
    let (w0, mean) = if cfg.whiten {
        let w = whiten(data)?;
        (w.w0, Some(w.mean))
    } else {
        (DMatrix::identity(n, n), None)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<FitOutcome> = None;
    for start in 0..cfg.starts {
        let (q0, t0) = if start == 0 {
            (DMatrix::identity(n, n), tree.clone())
        } else {
            let ps: Vec<f64> = tree
                .exponents()
                .iter()
                .map(|p| (p * (0.3 * rng.sample::<f64, _>(StandardNormal)).exp()).clamp(cfg.p_min, cfg.p_max))
                .collect();
            (random_rotation(&mut rng, n), tree.with_exponents(&ps)?)
        };
        let outcome = fit_single(t0, family, data, cfg, w0.clone(), mean.clone(), q0, start)?;
        if best.as_ref().is_none_or(|b| outcome.loglik > b.loglik) {
            let trace = best.take().map(|b| b.trace).unwrap_or_default();
            best = Some(FitOutcome {
                trace: [trace, outcome.trace.clone()].concat(),
                ..outcome
            });
        } else if let Some(b) = best.as_mut() {
            b.trace.extend(outcome.trace);
        }
    }
    Ok(best.expect("at least one start"))
}

#[allow(clippy::too_many_arguments)]
fn fit_single(
    tree: LpTree,
    family: RadialFamily,
    data: &Dataset,
    cfg: &FitConfig,
    w0: DMatrix<f64>,
    mean: Option<Vec<f64>>,
    q0: DMatrix<f64>,
    start: usize,
) -> Result<FitOutcome> {
    let initial_radial = match family {
        RadialFamily::GammaP { p } => RadialModel::GammaP {
            shape: tree.n() as f64 / p,
            scale: 1.0,
            p,
        },
        _ => RadialModel::LogNormal { mu: 0.0, sigma: 1.0 },
    };
    let mut model = LpNestedModel::new(tree, initial_radial)?.with_transform(&q0 * &w0)?;
    model.set_mean(mean)?;
    // a radial law of the requested family is needed before any other block
    model = fit_radial_block(&model, family, data)?;
    let mut q = q0;
    let mut ll = log_likelihood(&model, data)?;
    let mut trace = Vec::new();
    for cycle in 0..cfg.max_cycles {
        let before = ll;
        for &block in &cfg.blocks {
            match block {
                Block::Radial => {
                    model = fit_radial_block(&model, family, data)?;
                    ll = log_likelihood(&model, data)?;
                }
                Block::P => {
                    let r = fit_p(&model, data, cfg)?;
                    model = r.model;
                    ll = r.loglik;
                }
                Block::Q => {
                    let (r, nq) = fit_q(&model, data, &w0, &q, cfg)?;
                    model = r.model;
                    ll = r.loglik;
                    q = nq;
                }
            }
            trace.push(TraceEntry {
                start,
                cycle,
                block,
                loglik: ll,
            });
        }
        if (ll - before) / before.abs().max(1.0) < cfg.tolerance {
            break;
        }
    }
    Ok(FitOutcome {
        model,
        q,
        w0,
        loglik: ll,
        trace,
    })
}
