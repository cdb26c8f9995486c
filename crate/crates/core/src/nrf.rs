//! Nested radial factorization.
//!
//! Starting at the root, the radius of every inner node is pushed through
//! the CDF of its current radial law and the quantile function of a `γ_p`
//! target whose density factorizes over the children. After the root remap
//! the children are independent, each an L_p-nested variable with a `γ_p`
//! radial in the parent's exponent, so the recursion continues downwards.
//! The leaves end up independent with exponential-power marginals.

use crate::data::Dataset;
use crate::density::LpNestedModel;
use crate::error::{check_dim, Error, Result};
use crate::radial::RadialModel;
use crate::special::{gamma_p, ln_gamma};
use crate::tree::LpTree;

const CDF_CLAMP: f64 = 1e-15;

/// Scale `s` for which the exponential-power law `∝ exp(−|z|^p / s)` has
/// unit variance.
pub fn white_scale(p: f64) -> f64 {
    (0.5 * p * (ln_gamma(1.0 / p) - ln_gamma(3.0 / p))).exp()
}

/// The `γ_p` radial law of `n` independent white exponential-power
/// coordinates with exponent `p`.
pub fn target_radial(n: usize, p: f64) -> RadialModel {
    RadialModel::GammaP {
        shape: n as f64 / p,
        scale: white_scale(p),
        p,
    }
}

/// Maps `r` through `F_target⁻¹ ∘ F_source`. The upper tail is used above
/// the median so that neither side loses precision.
pub fn radial_remap(r: f64, source: &RadialModel, target: &RadialModel) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("radius {r} is outside (0, ∞)")));
    }
    let lower = source.cdf(r);
    if lower <= 0.5 {
        target.quantile(lower.clamp(CDF_CLAMP, 1.0 - CDF_CLAMP))
    } else {
        target.quantile_upper(source.sf(r).clamp(CDF_CLAMP, 1.0 - CDF_CLAMP))
    }
}

/// Per-node source and target laws for one tree and root source.
#[derive(Clone, Debug)]
pub struct Nrf {
    tree: LpTree,
    sources: Vec<Option<RadialModel>>,
    targets: Vec<Option<RadialModel>>,
}

impl Nrf {
    pub fn new(tree: &LpTree, source: &RadialModel) -> Result<Nrf> {
        source.validate()?;
        let nodes = tree.nodes();
        let mut sources = vec![None; nodes.len()];
        let mut targets = vec![None; nodes.len()];
        for (idx, node) in nodes.iter().enumerate() {
            let Some(p) = node.p else { continue };
            targets[idx] = Some(target_radial(node.leaf_count(), p));
            sources[idx] = Some(match node.parent {
                None => source.clone(),
                Some(parent) => {
                    let q = tree.node(parent).p.expect("parent is inner");
                    RadialModel::GammaP {
                        shape: node.leaf_count() as f64 / q,
                        scale: white_scale(q),
                        p: q,
                    }
                }
            });
        }
        Ok(Nrf {
            tree: tree.clone(),
            sources,
            targets,
        })
    }

    pub fn tree(&self) -> &LpTree {
        &self.tree
    }

    /// Exponent of the exponential-power marginal of each output coordinate
    /// (the exponent of the leaf's parent).
    pub fn output_exponents(&self) -> Vec<f64> {
        let mut ps = vec![0.0; self.tree.n()];
        for node in self.tree.nodes() {
            if node.is_leaf() {
                let parent = node.parent.expect("leaves have parents");
                ps[node.leaves.start] = self.tree.node(parent).p.expect("parent is inner");
            }
        }
        ps
    }

    /// Transformed vector and `log |det ∂z/∂y|`.
    pub fn apply(&self, y: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_dim(self.tree.n(), y.len())?;
        let nodes = self.tree.nodes();
        let mut values = vec![0.0; nodes.len()];
        self.tree.evaluate_into(y, &mut values);
        // accumulated rescaling applied to each node's sub-vector by its
        // ancestors and itself
        let mut scale = vec![1.0; nodes.len()];
        let mut z = vec![0.0; y.len()];
        let mut logjac = 0.0;
        for (idx, node) in nodes.iter().enumerate() {
            let inherited = node.parent.map_or(1.0, |parent| scale[parent]);
            if node.is_leaf() {
                z[node.leaves.start] = y[node.leaves.start] * inherited;
                continue;
            }
            let r = values[idx] * inherited;
            if r == 0.0 {
                scale[idx] = inherited;
                continue;
            }
            let source = self.sources[idx].as_ref().expect("inner");
            let target = self.targets[idx].as_ref().expect("inner");
            let g = radial_remap(r, source, target)?;
            let k = node.leaf_count() as f64;
            logjac += (k - 1.0) * (g.ln() - r.ln()) + source.log_pdf(r) - target.log_pdf(g);
            scale[idx] = inherited * g / r;
        }
        if !logjac.is_finite() {
            return Err(Error::Numeric(format!("log-Jacobian is {logjac}")));
        }
        Ok((z, logjac))
    }
}

pub fn nrf_transform(y: &[f64], tree: &LpTree, source: &RadialModel) -> Result<Vec<f64>> {
    Ok(Nrf::new(tree, source)?.apply(y)?.0)
}

/// `log |det ∂z/∂y|` of [`nrf_transform`]; the demixing matrix is not
/// included.
pub fn nrf_log_jacobian(y: &[f64], tree: &LpTree, source: &RadialModel) -> Result<f64> {
    Ok(Nrf::new(tree, source)?.apply(y)?.1)
}

/// Log density of the exponential-power law `∝ exp(−|z|^p / s)`.
pub fn pgn_log_pdf(z: f64, p: f64, s: f64) -> f64 {
    (p / 2.0).ln() - s.ln() / p - ln_gamma(1.0 / p) - z.abs().powf(p) / s
}

pub fn pgn_cdf(z: f64, p: f64, s: f64) -> f64 {
    let half = 0.5 * gamma_p(1.0 / p, z.abs().powf(p) / s).unwrap_or(1.0);
    if z >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Log density of `z` under the factorial product of white
/// exponential-power marginals with the given exponents.
pub fn factorial_log_density(z: &[f64], exponents: &[f64]) -> f64 {
    z.iter()
        .zip(exponents)
        .map(|(&v, &p)| pgn_log_pdf(v, p, white_scale(p)))
        .sum()
}

/// Applies the model's demixing and then the factorization to every sample.
/// Returns the transformed data and the per-sample log-Jacobian, which
/// excludes `log |det W|`.
pub fn transform_dataset(model: &LpNestedModel, data: &Dataset) -> Result<(Dataset, Vec<f64>)> {
    check_dim(model.n(), data.n())?;
    let nrf = Nrf::new(model.tree(), model.radial())?;
    let mut out = Vec::with_capacity(data.as_flat().len());
    let mut logjac = Vec::with_capacity(data.m());
    let mut y = vec![0.0; model.n()];
    for x in data.rows() {
        model.to_latent_into(x, &mut y);
        let (z, lj) = nrf.apply(&y)?;
        out.extend(z);
        logjac.push(lj);
    }
    let labels = (0..model.n()).map(|i| format!("z{i}")).collect();
    Ok((Dataset::from_flat(model.n(), out)?.with_labels(labels)?, logjac))
}
