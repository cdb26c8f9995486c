//! L_p-nested symmetric densities.
//!
//! A model couples a tree `f`, a radial density `ϱ` and an affine map
//! `y = W(x − μ)`. The density of `y` is
//!
//! ```text
//! ρ(y) = ϱ(f(y)) / (f(y)^{n−1} S_f(1))
//! ```
//!
//! and the density of `x` picks up `|det W|`.

use std::f64::consts::LN_2;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{log_surface_area, SphereMeasure};
use crate::polar::{path_log_g, PolarPoint};
use crate::radial::RadialModel;
use crate::special::{beta_inc, ln_beta, ln_gamma};
use crate::stats::{ks_test, KsResult};
use crate::tree::{LpTree, NodeId};

/// Version of the model JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct LpNestedModel {
    tree: LpTree,
    radial: RadialModel,
    w: Option<DMatrix<f64>>,
    w_inv: Option<DMatrix<f64>>,
    mean: Option<Vec<f64>>,
    log_det_w: f64,
    log_surface: f64,
}

impl LpNestedModel {
    pub fn new(tree: LpTree, radial: RadialModel) -> Result<LpNestedModel> {
        radial.validate()?;
        let log_surface = SphereMeasure::of(&tree).log_surface;
        Ok(LpNestedModel {
            tree,
            radial,
            w: None,
            w_inv: None,
            mean: None,
            log_det_w: 0.0,
            log_surface,
        })
    }

    /// Sets the linear part `W`; it must be square, of size `n` and
    /// invertible.
    pub fn with_transform(mut self, w: DMatrix<f64>) -> Result<LpNestedModel> {
        self.set_transform(Some(w))?;
        Ok(self)
    }

    pub fn with_mean(mut self, mean: Vec<f64>) -> Result<LpNestedModel> {
        self.set_mean(Some(mean))?;
        Ok(self)
    }

    pub fn set_transform(&mut self, w: Option<DMatrix<f64>>) -> Result<()> {
        let Some(w) = w else {
            self.w = None;
            self.w_inv = None;
            self.log_det_w = 0.0;
            return Ok(());
        };
        let n = self.tree.n();
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::Data(format!(
                "W must be {n}x{n}, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("W has non-finite entries".into()));
        }
        let lu = w.clone().lu();
        let log_det: f64 = (0..n).map(|i| lu.u()[(i, i)].abs().ln()).sum();
        let inv = lu.try_inverse();
        match inv {
            Some(inv) if log_det.is_finite() => {
                self.w = Some(w);
                self.w_inv = Some(inv);
                self.log_det_w = log_det;
                Ok(())
            }
            _ => Err(Error::Singular("W is not invertible".into())),
        }
    }

    pub fn set_mean(&mut self, mean: Option<Vec<f64>>) -> Result<()> {
        if let Some(m) = &mean {
            check_dim(self.tree.n(), m.len())?;
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("mean has non-finite entries".into()));
            }
        }
        self.mean = mean;
        Ok(())
    }

    pub fn set_radial(&mut self, radial: RadialModel) -> Result<()> {
        radial.validate()?;
        self.radial = radial;
        Ok(())
    }

    /// Replaces the tree; the dimension must not change.
    pub fn set_tree(&mut self, tree: LpTree) -> Result<()> {
        check_dim(self.tree.n(), tree.n())?;
        self.log_surface = SphereMeasure::of(&tree).log_surface;
        self.tree = tree;
        Ok(())
    }

    pub fn tree(&self) -> &LpTree {
        &self.tree
    }

    pub fn radial(&self) -> &RadialModel {
        &self.radial
    }

    pub fn transform_matrix(&self) -> Option<&DMatrix<f64>> {
        self.w.as_ref()
    }

    /// `W⁻¹`, when a transform is set.
    pub fn inverse_transform(&self) -> Option<&DMatrix<f64>> {
        self.w_inv.as_ref()
    }

    pub fn mean(&self) -> Option<&[f64]> {
        self.mean.as_deref()
    }

    pub fn n(&self) -> usize {
        self.tree.n()
    }

    /// `log |det W|` (zero without a transform).
    pub fn log_det_w(&self) -> f64 {
        self.log_det_w
    }

    /// `log S_f(1)`.
    pub fn log_surface(&self) -> f64 {
        self.log_surface
    }

    /// `y = W(x − μ)`.
    pub fn to_latent(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n(), x.len())?;
        let mut y = vec![0.0; x.len()];
        self.to_latent_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn to_latent_into(&self, x: &[f64], y: &mut [f64]) {
        let n = x.len();
        let centered: Vec<f64> = match &self.mean {
            Some(m) => x.iter().zip(m).map(|(a, b)| a - b).collect(),
            None => x.to_vec(),
        };
        match &self.w {
            None => y.copy_from_slice(&centered),
            Some(w) => {
                for i in 0..n {
                    y[i] = (0..n).map(|j| w[(i, j)] * centered[j]).sum();
                }
            }
        }
    }

    /// `x = W⁻¹ y + μ`.
    pub fn from_latent(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n(), y.len())?;
        let n = y.len();
        let mut x: Vec<f64> = match &self.w_inv {
            None => y.to_vec(),
            Some(inv) => (0..n)
                .map(|i| (0..n).map(|j| inv[(i, j)] * y[j]).sum())
                .collect(),
        };
        if let Some(m) = &self.mean {
            x.iter_mut().zip(m).for_each(|(a, b)| *a += b);
        }
        Ok(x)
    }

    /// Density of `y` given its radius `r = f(y)`, in logs.
    pub(crate) fn latent_log_density_at_radius(&self, r: f64) -> f64 {
        radial_over_power(&self.radial, r, self.n() as f64 - 1.0) - self.log_surface
    }

    /// `log ρ(x)`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let y = self.to_latent(x)?;
        let r = self.tree.value(&y)?;
        Ok(self.latent_log_density_at_radius(r) + self.log_det_w)
    }

    /// `log ρ` for every row.
    pub fn log_densities(&self, data: &Dataset) -> Result<Vec<f64>> {
        check_dim(self.n(), data.n())?;
        let mut y = vec![0.0; self.n()];
        let mut scratch = vec![0.0; self.tree.nodes().len()];
        Ok(data
            .rows()
            .map(|x| {
                self.to_latent_into(x, &mut y);
                let r = self.tree.evaluate_into(&y, &mut scratch);
                self.latent_log_density_at_radius(r) + self.log_det_w
            })
            .collect())
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            schema: SCHEMA_VERSION,
            tree: self.tree.to_string(),
            radial: self.radial.clone(),
            w: self.w.as_ref().map(|w| {
                (0..w.nrows())
                    .map(|i| (0..w.ncols()).map(|j| w[(i, j)]).collect())
                    .collect()
            }),
            mean: self.mean.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<LpNestedModel> {
        if file.schema != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "unsupported model schema {} (expected {SCHEMA_VERSION})",
                file.schema
            )));
        }
        let tree = LpTree::parse(&file.tree)?;
        let n = tree.n();
        let mut model = LpNestedModel::new(tree, file.radial)?;
        if let Some(rows) = file.w {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Data(format!("W must be {n}x{n}")));
            }
            model.set_transform(Some(DMatrix::from_fn(n, n, |i, j| rows[i][j])))?;
        }
        model.set_mean(file.mean)?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<LpNestedModel> {
        LpNestedModel::from_file(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LpNestedModel> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Data(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        LpNestedModel::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// On-disk form of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: u32,
    pub tree: String,
    pub radial: RadialModel,
    /// Rows of `W`, or `null` for the identity.
    #[serde(rename = "W")]
    pub w: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
}

/// `log ϱ(r) − k log r`, with the limit at `r = 0` where it exists.
fn radial_over_power(radial: &RadialModel, r: f64, k: f64) -> f64 {
    if r > 0.0 {
        return radial.log_pdf(r) - k * r.ln();
    }
    let limit = |power: f64, at_zero: f64| {
        if power.abs() < 1e-12 {
            at_zero
        } else if power > 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    };
    match radial {
        RadialModel::GammaP { shape, scale, p } => limit(
            shape * p - 1.0 - k,
            p.ln() - ln_gamma(*shape) - shape * scale.ln(),
        ),
        RadialModel::UniformBall { n } => limit(*n as f64 - 1.0 - k, (*n as f64).ln()),
        _ => f64::NEG_INFINITY,
    }
}

/// Log density of the uniform distribution on the unit sphere `{f = 1}` in
/// the coordinates `u_1..u_{n−1}` (the sign of the last coordinate is
/// marginalized).
pub fn uniform_sphere_log_density(tree: &LpTree, point: &PolarPoint) -> Result<f64> {
    if (point.r - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "uniform sphere density needs r = 1, got {}",
            point.r
        )));
    }
    let mut acc = path_log_g(tree, &point.u)? - (tree.n() as f64 - 1.0) * LN_2;
    for &idx in tree.inner_indices() {
        let node = tree.node(idx);
        let p = node.p.expect("inner node");
        acc += (node.children.len() as f64 - 1.0) * p.ln();
        let mut partial = 0.0;
        for (k, &c) in node.children.iter().enumerate() {
            let nk = tree.node(c).leaf_count() as f64;
            if k > 0 {
                acc -= ln_beta(partial / p, nk / p);
            }
            partial += nk;
        }
    }
    Ok(acc)
}

/// Joint log density of the uncollapsed coordinates of `y = W(x − μ)` and
/// the values `v_J` of the collapsed subtrees `J`.
///
/// `x_kept` lists the remaining coordinates in index order and
/// `v_collapsed[k]` belongs to `collapsed[k]`.
pub fn layer_marginal_log_density(
    model: &LpNestedModel,
    x_kept: &[f64],
    v_collapsed: &[f64],
    collapsed: &[NodeId],
) -> Result<f64> {
    let tree = model.tree();
    check_dim(collapsed.len(), v_collapsed.len())?;
    let indices: Vec<usize> = collapsed
        .iter()
        .map(|id| {
            tree.node_index(id)
                .ok_or_else(|| Error::InvalidTree(format!("no node at {id:?}")))
        })
        .collect::<Result<_>>()?;
    if let Some(v) = v_collapsed.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("collapsed node values must be positive, got {v}")));
    }
    let (reduced, origin) = tree.collapse(&indices)?;
    let kept_leaves = origin.iter().filter(|&&o| tree.node(o).is_leaf()).count();
    check_dim(kept_leaves, x_kept.len())?;

    let mut z = Vec::with_capacity(origin.len());
    let mut kept = x_kept.iter();
    for &o in &origin {
        if tree.node(o).is_leaf() {
            z.push(*kept.next().expect("length checked"));
        } else {
            let k = indices.iter().position(|&i| i == o).expect("collapsed node");
            z.push(v_collapsed[k]);
        }
    }
    let f = reduced.value(&z)?;

    // S_f(1) restricted to the inner nodes that survive, with the original
    // leaf counts, and sign factors for the remaining leaves only.
    let mut log_norm = kept_leaves as f64 * LN_2;
    for &ri in reduced.inner_indices() {
        let id = &reduced.node(ri).id;
        let node = tree.node(tree.node_index(id).expect("same path in the original tree"));
        let p = node.p.expect("inner node");
        let gammas: f64 = node
            .children
            .iter()
            .map(|&c| ln_gamma(tree.node(c).leaf_count() as f64 / p))
            .sum();
        log_norm += gammas
            - (node.children.len() as f64 - 1.0) * p.ln()
            - ln_gamma(node.leaf_count() as f64 / p);
    }
    let powers: f64 = indices
        .iter()
        .zip(v_collapsed)
        .map(|(&i, v)| (tree.node(i).leaf_count() as f64 - 1.0) * v.ln())
        .sum();
    Ok(radial_over_power(model.radial(), f, tree.n() as f64 - 1.0) + powers - log_norm)
}

/// Result of testing one root child against its Beta marginal.
#[derive(Clone, Debug)]
pub struct BetaComponent {
    pub child: NodeId,
    pub alpha: f64,
    pub beta: f64,
    pub ks: KsResult,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct DirichletReport {
    pub exponent: f64,
    pub samples: usize,
    pub components: Vec<BetaComponent>,
    pub passed: bool,
}

/// Minimum sample count accepted by the Dirichlet check.
pub const DIRICHLET_MIN_SAMPLES: usize = 10_000;

/// Tests that `(v_k / f)^{p_root}` over the root children follows the
/// Dirichlet law, one Beta marginal at a time (KS at the 1% level).
pub fn root_children_dirichlet_check(model: &LpNestedModel, samples: &Dataset) -> Result<DirichletReport> {
    dirichlet_check_with_exponent(model, samples, model.tree().root_p())
}

/// As [`root_children_dirichlet_check`] with the root exponent replaced by
/// `p` in both the statistic and the reference law.
pub fn dirichlet_check_with_exponent(
    model: &LpNestedModel,
    samples: &Dataset,
    p: f64,
) -> Result<DirichletReport> {
    check_dim(model.n(), samples.n())?;
    if samples.m() < DIRICHLET_MIN_SAMPLES {
        return Err(Error::Data(format!(
            "the Dirichlet check needs at least {DIRICHLET_MIN_SAMPLES} samples, got {}",
            samples.m()
        )));
    }
    let tree = model.tree();
    let root = tree.node(0);
    let n = tree.n() as f64;
    let ell = root.children.len();
    let mut columns = vec![Vec::with_capacity(samples.m()); ell];
    let mut y = vec![0.0; tree.n()];
    let mut values = vec![0.0; tree.nodes().len()];
    for x in samples.rows() {
        model.to_latent_into(x, &mut y);
        let f = tree.evaluate_into(&y, &mut values);
        if f == 0.0 {
            continue;
        }
        for (k, &c) in root.children.iter().enumerate() {
            columns[k].push((values[c] / f).powf(p));
        }
    }
    let components: Vec<BetaComponent> = root
        .children
        .iter()
        .zip(&columns)
        .map(|(&c, col)| {
            let nk = tree.node(c).leaf_count() as f64;
            let (alpha, beta) = (nk / p, (n - nk) / p);
            let ks = ks_test(col, |s| beta_inc(alpha, beta, s.clamp(0.0, 1.0)).unwrap_or(f64::NAN));
            BetaComponent {
                child: tree.node(c).id.clone(),
                alpha,
                beta,
                passed: ks.passes(0.01),
                ks,
            }
        })
        .collect();
    Ok(DirichletReport {
        exponent: p,
        samples: samples.m(),
        passed: components.iter().all(|c| c.passed),
        components,
    })
}

/// `log V_f(1)` of the model's tree; the density of the uniform distribution
/// on the unit ball is `−log V_f(1)`.
pub fn log_unit_volume(tree: &LpTree) -> f64 {
    log_surface_area(tree, 1.0).expect("unit radius") - (tree.n() as f64).ln()
}
