//! Polar-like coordinates for L_p-nested functions.
//!
//! A nonzero `x` is represented by its radius `r = f(x)`, the normalized
//! first `n − 1` coordinates `u_i = x_i / r` and the sign of the last
//! coordinate. The magnitude of the last normalized coordinate is implied by
//! `f(u) = 1` and is recovered by peeling the tree along the path from the
//! root to the rightmost leaf.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::tree::LpTree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub r: f64,
    /// `x_i / r` for the first `n − 1` coordinates.
    pub u: Vec<f64>,
    /// Sign of the last coordinate, `+1.0` or `-1.0`.
    pub last_sign: f64,
}

pub fn to_polar(tree: &LpTree, x: &[f64]) -> Result<PolarPoint> {
    let r = tree.value(x)?;
    if r == 0.0 {
        return Err(Error::Origin);
    }
    let n = tree.n();
    Ok(PolarPoint {
        r,
        u: x[..n - 1].iter().map(|v| v / r).collect(),
        last_sign: if x[n - 1] < 0.0 { -1.0 } else { 1.0 },
    })
}

pub fn from_polar(tree: &LpTree, point: &PolarPoint) -> Result<Vec<f64>> {
    let (un, _) = peel(tree, &point.u, false)?;
    let mut x: Vec<f64> = point.u.iter().map(|v| v * point.r).collect();
    x.push(point.r * point.last_sign.signum() * un);
    Ok(x)
}

/// `log |det ∂x/∂(r, u)|` of the inverse transform.
pub fn log_jacobian_det(tree: &LpTree, point: &PolarPoint) -> Result<f64> {
    if !(point.r > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {}", point.r)));
    }
    let (_, log_g) = peel(tree, &point.u, true)?;
    Ok((tree.n() as f64 - 1.0) * point.r.ln() + log_g)
}

/// The implied last coordinate `u_n ≥ 0` of a direction.
pub fn implied_last(tree: &LpTree, u: &[f64]) -> Result<f64> {
    Ok(peel(tree, u, false)?.0)
}

/// `Σ log G` along the path to the last leaf.
pub(crate) fn path_log_g(tree: &LpTree, u: &[f64]) -> Result<f64> {
    Ok(peel(tree, u, true)?.1)
}

/// Walks from the root to the rightmost leaf. At node `I` with value `g_I`
/// the rightmost child has `g^{p_I} = g_I^{p_I} − Σ_siblings v^{p_I}` and
/// contributes `log G = (p_child − p_I) log g_child` (leaf exponent one).
/// With `strict`, zero residuals are rejected.
fn peel(tree: &LpTree, u: &[f64], strict: bool) -> Result<(f64, f64)> {
    check_dim(tree.n() - 1, u.len())?;
    let mut full = u.to_vec();
    full.push(0.0);
    let (_, values) = tree.evaluate(&full)?;
    let values = values.as_slice();

    let mut idx = 0;
    let mut ln_g = 0.0_f64;
    let mut log_det = 0.0;
    loop {
        let node = tree.node(idx);
        let Some(p) = node.p else {
            return Ok((ln_g.exp(), log_det));
        };
        let (&last, siblings) = node.children.split_last().expect("inner node");
        let ln_child = if ln_g == f64::NEG_INFINITY {
            if siblings.iter().any(|&c| values[c] > 0.0) {
                return Err(Error::OutsideSphere("direction exceeds the unit sphere".into()));
            }
            f64::NEG_INFINITY
        } else {
            let g = ln_g.exp();
            let s: f64 = siblings.iter().map(|&c| (values[c] / g).powf(p)).sum();
            let rest = 1.0 - s;
            if rest < 0.0 {
                return Err(Error::OutsideSphere(format!(
                    "direction exceeds the unit sphere by {:.3e}",
                    -rest
                )));
            }
            ln_g + rest.ln() / p
        };
        if strict && ln_child == f64::NEG_INFINITY {
            return Err(Error::Boundary);
        }
        let p_child = tree.node(last).p.unwrap_or(1.0);
        if p_child != p {
            log_det += (p_child - p) * ln_child;
        }
        ln_g = ln_child;
        idx = last;
    }
}
