//! Volume and surface area of L_p-nested spheres.
//!
//! Everything is computed in log space; the measures overflow quickly with
//! the dimension otherwise.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::special::{digamma, ln_beta, ln_gamma};
use crate::tree::LpTree;

/// Log surface area and log volume of the unit sphere `{f = 1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereMeasure {
    pub log_surface: f64,
    pub log_volume: f64,
}

impl SphereMeasure {
    pub fn of(tree: &LpTree) -> SphereMeasure {
        let log_surface = log_unit_surface(tree);
        SphereMeasure {
            log_surface,
            log_volume: log_surface - (tree.n() as f64).ln(),
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("radius must be positive and finite, got {r}")));
    }
    Ok(())
}

fn log_unit_surface(tree: &LpTree) -> f64 {
    let n = tree.n() as f64;
    let mut acc = n * LN_2;
    for &idx in tree.inner_indices() {
        let node = tree.node(idx);
        let p = node.p.expect("inner node");
        let ell = node.children.len() as f64;
        let sum_children: f64 = node
            .children
            .iter()
            .map(|&c| ln_gamma(tree.node(c).leaf_count() as f64 / p))
            .sum();
        acc += sum_children - (ell - 1.0) * p.ln() - ln_gamma(node.leaf_count() as f64 / p);
    }
    acc
}

/// `log S_f(R)`, the surface area of the sphere `{f = R}`, via Gamma ratios.
pub fn log_surface_area(tree: &LpTree, r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok((tree.n() as f64 - 1.0) * r.ln() + log_unit_surface(tree))
}

/// `log S_f(R)` via the product of Beta functions over partial leaf sums.
/// Agrees with [`log_surface_area`] up to rounding.
pub fn log_surface_area_beta(tree: &LpTree, r: f64) -> Result<f64> {
    check_radius(r)?;
    let n = tree.n() as f64;
    let mut acc = (n - 1.0) * r.ln() + n * LN_2;
    for &idx in tree.inner_indices() {
        let node = tree.node(idx);
        let p = node.p.expect("inner node");
        acc -= (node.children.len() as f64 - 1.0) * p.ln();
        let mut partial = 0.0;
        for (k, &c) in node.children.iter().enumerate() {
            let nk = tree.node(c).leaf_count() as f64;
            if k > 0 {
                acc += ln_beta(partial / p, nk / p);
            }
            partial += nk;
        }
    }
    Ok(acc)
}

/// `log V_f(R)`, the volume enclosed by `{f = R}`.
pub fn log_volume(tree: &LpTree, r: f64) -> Result<f64> {
    Ok(log_surface_area(tree, r)? + r.ln() - (tree.n() as f64).ln())
}

/// `∂ log S_f(1) / ∂p_J` for every inner node (pre-order).
pub fn grad_p_log_surface(tree: &LpTree) -> Vec<f64> {
    tree.inner_indices()
        .iter()
        .map(|&idx| {
            let node = tree.node(idx);
            let p = node.p.expect("inner node");
            let p2 = p * p;
            let mut g = -(node.children.len() as f64 - 1.0) / p;
            let mut partial = 0.0;
            for (k, &c) in node.children.iter().enumerate() {
                let nk = tree.node(c).leaf_count() as f64;
                if k > 0 {
                    let next = partial + nk;
                    g += digamma(next / p) * next / p2
                        - digamma(partial / p) * partial / p2
                        - digamma(nk / p) * nk / p2;
                }
                partial += nk;
            }
            g
        })
        .collect()
}
