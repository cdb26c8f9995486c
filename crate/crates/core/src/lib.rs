//! L_p-nested symmetric distributions.
//!
//! The crate covers the whole pipeline for densities that depend on the data
//! only through an L_p-nested function `f`: evaluation and gradients of `f`
//! ([`tree`]), the closed-form sphere measure ([`geometry`]), polar-like
//! coordinates ([`polar`]), radial laws ([`radial`]), the joint density and
//! its marginals ([`density`]), exact sampling ([`sampler`]), maximum
//! likelihood fitting ([`fitting`]), nested radial factorization ([`nrf`])
//! and robust location inference ([`bayes`]).

pub mod bayes;
pub mod check;
pub mod data;
pub mod density;
pub mod error;
pub mod fitting;
pub mod geometry;
pub mod nrf;
pub mod polar;
pub mod radial;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod tree;

pub use density::LpNestedModel;
pub use error::{Error, Result};
pub use polar::PolarPoint;
pub use radial::RadialModel;
pub use tree::{LpTree, Node, NodeId, NodeValues};
