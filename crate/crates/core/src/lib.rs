//! Landscape analysis toolkit for non-convex objectives.
//!
//! The crate bundles four problem families (a sigmoid generalized linear
//! model, rank-1 PCA, rank-1 matrix completion and orthogonal fourth-order
//! tensor decomposition) behind one [`Objective`] trait with exact gradients
//! and dense Hessians, plus the machinery needed to check landscape claims
//! about them numerically:
//!
//! - [`derivative`]: central finite-difference oracles for gradients/Hessians.
//! - [`sphere`]: tangent projection, Riemannian gradient/Hessian, retraction.
//! - [`optimizers`]: gradient descent, perturbed gradient descent, Riemannian
//!   ascent and a geometric-decay fit.
//! - [`certifier`]: point classification, condition probes, analytic
//!   stationary-point oracles and matrix-completion checks.
//! - [`generators`]: seeded instance generation.
//! - [`experiment`]: config-driven experiment runner writing JSON/CSV reports.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certifier;
pub mod derivative;
pub mod error;
pub mod experiment;
pub mod generators;
pub mod linalg;
pub mod objectives;
pub mod optimizers;
pub mod rng;
pub mod sphere;

pub use error::{Error, Result};
pub use objectives::Objective;

/// Dense column vector used for every point in the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for Hessians and data.
pub type Matrix = nalgebra::DMatrix<f64>;
