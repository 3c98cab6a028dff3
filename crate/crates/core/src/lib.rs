//! Projected Euler integration of semi-linear SDEs with superlinearly growing
//! coefficients, pull-back approximation of random periodic solutions, and
//! Monte Carlo strong-convergence experiments.
//!
//! Modules:
//! - [`model`]: problem definitions, assumption constants, step-size windows.
//! - [`wiener`]: reproducible Brownian paths with coarsening and Wiener shift.
//! - [`scheme`]: projection map, projected Euler and Euler-Maruyama steps.
//! - [`pullback`]: pull-back limit, contraction of initial values, periodicity.
//! - [`harness`]: convergence and moment experiments, rate fits, CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod model;
pub mod parallel;
pub mod pullback;
pub mod scheme;
pub mod wiener;

pub use error::{Error, Result};
pub use model::{SchemeConstants, SdeModel};
pub use scheme::{SchemeConfig, SchemeKind, Trajectory};
pub use wiener::{BrownianPath, GridSpec};
