//! Numerical toolkit for a one-phase Stefan free-boundary model of *Wolbachia*
//! invasion in mosquito populations.
//!
//! The model couples an infected density `u` on a moving domain `0 < x < h(t)`
//! with an uninfected density `v` on the half line:
//!
//! ```text
//! u_t = d1 u_xx + u [ b1(x) - δ1 (u + v) ],          0 < x < h(t)
//! v_t = d2 v_xx + v [ b2(x) v/(u+v) - δ2 (u + v) ],  x > 0
//! u_x(t,0) = v_x(t,0) = 0,   u(t,h(t)) = 0
//! h'(t) = -μ u_x(t, h(t))                      (Stefan condition)
//! ```
//!
//! The `v/(u+v)` factor encodes cytoplasmic incompatibility: infected males
//! sterilize uninfected females, so the uninfected birth rate is suppressed by
//! the infected share of the population.
//!
//! Every solution either *spreads* (`h(t) → ∞`, infection takes over) or
//! *vanishes* (`h` stays bounded, infection dies out). The crate provides:
//!
//! - [`pde`]: a front-fixing finite-difference solver for the coupled system
//!   and a spreading/vanishing classifier,
//! - [`eigen`]: principal eigenvalues of `-d φ'' - b(x) φ = λ φ` with
//!   Neumann–Dirichlet conditions, and the threshold roots (critical
//!   diffusivity, critical habitat size, empirical Stefan-coefficient
//!   thresholds) whose signs decide the dichotomy,
//! - [`semiwave`]: the semi-wave speed `β₀` with `μ U'(0) = β₀`, bounding the
//!   asymptotic front speed,
//! - [`ode`]: the well-mixed compartment models the PDE system is derived
//!   from,
//! - [`model`]: parameters, birth-rate fields, initial data, and closed-form
//!   derived quantities,
//! - [`cli`]: a batch front end with JSON configs and CSV/JSON outputs.

// Validation throughout uses `!(x > 0.0)` rather than `x <= 0.0`: the negated
// form also rejects NaN, which the suggested rewrite would wave through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod eigen;
pub mod model;
pub mod ode;
pub mod pde;
pub mod semiwave;

/// Identifies the discretization scheme; bumped whenever any numerical
/// behavior changes, so archived run manifests stay comparable.
pub const SCHEME_VERSION: &str = "wolfront/fd-1.0.0";
