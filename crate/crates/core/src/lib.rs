//! Interacting particle systems under overdamped Langevin dynamics and their
//! Random Batch Method (RBM) approximation.
//!
//! The crate is organised around the pieces needed to study the long-time
//! behaviour of the two dynamics side by side:
//!
//! * [`forces`]: drift and interaction fields, full and batched force sums,
//!   curvature profiles `κ(r)` and assumption checks.
//! * [`distance`]: the concave distance function `f(r)` used to measure
//!   contraction, with its constants `R₀, R₁, η, c₀, φ₀`.
//! * [`dynamics`]: Euler–Maruyama integration of the full system (IPS) and the
//!   random batch system (RB–IPS), batch partitioning and ensembles.
//! * [`coupling`]: mixed reflection/synchronous couplings and contraction runs.
//! * [`metrics`]: transport distances, strong error, moments and a quadrature
//!   oracle for the explicit invariant measure of small gradient systems.
//! * [`experiments`]: config-driven experiment runners used by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod distance;
pub mod dynamics;
mod error;
pub mod experiments;
pub mod forces;
pub mod metrics;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
