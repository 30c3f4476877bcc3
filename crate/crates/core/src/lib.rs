//! Numerical laboratory for two successive-approximation schemes on
//! finite-horizon stochastic control problems in one space dimension.
//!
//! The object of study is the terminal-value problem
//!
//!   v_t + (sigma^2 / 2) v_xx + sup_a [ b(a, t, x) v_x + f(a, t, x) ] = 0,
//!   v(T, x) = g(x),
//!
//! discretized with an implicit upwind scheme on a uniform grid. The crate
//! provides:
//!
//! * a monotone linear solver for fixed-policy problems (`linpde`),
//! * a per-step Howard reference solution of the nonlinear problem
//!   (`hjb_ref`),
//! * the two iterative schemes, policy improvement and gradient iteration,
//!   with full iterate traces (`iterate`),
//! * controlled perturbations of either the PDE solve or the policy update,
//!   for stability experiments (`perturb`),
//! * Monte Carlo cross-checks of policy values by path simulation
//!   (`montecarlo`),
//! * convergence-rate and floor diagnostics plus report assembly
//!   (`diagnostics`).
//!
//! Everything is deterministic for a fixed seed: randomness comes from
//! counter-based generators (`rng`), and parallel reductions preserve
//! sequential order.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod hjb_ref;
pub mod iterate;
pub mod linpde;
pub mod montecarlo;
pub mod perturb;
pub mod problem;
pub mod rng;

pub use error::{Error, Result};
