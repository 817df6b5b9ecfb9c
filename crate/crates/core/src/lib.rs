//! Multi-object tracking with the generalized labeled multi-Bernoulli (GLMB)
//! filter, truncated by linear-complexity Gibbs sampling.
//!
//! - [`assignment`]: association maps, cost matrices and an exhaustive
//!   oracle for the assignment distribution.
//! - [`gibbs`]: the tempered, random-scan, deterministic-scan and systematic
//!   samplers, plus `O(PM)` / `O(P^2 M)` reference baselines.
//! - [`models`]: linear-Gaussian single-object models and Kalman steps.
//! - [`glmb`]: the joint predict/update recursion and state extraction.
//! - [`scenario`] and [`metrics`]: simulation and OSPA / OSPA(2).
//! - [`config`], [`experiment`] and [`bench`]: Monte Carlo studies and
//!   kernel timing.

pub mod assignment;
pub mod bench;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod glmb;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
