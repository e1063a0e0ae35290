//! Multi-source domain adaptation via weighted joint-distribution optimal
//! transport.
//!
//! Given labeled samples from several source domains and unlabeled samples
//! from a target domain, the adaptation loop jointly learns a target
//! classifier and a simplex weight vector over the sources by minimizing the
//! Wasserstein distance between the weighted source mixture and the proxy
//! target joint distribution (target features paired with the classifier's
//! own predictions). The recovered weights double as a source-target
//! similarity measure: summing them over a binary grouping of the sources
//! yields per-group scores and a detection rule.
//!
//! Module map:
//! - [`domain`]: shared data types (joint samples, domains, simplex weights).
//! - [`ot`]: discrete optimal transport (joint cost, exact solver,
//!   log-stabilized Sinkhorn, dual potentials).
//! - [`nn`]: small feed-forward models with manual backprop and Adam.
//! - [`adaptation`]: the alternating minimization over classifier and weights.
//! - [`scoring`]: weight-derived group scores, detection, error rates.
//! - [`synthgen`]: seeded synthetic multi-source benchmark scenarios.
//! - [`io`]: dataset/model/report file formats and the trajectory export.
//! - [`experiment`]: the end-to-end experiment runner.

pub mod adaptation;
pub mod domain;
mod error;
pub mod experiment;
pub mod io;
pub mod nn;
pub mod ot;
pub mod scoring;
pub mod synthgen;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
