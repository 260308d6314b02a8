//! Closed-form 3D localization of a mobile user from hybrid measurements
//! collected at a set of fixed anchors: azimuth/elevation angles of arrival
//! at each reflecting surface plus range differences referenced to the
//! direct base-station path.
//!
//! The estimator rewrites the nonlinear geometry as a pseudolinear system in
//! the augmented unknown `u = [q; R_BU]` (position plus reference range),
//! solves it by iteratively reweighted least squares, refines the result
//! through a second weighted stage operating on the squared coordinate
//! offsets, and recovers the position by a sign/square-root map. A companion
//! module predicts the estimator's bias to second order in the measurement
//! noise, and an experiment harness validates the prediction by seeded,
//! reproducible Monte Carlo sweeps.
//!
//! Module map:
//! - [`geometry`]: noise-free angles, ranges, and range differences.
//! - [`measurement`]: Gaussian error model, covariance assembly, synthesis.
//! - [`estimator`]: pseudolinear system assembly and the two-stage solver.
//! - [`baseline`]: AOA-only unweighted least-squares comparison algorithm.
//! - [`bias`]: second-order bias and covariance predictor.
//! - [`experiments`]: Monte Carlo sweep runner and metric aggregation.

pub mod baseline;
pub mod bias;
mod error;
pub mod estimator;
pub mod experiments;
pub mod geometry;
pub mod measurement;

pub use error::{Error, Result};
