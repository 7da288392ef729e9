//! Adaptive control-barrier-function safety filtering for control-affine
//! systems with an unknown, linearly parameterized uncertainty.
//!
//! The pieces compose as follows:
//!
//! * [`estimator`] runs a sliding-window regularized least-squares estimate of
//!   the unknown parameter from integrated regressor samples, together with a
//!   certified, nonincreasing bound on the estimation error.
//! * [`schedule`] turns the sampled estimate and bound into continuously
//!   differentiable signals between samples.
//! * [`cbf`] evaluates the robustified higher-order barrier constraint.
//! * [`controller`] solves the minimum-intervention problem in closed form.
//! * [`plants`] ships the inverted pendulum and differential-drive robot
//!   benchmarks, and [`sim`] closes the loop with a fixed-step integrator.

pub mod cbf;
pub mod config;
pub mod controller;
pub mod error;
pub mod estimator;
pub mod oracle;
pub mod plants;
pub mod plot;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};

/// Dense column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
