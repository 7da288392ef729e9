//! Benchmark plants of the form `x' = f(x) + phi(x) theta_* + g(x) u`.

mod pendulum;
mod robot;

pub use pendulum::{pendulum_safety, Pendulum, PendulumParams, PendulumSafety};
pub use robot::{robot_safety, Obstacle, Robot, RobotParams, RobotSafety};

use crate::{Matrix, Vector};

/// State, input and parameter dimensions `(n, m, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

/// Control-affine plant with a linearly parameterized uncertainty.
pub trait Plant: Send + Sync {
    fn name(&self) -> &'static str;

    fn dims(&self) -> Dims;

    /// Known drift `f(x)`.
    fn drift(&self, x: &Vector) -> Vector;

    /// Input matrix `g(x)`, `n x m`.
    fn input_matrix(&self, x: &Vector) -> Matrix;

    /// Regressor `phi(x)`, `n x p`.
    fn regressor(&self, x: &Vector) -> Matrix;

    /// Parameter used to simulate the plant. Never visible to the controller.
    fn theta_star(&self) -> Vector;

    /// Performance controller parameterized by an estimate.
    fn desired_control(&self, x: &Vector, theta_hat: &Vector, t: f64) -> Vector;

    fn state_names(&self) -> &'static [&'static str];

    fn input_names(&self) -> &'static [&'static str];

    /// Names of the reference signals returned by [`Plant::reference`].
    fn reference_names(&self) -> &'static [&'static str] {
        &[]
    }

    /// Desired trajectory values at `(x, t)`, logged next to the state.
    fn reference(&self, _x: &Vector, _t: f64) -> Vec<f64> {
        Vec::new()
    }

    fn dynamics(&self, x: &Vector, u: &Vector, theta: &Vector) -> Vector {
        let mut dx = self.drift(x);
        dx.gemv(1.0, &self.regressor(x), theta, 1.0);
        dx.gemv(1.0, &self.input_matrix(x), u, 1.0);
        dx
    }
}
