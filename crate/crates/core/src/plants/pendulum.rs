use std::f64::consts::FRAC_PI_4;

use super::{Dims, Plant};
use crate::cbf::SafetySpec;
use crate::{Matrix, Vector};

/// Pendulum constants. State is `[gamma, gamma_dot]`, input is a torque.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub m: f64,
    pub l: f64,
    pub grav: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub theta_star: Vector,
    pub k1: f64,
    pub k2: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            m: 0.01,
            l: 0.15,
            grav: 9.81,
            eps1: 2.0,
            eps2: 2.0,
            theta_star: Vector::from_vec(vec![0.5, 0.35, 0.15, 0.5, 0.25]),
            k1: 50.0,
            k2: 100.0,
        }
    }
}

/// Amplitude of the desired swing relative to the constraint.
const REFERENCE_SCALE: f64 = 0.99 * FRAC_PI_4;

#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub params: PendulumParams,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Self { params }
    }

    fn inertia(&self) -> f64 {
        self.params.m * self.params.l * self.params.l
    }

    /// `f_2(x) = (g / L) sin(gamma)`.
    fn f2(&self, x: &Vector) -> f64 {
        self.params.grav / self.params.l * x[0].sin()
    }

    /// Second row of the regressor: restitution (linear, cubic), Coulomb,
    /// viscous and drag terms.
    fn phi2(&self, x: &Vector) -> [f64; 5] {
        let (gamma, rate) = (x[0], x[1]);
        let s = 1.0 / self.inertia();
        [
            -gamma * s,
            -gamma.powi(3) * s,
            -(rate / self.params.eps1).tanh() * s,
            -rate * s,
            -rate * rate * (rate / self.params.eps2).tanh() * s,
        ]
    }

    /// `(gamma_d, gamma_d', gamma_d'')` with `gamma_d(t) = -0.99 (pi/4) cos t`.
    pub fn reference_trajectory(t: f64) -> (f64, f64, f64) {
        (
            -REFERENCE_SCALE * t.cos(),
            REFERENCE_SCALE * t.sin(),
            REFERENCE_SCALE * t.cos(),
        )
    }
}

impl Plant for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn dims(&self) -> Dims {
        Dims { n: 2, m: 1, p: 5 }
    }

    fn drift(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[1], self.f2(x)])
    }

    fn input_matrix(&self, _x: &Vector) -> Matrix {
        Matrix::from_column_slice(2, 1, &[0.0, 1.0 / self.inertia()])
    }

    fn regressor(&self, x: &Vector) -> Matrix {
        let row = self.phi2(x);
        let mut phi = Matrix::zeros(2, 5);
        for (j, v) in row.into_iter().enumerate() {
            phi[(1, j)] = v;
        }
        phi
    }

    fn theta_star(&self) -> Vector {
        self.params.theta_star.clone()
    }

    /// `m L^2 [ -f_2 - phi_2 theta + gamma_d'' - K1 e - K2 e' ]`.
    fn desired_control(&self, x: &Vector, theta_hat: &Vector, t: f64) -> Vector {
        let (gd, gd_dot, gd_ddot) = Self::reference_trajectory(t);
        let e = x[0] - gd;
        let e_dot = x[1] - gd_dot;
        let compensation: f64 = self.phi2(x).iter().zip(theta_hat.iter()).map(|(a, b)| a * b).sum();
        let accel = -self.f2(x) - compensation + gd_ddot - self.params.k1 * e - self.params.k2 * e_dot;
        Vector::from_element(1, self.inertia() * accel)
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["gamma", "gamma_dot"]
    }

    fn input_names(&self) -> &'static [&'static str] {
        &["u"]
    }

    fn reference_names(&self) -> &'static [&'static str] {
        &["gamma_d", "gamma_dot_d"]
    }

    fn reference(&self, _x: &Vector, t: f64) -> Vec<f64> {
        let (gd, gd_dot, _) = Self::reference_trajectory(t);
        vec![gd, gd_dot]
    }
}

/// `psi_0 = (pi/4)^2 - gamma^2` with `psi_1 = -2 gamma gamma_dot + c_0 psi_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumSafety {
    gains: [f64; 2],
}

impl PendulumSafety {
    pub fn new(c0: f64, c1: f64) -> Self {
        Self { gains: [c0, c1] }
    }
}

impl Default for PendulumSafety {
    fn default() -> Self {
        Self::new(200.0, 200.0)
    }
}

pub fn pendulum_safety() -> PendulumSafety {
    PendulumSafety::default()
}

impl SafetySpec for PendulumSafety {
    fn relative_degree(&self) -> usize {
        2
    }

    fn gains(&self) -> &[f64] {
        &self.gains
    }

    fn chain(&self, x: &Vector) -> Vec<f64> {
        let psi0 = FRAC_PI_4 * FRAC_PI_4 - x[0] * x[0];
        vec![psi0, -2.0 * x[0] * x[1] + self.gains[0] * psi0]
    }

    fn grad_psi_top(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![-2.0 * x[1] - 2.0 * self.gains[0] * x[0], -2.0 * x[0]])
    }
}
