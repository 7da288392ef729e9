use super::{Dims, Plant};
use crate::cbf::{softmin_with_weights, SafetySpec};
use crate::{Matrix, Vector};

/// Circular obstacle in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Differential-drive robot constants. State is
/// `[q_x, q_y, gamma, v, omega]` for the tip position, heading, and linear and
/// angular velocity; inputs are the right and left motor voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotParams {
    pub k_m: f64,
    pub r: f64,
    pub l: f64,
    pub l_d: f64,
    pub r_a: f64,
    pub mass: f64,
    pub inertia: f64,
    pub grav: f64,
    /// `[k_b1, k_b2, epsilon, kappa]`: back-EMF constants, friction, incline.
    pub theta_star: Vector,
    pub mu1: f64,
    pub mu2: f64,
    pub k1: f64,
    pub k2: f64,
    pub obstacles: Vec<Obstacle>,
    pub rho: f64,
    pub goal: [f64; 2],
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            k_m: 0.1,
            r: 0.1,
            l: 0.5,
            l_d: 0.25,
            r_a: 0.27,
            mass: 10.0,
            inertia: 0.83,
            grav: 9.81,
            theta_star: Vector::from_vec(vec![0.0487, 0.0487, 0.025, 0.5]),
            mu1: 0.08,
            mu2: 0.08,
            k1: 10.0,
            k2: 10.0,
            obstacles: vec![
                Obstacle {
                    center: [0.65, 0.8],
                    radius: 0.5,
                },
                Obstacle {
                    center: [1.95, 1.75],
                    radius: 0.35,
                },
            ],
            rho: 3.0,
            goal: [2.56, 1.8],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Robot {
    pub params: RobotParams,
}

/// Tracking errors and their time derivatives along the kinematics.
#[derive(Debug, Clone, Copy)]
struct Errors {
    e1: f64,
    e2: f64,
    e1_dot: f64,
    e2_dot: f64,
}

impl Robot {
    pub fn new(params: RobotParams) -> Self {
        Self { params }
    }

    /// Wheel speeds `(omega_r, omega_l)`.
    fn wheel_speeds(&self, x: &Vector) -> (f64, f64) {
        let p = &self.params;
        let (v, w) = (x[3], x[4]);
        ((2.0 * v + p.l * w) / (2.0 * p.r), (2.0 * v - p.l * w) / (2.0 * p.r))
    }

    fn phi_rows(&self, x: &Vector) -> ([f64; 4], [f64; 4]) {
        let p = &self.params;
        let (wr, wl) = self.wheel_speeds(x);
        let lin = p.mass * p.r;
        let ang = p.inertia * p.r;
        (
            [
                -p.k_m * wr / (lin * p.r_a),
                -p.k_m * wl / (lin * p.r_a),
                -wr / lin - wl / lin,
                -p.grav * x[2].sin(),
            ],
            [
                -p.k_m * p.l * wr / (ang * p.r_a),
                p.k_m * p.l * wl / (ang * p.r_a),
                -wr * p.l / ang + wl * p.l / ang,
                0.0,
            ],
        )
    }

    /// Input gains `k_m / (m r R_a)` and `k_m l / (I r R_a)`.
    fn input_gains(&self) -> (f64, f64) {
        let p = &self.params;
        (p.k_m / (p.mass * p.r * p.r_a), p.k_m * p.l / (p.inertia * p.r * p.r_a))
    }

    fn errors(&self, x: &Vector) -> Errors {
        let p = &self.params;
        let (dx, dy) = (x[0] - p.goal[0], x[1] - p.goal[1]);
        let (s, c) = x[2].sin_cos();
        let (v, w) = (x[3], x[4]);
        let e1 = dx * c + dy * s;
        let e2 = -dx * s + dy * c;
        Errors {
            e1,
            e2,
            e1_dot: v + w * e2,
            e2_dot: p.l_d * w - w * e1,
        }
    }

    /// Desired linear and angular velocity `(v_d, omega_d)`.
    pub fn desired_velocities(&self, x: &Vector) -> (f64, f64) {
        let p = &self.params;
        let e = self.errors(x);
        (
            -(p.mu1 + p.mu2) * x[3] - (1.0 + p.mu1 * p.mu2) * e.e1 + p.mu1 * p.mu1 / p.l_d * e.e2 * e.e2,
            -p.mu1 / p.l_d * e.e2,
        )
    }

    /// Acceleration commands `(u_d1, u_d2)` before mixing into voltages.
    pub fn acceleration_commands(&self, x: &Vector, theta_hat: &Vector) -> (f64, f64) {
        let p = &self.params;
        let e = self.errors(x);
        let (v_d, w_d) = self.desired_velocities(x);
        let (phi4, phi5) = self.phi_rows(x);
        let dot = |row: &[f64; 4]| row.iter().zip(theta_hat.iter()).map(|(a, b)| a * b).sum::<f64>();
        let e_a = x[3] - v_d;
        let e_b = x[4] - w_d;
        let ud1 = -dot(&phi4)
            + (2.0 * p.mu1 * p.mu1 / p.l_d * e.e2 * e.e2_dot
                - (1.0 + p.mu1 * p.mu2) * e.e1_dot
                - p.k1 * e_a)
                / (1.0 + p.mu1 + p.mu2);
        let ud2 = -dot(&phi5) - p.mu1 / p.l_d * e.e2_dot - p.k2 * e_b;
        (ud1, ud2)
    }
}

impl Plant for Robot {
    fn name(&self) -> &'static str {
        "robot"
    }

    fn dims(&self) -> Dims {
        Dims { n: 5, m: 2, p: 4 }
    }

    fn drift(&self, x: &Vector) -> Vector {
        let l_d = self.params.l_d;
        let (s, c) = x[2].sin_cos();
        let (v, w) = (x[3], x[4]);
        Vector::from_vec(vec![v * c - l_d * w * s, v * s + l_d * w * c, w, 0.0, 0.0])
    }

    fn input_matrix(&self, _x: &Vector) -> Matrix {
        let (a, b) = self.input_gains();
        let mut g = Matrix::zeros(5, 2);
        g[(3, 0)] = a;
        g[(3, 1)] = a;
        g[(4, 0)] = b;
        g[(4, 1)] = -b;
        g
    }

    fn regressor(&self, x: &Vector) -> Matrix {
        let (phi4, phi5) = self.phi_rows(x);
        let mut phi = Matrix::zeros(5, 4);
        for j in 0..4 {
            phi[(3, j)] = phi4[j];
            phi[(4, j)] = phi5[j];
        }
        phi
    }

    fn theta_star(&self) -> Vector {
        self.params.theta_star.clone()
    }

    fn desired_control(&self, x: &Vector, theta_hat: &Vector, _t: f64) -> Vector {
        let p = &self.params;
        let (ud1, ud2) = self.acceleration_commands(x, theta_hat);
        let lin = p.mass * p.r * p.r_a / (2.0 * p.k_m) * ud1;
        let ang = p.inertia * p.r * p.r_a / (2.0 * p.k_m * p.l) * ud2;
        Vector::from_vec(vec![lin + ang, lin - ang])
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["q_x", "q_y", "gamma", "v", "omega"]
    }

    fn input_names(&self) -> &'static [&'static str] {
        &["u_r", "u_l"]
    }

    fn reference_names(&self) -> &'static [&'static str] {
        &["q_dx", "q_dy", "v_d", "omega_d"]
    }

    fn reference(&self, x: &Vector, _t: f64) -> Vec<f64> {
        let (v_d, w_d) = self.desired_velocities(x);
        vec![self.params.goal[0], self.params.goal[1], v_d, w_d]
    }
}

/// Soft-minimum of the inflated obstacle clearances, with
/// `psi_1 = L_f psi_0 + c_0 psi_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotSafety {
    l_d: f64,
    obstacles: Vec<Obstacle>,
    rho: f64,
    gains: [f64; 2],
}

pub fn robot_safety(params: &RobotParams) -> RobotSafety {
    RobotSafety::new(params, 5.0, 2.0)
}

/// Soft-minimum value, its planar gradient and Hessian.
struct Softmin {
    value: f64,
    grad: [f64; 2],
    hess: [[f64; 2]; 2],
}

impl RobotSafety {
    pub fn new(params: &RobotParams, c0: f64, c1: f64) -> Self {
        Self {
            l_d: params.l_d,
            obstacles: params.obstacles.clone(),
            rho: params.rho,
            gains: [c0, c1],
        }
    }

    /// Clearance `h_i = |q - c_i|^2 / 2 - (R_i + l_d)^2 / 2` for each obstacle.
    pub fn clearances(&self, x: &Vector) -> Vec<f64> {
        self.obstacles
            .iter()
            .map(|o| {
                let dx = x[0] - o.center[0];
                let dy = x[1] - o.center[1];
                0.5 * (dx * dx + dy * dy) - 0.5 * (o.radius + self.l_d).powi(2)
            })
            .collect()
    }

    fn softmin(&self, x: &Vector) -> Softmin {
        let h = self.clearances(x);
        let (value, w) = softmin_with_weights(&h, self.rho).expect("robot safety has obstacles and rho > 0");
        // grad h_i = q - c_i; gradient of the soft-minimum is the weighted mean.
        let grads: Vec<[f64; 2]> = self
            .obstacles
            .iter()
            .map(|o| [x[0] - o.center[0], x[1] - o.center[1]])
            .collect();
        let mut grad = [0.0; 2];
        for (wi, gi) in w.iter().zip(&grads) {
            grad[0] += wi * gi[0];
            grad[1] += wi * gi[1];
        }
        // Hessian: I - rho (sum w_i g_i g_i^T - grad grad^T).
        let mut hess = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let second: f64 = w.iter().zip(&grads).map(|(wi, gi)| wi * gi[a] * gi[b]).sum();
                hess[a][b] = f64::from(u8::from(a == b)) - self.rho * (second - grad[a] * grad[b]);
            }
        }
        Softmin { value, grad, hess }
    }
}

impl SafetySpec for RobotSafety {
    fn relative_degree(&self) -> usize {
        2
    }

    fn gains(&self) -> &[f64] {
        &self.gains
    }

    fn chain(&self, x: &Vector) -> Vec<f64> {
        let sm = self.softmin(x);
        let (s, c) = x[2].sin_cos();
        let (v, w) = (x[3], x[4]);
        let qdot = [v * c - self.l_d * w * s, v * s + self.l_d * w * c];
        let lf = sm.grad[0] * qdot[0] + sm.grad[1] * qdot[1];
        vec![sm.value, lf + self.gains[0] * sm.value]
    }

    fn grad_psi_top(&self, x: &Vector) -> Vector {
        let sm = self.softmin(x);
        let (s, c) = x[2].sin_cos();
        let (v, w) = (x[3], x[4]);
        let l_d = self.l_d;
        let qdot = [v * c - l_d * w * s, v * s + l_d * w * c];
        let qdot_gamma = [-v * s - l_d * w * c, v * c - l_d * w * s];
        let g = sm.grad;
        let c0 = self.gains[0];
        Vector::from_vec(vec![
            sm.hess[0][0] * qdot[0] + sm.hess[0][1] * qdot[1] + c0 * g[0],
            sm.hess[1][0] * qdot[0] + sm.hess[1][1] * qdot[1] + c0 * g[1],
            g[0] * qdot_gamma[0] + g[1] * qdot_gamma[1],
            g[0] * c + g[1] * s,
            l_d * (-g[0] * s + g[1] * c),
        ])
    }
}
