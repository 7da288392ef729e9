//! Fixed-step closed loop: RK4 plant integration, zero-order-hold control,
//! and estimator updates on the sample grid.
//!
//! Time is an integer count of ODE substeps. The control period is a whole
//! number of substeps and the sample period a whole number of control
//! periods, so sample boundaries always land on a control tick.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::cbf::{self, SafetySpec};
use crate::controller::{self, ControllerParams};
use crate::estimator::{nu0_from_box, Estimator, EstimatorConfig, RegressorSample};
use crate::plants::Plant;
use crate::schedule::{BlendFunction, Schedule};
use crate::{Error, Matrix, Result, Vector};

/// Which estimate feeds the barrier constraint and the desired control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    /// Constraint and desired control both use the adaptive schedule.
    Case1,
    /// Constraint uses the schedule, desired control keeps the initial estimate.
    Case2,
    /// Constraint keeps `(theta_0, nu_0)`, desired control uses the schedule.
    Case3,
}

impl Case {
    pub fn number(self) -> u8 {
        match self {
            Case::Case1 => 1,
            Case::Case2 => 2,
            Case::Case3 => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Case::Case1),
            2 => Some(Case::Case2),
            3 => Some(Case::Case3),
            _ => None,
        }
    }

    fn adaptive_constraint(self) -> bool {
        self != Case::Case3
    }

    fn adaptive_desired(self) -> bool {
        self != Case::Case2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_end: f64,
    pub ode_dt: f64,
    pub ctrl_hz: f64,
    pub sample_dt: f64,
    pub case: Case,
    pub x0: Vector,
    /// Blend rate of the estimate schedule.
    pub eta: f64,
    /// Initial bound; the parameter-box supremum when `None`.
    pub nu0: Option<f64>,
    /// Carried through to the resolved config; the loop itself draws no
    /// random numbers.
    pub seed: u64,
}

/// Substep counts derived from a [`SimConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickPlan {
    pub substeps_per_ctrl: u64,
    pub ctrl_per_sample: u64,
    pub ctrl_ticks: u64,
}

fn whole_ratio(num: f64, den: f64, what: &str) -> Result<u64> {
    let r = num / den;
    let n = r.round();
    if !(n >= 1.0) || (r - n).abs() > 1e-9 * n {
        return Err(Error::InvalidSim(format!("{what} must be a whole multiple, ratio is {r}")));
    }
    Ok(n as u64)
}

impl SimConfig {
    pub fn plan(&self) -> Result<TickPlan> {
        for (name, v) in [("ode_dt", self.ode_dt), ("ctrl_hz", self.ctrl_hz), ("sample_dt", self.sample_dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidSim(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidSim(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        let ctrl_dt = 1.0 / self.ctrl_hz;
        let substeps_per_ctrl = whole_ratio(ctrl_dt, self.ode_dt, "control period / ode_dt")?;
        let ctrl_per_sample = whole_ratio(self.sample_dt, ctrl_dt, "sample_dt / control period")?;
        let ticks = self.t_end * self.ctrl_hz;
        let ctrl_ticks = ticks.round();
        if (ticks - ctrl_ticks).abs() > 1e-9 * ctrl_ticks.max(1.0) {
            return Err(Error::InvalidSim(format!(
                "t_end = {} is not a whole number of control periods",
                self.t_end
            )));
        }
        Ok(TickPlan {
            substeps_per_ctrl,
            ctrl_per_sample,
            ctrl_ticks: ctrl_ticks as u64,
        })
    }
}

/// Running integrals of `phi(x)` and of `f(x) + g(x) u` over one sample
/// interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub phi: Matrix,
    pub drive: Vector,
}

impl Quadrature {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            phi: Matrix::zeros(n, p),
            drive: Vector::zeros(n),
        }
    }
}

/// One RK4 substep of the true plant. The regressor and known-drive
/// integrals advance with the same stage points and weights as the state,
/// so `x_end - x_start - drive` equals `phi theta_*` up to rounding.
/// Returns the new state.
pub fn accumulate_quadrature(running: &mut Quadrature, x: &Vector, u: &Vector, plant: &dyn Plant, dt: f64) -> Vector {
    let theta_star = plant.theta_star();
    let stage = |z: &Vector| {
        let phi = plant.regressor(z);
        let mut known = plant.drift(z);
        known.gemv(1.0, &plant.input_matrix(z), u, 1.0);
        let mut dz = known.clone();
        dz.gemv(1.0, &phi, &theta_star, 1.0);
        (dz, phi, known)
    };
    let (k1, p1, d1) = stage(x);
    let (k2, p2, d2) = stage(&(x + &k1 * (0.5 * dt)));
    let (k3, p3, d3) = stage(&(x + &k2 * (0.5 * dt)));
    let (k4, p4, d4) = stage(&(x + &k3 * dt));
    let w = dt / 6.0;
    running.phi += (p1 + p2 * 2.0 + p3 * 2.0 + p4) * w;
    running.drive += (d1 + d2 * 2.0 + d3 * 2.0 + d4) * w;
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * w
}

/// One logged control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub u_d: Vec<f64>,
    pub reference: Vec<f64>,
    /// `psi_0 .. psi_{d-1}`.
    pub chain: Vec<f64>,
    pub psi: f64,
    pub omega: f64,
    pub q: f64,
    pub lambda: f64,
    pub delta: f64,
    /// Scheduled estimate `theta(t)` and bound `nu(t)`.
    pub theta: Vec<f64>,
    pub nu: f64,
    pub theta_err: f64,
}

/// One estimator update, producing `(theta_k, nu_k)` at `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRow {
    pub k: usize,
    pub t: f64,
    pub theta: Vec<f64>,
    pub nu: f64,
    pub tau: f64,
    pub lambda_min_omega: f64,
    pub lambda_max_p: f64,
    pub omega_eigenvalues: Vec<f64>,
    pub theta_err: f64,
    /// `||y - Phi theta_*||` for the newest sample.
    pub residual: f64,
    /// `||Phi theta_*||` for the newest sample.
    pub phi_theta_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub plant: String,
    pub case: Case,
    pub columns: Vec<String>,
    pub rows: Vec<LogRow>,
    pub estimator_rows: Vec<EstimatorRow>,
    /// Schedule as it stood at the end of the run.
    pub schedule: Schedule,
    pub theta_star: Vec<f64>,
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn push_all(line: &mut String, vals: &[f64]) {
    for v in vals {
        line.push(',');
        line.push_str(&format_f64(*v));
    }
}

impl TrajectoryLog {
    /// Index of a named column.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of a named column, one per row.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r.values()[i]).collect())
    }

    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let vals = row.values();
            let mut line = format_f64(vals[0]);
            push_all(&mut line, &vals[1..]);
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn estimator_columns(&self, debug: bool) -> Vec<String> {
        let p = self.theta_star.len();
        let mut cols = vec!["k".to_string(), "t".to_string()];
        cols.extend((0..p).map(|i| format!("theta{i}")));
        cols.extend(
            ["nu", "tau", "lambda_min_omega", "theta_err", "residual", "phi_theta_norm"]
                .iter()
                .map(|s| s.to_string()),
        );
        if debug {
            cols.push("lambda_max_p".to_string());
            cols.extend((0..p).map(|i| format!("omega_eig{i}")));
        }
        cols
    }

    /// Per-sample estimator log. `debug` adds `lambda_max(P)` and the full
    /// spectrum of the window information matrix.
    pub fn write_estimator_csv(&self, mut out: impl Write, debug: bool) -> io::Result<()> {
        writeln!(out, "{}", self.estimator_columns(debug).join(","))?;
        for r in &self.estimator_rows {
            let mut line = String::new();
            write!(line, "{},{}", r.k, format_f64(r.t)).expect("writing to a String");
            push_all(&mut line, &r.theta);
            push_all(
                &mut line,
                &[r.nu, r.tau, r.lambda_min_omega, r.theta_err, r.residual, r.phi_theta_norm],
            );
            if debug {
                push_all(&mut line, &[r.lambda_max_p]);
                push_all(&mut line, &r.omega_eigenvalues);
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Largest relative regression residual `||y - Phi theta_*|| / (1 + ||Phi theta_*||)`.
    pub fn max_relative_residual(&self) -> f64 {
        self.estimator_rows
            .iter()
            .map(|r| r.residual / (1.0 + r.phi_theta_norm))
            .fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.estimator_rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

impl LogRow {
    /// Flattened values in column order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(16 + self.x.len() + self.theta.len());
        v.push(self.t);
        v.extend(&self.x);
        v.extend(&self.u);
        v.extend(&self.u_d);
        v.extend(&self.reference);
        v.extend(&self.chain);
        v.extend([self.psi, self.omega, self.q, self.lambda, self.delta]);
        v.extend(&self.theta);
        v.extend([self.nu, self.theta_err]);
        v
    }
}

fn columns(plant: &dyn Plant, d: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend(plant.state_names().iter().map(|s| s.to_string()));
    cols.extend(plant.input_names().iter().map(|s| s.to_string()));
    cols.extend(plant.input_names().iter().map(|s| format!("{s}_d")));
    cols.extend(plant.reference_names().iter().map(|s| s.to_string()));
    cols.extend((0..d).map(|i| format!("psi{i}")));
    cols.extend(["psi", "omega", "q", "lambda", "delta"].iter().map(|s| s.to_string()));
    cols.extend((0..plant.dims().p).map(|i| format!("theta{i}")));
    cols.push("nu".to_string());
    cols.push("theta_err".to_string());
    cols
}

/// Runs one closed-loop scenario and returns the full log.
pub fn run(
    plant: &dyn Plant,
    safety: &dyn SafetySpec,
    ctrl: &ControllerParams,
    est_cfg: &EstimatorConfig,
    sim: &SimConfig,
) -> Result<TrajectoryLog> {
    let plan = sim.plan()?;
    let dims = plant.dims();
    if sim.x0.len() != dims.n {
        return Err(Error::Dimension(format!(
            "x0 has length {}, plant state has {}",
            sim.x0.len(),
            dims.n
        )));
    }
    if est_cfg.p() != dims.p {
        return Err(Error::Dimension(format!(
            "estimator has {} parameters, plant has {}",
            est_cfg.p(),
            dims.p
        )));
    }
    let chain0 = safety.chain(&sim.x0);
    if chain0.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::UnsafeInitialState(chain0));
    }

    let nu0 = match sim.nu0 {
        Some(v) => v,
        None => nu0_from_box(est_cfg)?,
    };
    let mut estimator = Estimator::with_nu0(est_cfg, dims.n, nu0)?;
    let theta0 = est_cfg.theta0.clone();
    let theta_star = plant.theta_star();
    let mut schedule = Schedule::new(BlendFunction::new(sim.eta)?, 0.0, theta0.clone(), nu0);

    let dt = sim.ode_dt;
    let substeps_per_sample = plan.substeps_per_ctrl * plan.ctrl_per_sample;
    let time_of = |substep: u64| substep as f64 * dt;
    schedule.set_interval_end(time_of(substeps_per_sample))?;

    let gain_top = safety.top_gain();
    let mut rows = Vec::with_capacity(plan.ctrl_ticks as usize + 1);
    let mut estimator_rows = Vec::new();
    let mut x = sim.x0.clone();
    let mut x_sample_start = x.clone();
    let mut quad = Quadrature::zeros(dims.n, dims.p);

    for tick in 0..=plan.ctrl_ticks {
        let substep = tick * plan.substeps_per_ctrl;
        let t = time_of(substep);

        if tick > 0 && tick % plan.ctrl_per_sample == 0 {
            let done = std::mem::replace(&mut quad, Quadrature::zeros(dims.n, dims.p));
            let y = &x - &x_sample_start - &done.drive;
            let phi_theta = &done.phi * &theta_star;
            let residual = (&y - &phi_theta).norm();
            let report = estimator.step(RegressorSample::new(done.phi, y)?)?;
            schedule.push(t, estimator.theta().clone(), estimator.nu())?;
            schedule.set_interval_end(time_of(substep + substeps_per_sample))?;
            estimator_rows.push(EstimatorRow {
                k: report.k + 1,
                t,
                theta: estimator.theta().iter().copied().collect(),
                nu: estimator.nu(),
                tau: report.tau,
                lambda_min_omega: report.lambda_min_omega,
                lambda_max_p: report.lambda_max_p,
                omega_eigenvalues: report.omega_eigenvalues.iter().copied().collect(),
                theta_err: (estimator.theta() - &theta_star).norm(),
                residual,
                phi_theta_norm: phi_theta.norm(),
            });
            x_sample_start = x.clone();
        }

        let (theta_t, nu_t) = schedule.eval(t)?;
        let (theta_cbf, nu_cbf) = if sim.case.adaptive_constraint() {
            (theta_t.clone(), nu_t)
        } else {
            (theta0.clone(), nu0)
        };
        let theta_des = if sim.case.adaptive_desired() { &theta_t } else { &theta0 };

        let u_d = plant.desired_control(&x, theta_des, t);
        let terms = cbf::terms(safety, plant, &x)?;
        let h = ctrl.weight_at(&x, &theta_cbf);
        let decision = controller::solve(&terms, &theta_cbf, nu_cbf, &u_d, &h, ctrl.beta, gain_top)?;

        rows.push(LogRow {
            t,
            x: x.iter().copied().collect(),
            u: decision.u_star.iter().copied().collect(),
            u_d: u_d.iter().copied().collect(),
            reference: plant.reference(&x, t),
            chain: safety.chain(&x),
            psi: decision.psi_at_solution,
            omega: decision.omega,
            q: decision.q,
            lambda: decision.lambda_star,
            delta: decision.delta_star,
            theta: theta_t.iter().copied().collect(),
            nu: nu_t,
            theta_err: (&theta_t - &theta_star).norm(),
        });

        if tick == plan.ctrl_ticks {
            break;
        }
        for _ in 0..plan.substeps_per_ctrl {
            x = accumulate_quadrature(&mut quad, &x, &decision.u_star, plant, dt);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                row: rows.len(),
                what: format!("non-finite state at t = {}", time_of(substep + plan.substeps_per_ctrl)),
            });
        }
    }

    Ok(TrajectoryLog {
        plant: plant.name().to_string(),
        case: sim.case,
        columns: columns(plant, safety.relative_degree()),
        rows,
        estimator_rows,
        schedule,
        theta_star: theta_star.iter().copied().collect(),
    })
}
