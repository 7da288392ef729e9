//! Randomized check batteries with independent reference computations.
//!
//! * Decrement: `tau_k` against the error-norm difference computed from a
//!   dense LU solve of the normal equations with the true parameter known.
//! * Bound: soundness and monotonicity of `nu_k` along synthetic runs, and
//!   its decay under full-rank excitation.
//! * KKT: the closed-form controller against the KKT conditions and against
//!   a cloud of feasible points around the solution.
//! * Quadrature: the regression residual `y_k - Phi_k theta_*` of a
//!   simulated run.
//!
//! All batteries are seeded, so their results are reproducible.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;

use crate::cbf::ConstraintTerms;
use crate::controller::{self, ControlDecision};
use crate::estimator::{
    build_omega_and_p, compute_tau, nu0_from_box, Estimator, EstimatorConfig, RegressorSample, Window,
};
use crate::sim::TrajectoryLog;
use crate::{Matrix, Result, Vector};

/// Outcome of one battery check.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub trials: usize,
    /// Worst observed value of the checked quantity.
    pub max_residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl OracleReport {
    fn new(name: impl Into<String>, trials: usize, max_residual: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            trials,
            max_residual,
            threshold,
            passed: max_residual <= threshold,
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: max {:.3e} (threshold {:.1e}, {} trials)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_residual,
            self.threshold,
            self.trials
        )
    }
}

const P: usize = 5;
const K_NS: [usize; 3] = [0, 5, 30];
const SIGMAS: [f64; 3] = [1e-3, 0.1, 1.0];

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
    Matrix::from_fn(n, p, |_, _| gaussian(rng))
}

/// Estimate after one step, from an LU solve of the normal equations.
fn reference_update(window: &Window, theta_k: &Vector, sigma: f64) -> Vector {
    let p = theta_k.len();
    let mut a = Matrix::identity(p, p) * sigma;
    let mut b = theta_k * sigma;
    for s in window.iter() {
        a += s.phi.transpose() * &s.phi;
        b += s.phi.transpose() * &s.y;
    }
    a.lu().solve(&b).expect("sigma I + Omega is nonsingular")
}

/// Decrement battery: `windows` random windows cycling through the
/// `(k_n, sigma)` grid, with a random number of zero-padded slots and
/// regressors of 1, 2 or 8 rows.
pub fn decrement_battery(windows: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..windows {
        let k_n = K_NS[i % 3];
        let sigma = SIGMAS[(i / 3) % 3];
        let n = [1, 2, 8][rng.random_range(0..3)];
        let filled = rng.random_range(1..=k_n + 1);
        let theta_star = Vector::from_fn(P, |_, _| 2.0 * gaussian(&mut rng));
        let theta_k = Vector::from_fn(P, |_, _| 2.0 * gaussian(&mut rng));
        let samples = (0..=k_n)
            .map(|j| {
                if j < k_n + 1 - filled {
                    RegressorSample::zeros(n, P)
                } else {
                    RegressorSample::consistent(gaussian_matrix(&mut rng, n, P), &theta_star)
                }
            })
            .collect();
        let window = Window::from_samples(samples)?;
        let mats = build_omega_and_p(&window, sigma)?;
        let tau = compute_tau(&theta_k, &window, &mats)?;

        let next = reference_update(&window, &theta_k, sigma);
        let err_k = (&theta_k - &theta_star).norm_squared();
        let delta_v = (&next - &theta_star).norm_squared() - err_k;
        worst = worst.max((tau - delta_v).abs() / err_k.max(1.0));
    }
    Ok(OracleReport::new("decrement |tau - dV| / max(1, |e|^2)", windows, worst, 1e-9))
}

/// Bound battery: `runs_per_combo` runs of `steps` steps for each
/// `(k_n, sigma)` pair, with regressors of 1, 2 or 8 rows. Returns the
/// reports for `tau <= 0`, monotonicity, soundness and (8-row runs only)
/// final decay below `1e-3`.
pub fn bound_battery(runs_per_combo: usize, steps: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_tau = f64::NEG_INFINITY;
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_unsound = f64::NEG_INFINITY;
    let mut max_final = 0.0f64;
    let mut decrement_worst = 0.0f64;
    let (mut runs, mut full_rank_runs) = (0, 0);
    for &k_n in &K_NS {
        for &sigma in &SIGMAS {
            for r in 0..runs_per_combo {
                let n = [1, 2, 8][r % 3];
                let lo = Vector::zeros(P);
                let hi = Vector::from_element(P, 2.5);
                let theta_star = Vector::from_fn(P, |_, _| rng.random_range(0.0..2.5));
                let cfg = EstimatorConfig {
                    k_n,
                    sigma,
                    theta0: Vector::from_fn(P, |_, _| rng.random_range(0.0..2.5)),
                    theta_box_lo: lo,
                    theta_box_hi: hi,
                };
                let mut est = Estimator::new(&cfg, n)?;
                for _ in 0..steps {
                    let nu_k = est.nu();
                    let err_k = (est.theta() - &theta_star).norm_squared();
                    let sample = RegressorSample::consistent(gaussian_matrix(&mut rng, n, P), &theta_star);
                    let window = est.window().shifted(sample.clone())?;
                    let reference = reference_update(&window, est.theta(), sigma);
                    let report = est.step(sample)?;
                    let delta_v = (&reference - &theta_star).norm_squared() - err_k;
                    decrement_worst = decrement_worst.max((report.tau - delta_v).abs() / err_k.max(1.0));
                    max_tau = max_tau.max(report.tau);
                    max_increase = max_increase.max(est.nu() - nu_k);
                    max_unsound = max_unsound.max((est.theta() - &theta_star).norm() - est.nu());
                }
                runs += 1;
                if n == 8 {
                    full_rank_runs += 1;
                    max_final = max_final.max(est.nu());
                }
            }
        }
    }
    Ok(vec![
        OracleReport::new("bound runs: decrement identity along runs", runs * steps, decrement_worst, 1e-9),
        OracleReport::new("bound runs: max tau", runs * steps, max_tau, 1e-12),
        OracleReport::new("bound runs: max nu_{k+1} - nu_k", runs * steps, max_increase, 1e-12),
        OracleReport::new("bound runs: max |e_k| - nu_k", runs * steps, max_unsound, 1e-9),
        OracleReport::new(
            format!("bound runs: final nu after {steps} full-rank steps"),
            full_rank_runs,
            max_final,
            1e-3,
        ),
    ])
}

/// Random controller instance with `m <= 2` inputs.
#[derive(Debug, Clone)]
pub struct KktInstance {
    pub terms: ConstraintTerms,
    pub theta: Vector,
    pub nu: f64,
    pub u_d: Vector,
    pub h: Matrix,
    pub beta: f64,
    pub gain_top: f64,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> KktInstance {
    let m = rng.random_range(1..=2);
    let p = rng.random_range(1..=5);
    let l = gaussian_matrix(rng, m, m);
    let h = &l * l.transpose() + Matrix::identity(m, m) * rng.random_range(0.1..2.0);
    let terms = ConstraintTerms::new(
        2.0 * gaussian(rng),
        Vector::from_fn(m, |_, _| gaussian(rng)),
        Vector::from_fn(p, |_, _| gaussian(rng)),
        rng.random_range(0.0..2.0),
    );
    KktInstance {
        terms,
        theta: Vector::from_fn(p, |_, _| gaussian(rng)),
        nu: rng.random_range(0.0..2.0),
        u_d: Vector::from_fn(m, |_, _| gaussian(rng)),
        h,
        beta: 10f64.powf(rng.random_range(-1.0..2.0)),
        gain_top: rng.random_range(0.5..5.0),
    }
}

/// KKT residuals of a decision: stationarity in `u` and `delta`, primal
/// infeasibility, dual infeasibility, and `|lambda psi|`.
pub fn kkt_residuals(inst: &KktInstance, d: &ControlDecision) -> [f64; 5] {
    let psi = inst.terms.psi(&inst.theta, inst.nu, &d.u_star, d.delta_star, inst.gain_top);
    let stat_u = (&inst.h * (&d.u_star - &inst.u_d) - &inst.terms.lg * d.lambda_star).amax();
    let stat_delta = (inst.beta * d.delta_star - d.lambda_star * inst.terms.psi_top).abs();
    [stat_u, stat_delta, (-psi).max(0.0), (-d.lambda_star).max(0.0), (d.lambda_star * psi).abs()]
}

const SCALE_LEVELS: usize = 1024;
const DIR_BITS: u32 = 18;

/// Feasible points around the solution: perturbations at log-uniform scales
/// between `1e-6` and `10`, with infeasible points projected onto the
/// constraint boundary. Returns the smallest cost found. Each point takes
/// one 64-bit draw: 10 bits pick the scale, 3 x 18 bits the direction.
fn cloud_min(inst: &KktInstance, d: &ControlDecision, points: usize, rng: &mut ChaCha8Rng) -> f64 {
    // psi(u, delta) = omega + lg (u - u_d) + psi_top delta is affine.
    let m = inst.u_d.len();
    let lg = [inst.terms.lg[0], if m > 1 { inst.terms.lg[1] } else { 0.0 }];
    let ud = [inst.u_d[0], if m > 1 { inst.u_d[1] } else { 0.0 }];
    let us = [d.u_star[0], if m > 1 { d.u_star[1] } else { 0.0 }];
    let h = [
        inst.h[(0, 0)],
        if m > 1 { inst.h[(0, 1)] } else { 0.0 },
        if m > 1 { inst.h[(1, 1)] } else { 0.0 },
    ];
    let a = inst.terms.psi_top;
    let omega = d.omega;
    let norm2 = lg[0] * lg[0] + lg[1] * lg[1] + a * a;
    let scales: Vec<f64> = (0..SCALE_LEVELS)
        .map(|i| 10f64.powf(-6.0 + 7.0 * (i as f64 + 0.5) / SCALE_LEVELS as f64))
        .collect();
    let mask = (1u64 << DIR_BITS) - 1;
    let unit = 2.0 / mask as f64;
    let mut best = f64::INFINITY;
    for _ in 0..points {
        let bits = rng.next_u64();
        let scale = scales[(bits >> (3 * DIR_BITS)) as usize & (SCALE_LEVELS - 1)];
        let dir = |k: u32| ((bits >> (k * DIR_BITS)) & mask) as f64 * unit - 1.0;
        let mut z = [
            us[0] + scale * dir(0),
            if m > 1 { us[1] + scale * dir(1) } else { 0.0 },
            d.delta_star + scale * dir(2),
        ];
        let psi = omega + lg[0] * (z[0] - ud[0]) + lg[1] * (z[1] - ud[1]) + a * z[2];
        if psi < 0.0 {
            let s = -psi / norm2;
            z[0] += s * lg[0];
            z[1] += s * lg[1];
            z[2] += s * a;
        }
        let e = [z[0] - ud[0], z[1] - ud[1]];
        let cost = 0.5 * (h[0] * e[0] * e[0] + 2.0 * h[1] * e[0] * e[1] + h[2] * e[1] * e[1])
            + 0.5 * inst.beta * z[2] * z[2];
        best = best.min(cost);
    }
    best
}

/// KKT battery over `instances` random instances, each compared with a
/// `cloud` point feasible sample. Instances are split across threads; each
/// instance has its own seeded stream, so the result does not depend on
/// the thread count.
pub fn kkt_battery(instances: usize, cloud: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(instances.max(1));
    let chunk = instances.div_ceil(threads.max(1)).max(1);
    let results: Vec<Result<[f64; 3]>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..instances)
            .step_by(chunk)
            .map(|start| {
                scope.spawn(move || -> Result<[f64; 3]> {
                    let mut worst = [0.0f64; 3];
                    for i in start..(start + chunk).min(instances) {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                        let inst = random_instance(&mut rng);
                        let d = controller::solve(
                            &inst.terms, &inst.theta, inst.nu, &inst.u_d, &inst.h, inst.beta, inst.gain_top,
                        )?;
                        let r = kkt_residuals(&inst, &d);
                        worst[0] = worst[0].max(r[0]).max(r[1]).max(r[2]).max(r[3]);
                        worst[1] = worst[1].max(r[4]);
                        if cloud > 0 {
                            let cost = controller::augmented_cost(&d.u_star, d.delta_star, &inst.u_d, &inst.h, inst.beta);
                            worst[2] = worst[2].max(cost - cloud_min(&inst, &d, cloud, &mut rng));
                        }
                    }
                    Ok(worst)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("oracle thread panicked")).collect()
    });
    let mut worst = [0.0f64; 3];
    for r in results {
        let r = r?;
        for j in 0..3 {
            worst[j] = worst[j].max(r[j]);
        }
    }
    let mut out = vec![
        OracleReport::new("kkt: stationarity/feasibility residual", instances, worst[0], 1e-8),
        OracleReport::new("kkt: |lambda psi|", instances, worst[1], 1e-9),
    ];
    if cloud > 0 {
        out.push(OracleReport::new(
            format!("kkt: cost - min over {cloud}-point feasible cloud"),
            instances,
            worst[2],
            1e-8,
        ));
    }
    Ok(out)
}

/// Largest `||y_k - Phi_k theta_*|| / (1 + ||Phi_k theta_*||)` of a run.
pub fn quadrature_report(log: &TrajectoryLog) -> OracleReport {
    OracleReport::new(
        format!("quadrature: {} case {} regression residual", log.plant, log.case.number()),
        log.estimator_rows.len(),
        log.max_relative_residual(),
        1e-6,
    )
}

/// Supremum of the distance from `theta0` to the box, checked against the
/// corners of the box.
pub fn nu0_corner_check(cfg: &EstimatorConfig) -> Result<OracleReport> {
    let p = cfg.p();
    let mut best = 0.0f64;
    for mask in 0..(1u32 << p) {
        let corner = Vector::from_fn(p, |i, _| {
            if mask & (1 << i) != 0 {
                cfg.theta_box_hi[i]
            } else {
                cfg.theta_box_lo[i]
            }
        });
        best = best.max((&corner - &cfg.theta0).norm());
    }
    let nu0 = nu0_from_box(cfg)?;
    Ok(OracleReport::new("nu0 against box corners", 1 << p, (nu0 - best).abs(), 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_batteries_pass() {
        assert!(decrement_battery(60, 1).unwrap().passed);
        for r in bound_battery(3, 60, 2).unwrap() {
            assert!(r.passed, "{r}");
        }
        for r in kkt_battery(20, 2000, 3).unwrap() {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn report_display() {
        let r = OracleReport::new("x", 3, 2e-10, 1e-9);
        assert!(r.to_string().starts_with("PASS x"));
        let r = OracleReport::new("x", 3, 2e-9, 1e-9);
        assert!(r.to_string().starts_with("FAIL"));
    }

    #[test]
    fn kkt_battery_is_thread_independent() {
        assert_eq!(kkt_battery(8, 100, 5).unwrap(), kkt_battery(8, 100, 5).unwrap());
    }
}
