//! Sliding-window regularized least-squares estimation of the unknown
//! parameter, with the computable Lyapunov difference `tau_k` and the
//! nonincreasing error bound `nu_k`.
//!
//! Each estimator step consumes one [`RegressorSample`] `(Phi_k, y_k)` where
//! `Phi_k` is the integral of the regressor over a sample interval and `y_k`
//! is the part of the state increment not explained by the known dynamics.
//! With exact data `y_k = Phi_k theta_*`.
//!
//! The window always holds `k_n + 1` samples. Before enough samples have been
//! observed the missing (negative-index) entries are zero matrices paired with
//! zero outputs, which is consistent with the regression since `0 = 0 theta_*`.

use std::collections::VecDeque;

use nalgebra::{Cholesky, Dyn, SymmetricEigen};

use crate::{Error, Matrix, Result, Vector};

/// One integrated regression pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSample {
    /// Integrated regressor, `n x p`.
    pub phi: Matrix,
    /// Integrated output residual, length `n`.
    pub y: Vector,
}

impl RegressorSample {
    pub fn new(phi: Matrix, y: Vector) -> Result<Self> {
        if phi.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "regressor has {} rows but output has length {}",
                phi.nrows(),
                y.len()
            )));
        }
        Ok(Self { phi, y })
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        Self {
            phi: Matrix::zeros(n, p),
            y: Vector::zeros(n),
        }
    }

    /// Sample whose output is exactly `phi * theta_star`.
    pub fn consistent(phi: Matrix, theta_star: &Vector) -> Self {
        let y = &phi * theta_star;
        Self { phi, y }
    }

    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn params(&self) -> usize {
        self.phi.ncols()
    }

    fn is_finite(&self) -> bool {
        self.phi.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Window length minus one: the window covers samples `k - k_n ..= k`.
    pub k_n: usize,
    /// Regularization weight, constant for a run.
    pub sigma: f64,
    pub theta0: Vector,
    pub theta_box_lo: Vector,
    pub theta_box_hi: Vector,
}

impl EstimatorConfig {
    pub fn p(&self) -> usize {
        self.theta0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if p == 0 {
            return Err(Error::InvalidEstimator("parameter dimension is zero".into()));
        }
        if self.theta_box_lo.len() != p || self.theta_box_hi.len() != p {
            return Err(Error::Dimension(format!(
                "parameter box has dimensions {}/{} but theta0 has {}",
                self.theta_box_lo.len(),
                self.theta_box_hi.len(),
                p
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidEstimator(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        for (index, (&lo, &hi)) in self
            .theta_box_lo
            .iter()
            .zip(self.theta_box_hi.iter())
            .enumerate()
        {
            if !(lo <= hi) {
                return Err(Error::InvalidBox { index, lo, hi });
            }
        }
        if self.theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial estimate"));
        }
        Ok(())
    }
}

/// Exact supremum of `||theta0 - theta||` over the box: the farthest point of
/// a box from any given point is the corner that is farthest in every
/// coordinate.
pub fn nu0_from_box(cfg: &EstimatorConfig) -> Result<f64> {
    cfg.validate()?;
    let sq: f64 = cfg
        .theta0
        .iter()
        .zip(cfg.theta_box_lo.iter().zip(cfg.theta_box_hi.iter()))
        .map(|(&t, (&lo, &hi))| {
            let d = (t - lo).abs().max((t - hi).abs());
            d * d
        })
        .sum();
    Ok(sq.sqrt())
}

/// Fixed-length window of the most recent regressor samples, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    samples: VecDeque<RegressorSample>,
    n: usize,
    p: usize,
}

impl Window {
    /// Window of `k_n + 1` zero samples.
    pub fn zeros(n: usize, p: usize, k_n: usize) -> Self {
        Self {
            samples: std::iter::repeat_with(|| RegressorSample::zeros(n, p))
                .take(k_n + 1)
                .collect(),
            n,
            p,
        }
    }

    /// Window holding exactly the given samples (oldest first).
    pub fn from_samples(samples: Vec<RegressorSample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Dimension("window needs at least one sample".into()))?;
        let (n, p) = (first.rows(), first.params());
        let window = Self {
            samples: samples.into(),
            n,
            p,
        };
        for s in window.iter() {
            window.check(s)?;
        }
        Ok(window)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> usize {
        self.p
    }

    pub fn iter(&self) -> impl Iterator<Item = &RegressorSample> {
        self.samples.iter()
    }

    /// The window after dropping the oldest sample and appending `sample`.
    pub fn shifted(&self, sample: RegressorSample) -> Result<Self> {
        self.check(&sample)?;
        let mut next = self.clone();
        next.samples.pop_front();
        next.samples.push_back(sample);
        Ok(next)
    }

    fn check(&self, s: &RegressorSample) -> Result<()> {
        if s.rows() != self.n || s.params() != self.p || s.y.len() != self.n {
            return Err(Error::Dimension(format!(
                "sample is {}x{} (y length {}), window expects {}x{}",
                s.rows(),
                s.params(),
                s.y.len(),
                self.n,
                self.p
            )));
        }
        Ok(())
    }
}

/// Information matrix of a window and the associated regularized inverse.
#[derive(Debug, Clone)]
pub struct WindowMatrices {
    /// `sum Phi_i^T Phi_i`.
    pub omega: Matrix,
    /// `(sigma I + omega)^{-1}`.
    pub p: Matrix,
    /// `1 / (sigma + lambda_min(omega))`.
    pub lambda_max_p: f64,
    /// Smallest eigenvalue of `omega`, clamped at zero.
    pub lambda_min_omega: f64,
    /// All eigenvalues of `omega`, ascending.
    pub omega_eigenvalues: Vector,
    sigma: f64,
    factor: Cholesky<f64, Dyn>,
}

impl WindowMatrices {
    /// Solves `(sigma I + omega) z = b` with the stored factorization.
    pub fn solve(&self, b: &Vector) -> Vector {
        self.factor.solve(b)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `sigma * lambda_max(P)`, the worst-case contraction factor of one step.
    pub fn contraction(&self) -> f64 {
        self.sigma * self.lambda_max_p
    }
}

pub fn build_omega_and_p(window: &Window, sigma: f64) -> Result<WindowMatrices> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidEstimator(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let p = window.params();
    let mut omega = Matrix::zeros(p, p);
    for s in window.iter() {
        omega.gemm_tr(1.0, &s.phi, &s.phi, 1.0);
    }
    if omega.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("information matrix"));
    }
    // Symmetrize so the eigensolver and factorization see the same matrix.
    let omega = (&omega + omega.transpose()) * 0.5;

    let regularized = &omega + Matrix::identity(p, p) * sigma;
    let factor = Cholesky::new(regularized).ok_or(Error::NotPositiveDefinite("sigma I + omega"))?;
    let p_mat = factor.inverse();

    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(omega.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(f64::total_cmp);
    let lambda_min_omega = eigenvalues[0].max(0.0);

    Ok(WindowMatrices {
        omega,
        p: p_mat,
        lambda_max_p: 1.0 / (sigma + lambda_min_omega),
        lambda_min_omega,
        omega_eigenvalues: Vector::from_vec(eigenvalues),
        sigma,
        factor,
    })
}

fn check_theta(theta: &Vector, window: &Window) -> Result<()> {
    if theta.len() != window.params() {
        return Err(Error::Dimension(format!(
            "estimate has length {} but the window has {} parameters",
            theta.len(),
            window.params()
        )));
    }
    Ok(())
}

/// Minimizer of the regularized window cost:
/// `theta_{k+1} = P (sum Phi_i^T y_i + sigma theta_k)`.
pub fn update_theta(theta_k: &Vector, window: &Window, mats: &WindowMatrices) -> Result<Vector> {
    check_theta(theta_k, window)?;
    let mut rhs = theta_k * mats.sigma;
    for s in window.iter() {
        rhs.gemv_tr(1.0, &s.phi, &s.y, 1.0);
    }
    let next = mats.solve(&rhs);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("updated estimate"));
    }
    Ok(next)
}

/// Computable Lyapunov difference. With residuals `r_i = Phi_i theta_k - y_i`
/// and `S = sum Phi_i^T r_i`:
///
/// `tau = (2/sigma) [ -sum ||r_i||^2 + S^T P S ] + S^T P^2 S`
///
/// For exact data this equals `||theta_{k+1} - theta_*||^2 - ||theta_k - theta_*||^2`.
pub fn compute_tau(theta_k: &Vector, window: &Window, mats: &WindowMatrices) -> Result<f64> {
    check_theta(theta_k, window)?;
    let mut residual_sq = 0.0;
    let mut s = Vector::zeros(window.params());
    for sample in window.iter() {
        let mut r = &sample.phi * theta_k;
        r -= &sample.y;
        residual_sq += r.norm_squared();
        s.gemv_tr(1.0, &sample.phi, &r, 1.0);
    }
    let ps = mats.solve(&s);
    let tau = (2.0 / mats.sigma) * (s.dot(&ps) - residual_sq) + ps.norm_squared();
    if !tau.is_finite() {
        return Err(Error::NonFinite("tau"));
    }
    Ok(tau)
}

/// `nu_{k+1} = min(sigma lambda_max(P) nu_k, sqrt(nu_k^2 + tau_k))`, with the
/// square-root argument clamped at zero against rounding.
pub fn update_nu(nu_k: f64, tau_k: f64, lambda_max_p: f64, sigma: f64) -> f64 {
    let contracted = sigma * lambda_max_p * nu_k;
    let descended = (nu_k * nu_k + tau_k).max(0.0).sqrt();
    contracted.min(descended)
}

/// Diagnostics of one estimator step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Index `k` of the step just taken (the new estimate is `theta_{k+1}`).
    pub k: usize,
    pub tau: f64,
    pub lambda_max_p: f64,
    pub lambda_min_omega: f64,
    pub omega_eigenvalues: Vector,
}

/// Estimator state machine. `step` consumes `(Phi_k, y_k)` and advances from
/// `(theta_k, nu_k)` to `(theta_{k+1}, nu_{k+1})`.
#[derive(Debug, Clone)]
pub struct Estimator {
    k: usize,
    theta: Vector,
    nu: f64,
    sigma: f64,
    window: Window,
    last_tau: f64,
    last_lambda_max_p: f64,
    last_omega_min_eig: f64,
}

impl Estimator {
    /// Starts from `theta0` with `nu0` equal to the box supremum.
    pub fn new(cfg: &EstimatorConfig, n: usize) -> Result<Self> {
        let nu0 = nu0_from_box(cfg)?;
        Self::with_nu0(cfg, n, nu0)
    }

    /// Starts with an explicit initial bound, which must dominate the box
    /// supremum for the bound guarantee to hold.
    pub fn with_nu0(cfg: &EstimatorConfig, n: usize, nu0: f64) -> Result<Self> {
        cfg.validate()?;
        if !(nu0 >= 0.0 && nu0.is_finite()) {
            return Err(Error::InvalidEstimator(format!(
                "initial bound must be nonnegative and finite, got {nu0}"
            )));
        }
        Ok(Self {
            k: 0,
            theta: cfg.theta0.clone(),
            nu: nu0,
            sigma: cfg.sigma,
            window: Window::zeros(n, cfg.p(), cfg.k_n),
            last_tau: 0.0,
            last_lambda_max_p: 1.0 / cfg.sigma,
            last_omega_min_eig: 0.0,
        })
    }

    pub fn step(&mut self, sample: RegressorSample) -> Result<StepReport> {
        self.step_with_sigma(sample, self.sigma)
    }

    /// Step with a per-step regularizer. The state is left untouched on error.
    pub fn step_with_sigma(&mut self, sample: RegressorSample, sigma: f64) -> Result<StepReport> {
        if !sample.is_finite() {
            return Err(Error::NonFinite("regressor sample"));
        }
        let window = self.window.shifted(sample)?;
        let mats = build_omega_and_p(&window, sigma)?;
        let tau = compute_tau(&self.theta, &window, &mats)?;
        let theta_next = update_theta(&self.theta, &window, &mats)?;
        let nu_next = update_nu(self.nu, tau, mats.lambda_max_p, sigma);

        let report = StepReport {
            k: self.k,
            tau,
            lambda_max_p: mats.lambda_max_p,
            lambda_min_omega: mats.lambda_min_omega,
            omega_eigenvalues: mats.omega_eigenvalues,
        };
        self.k += 1;
        self.theta = theta_next;
        self.nu = nu_next;
        self.window = window;
        self.last_tau = tau;
        self.last_lambda_max_p = mats.lambda_max_p;
        self.last_omega_min_eig = mats.lambda_min_omega;
        Ok(report)
    }

    /// Number of steps taken so far; the current estimate is `theta_k`.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> &Vector {
        &self.theta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn last_tau(&self) -> f64 {
        self.last_tau
    }

    pub fn last_lambda_max_p(&self) -> f64 {
        self.last_lambda_max_p
    }

    pub fn last_omega_min_eig(&self) -> f64 {
        self.last_omega_min_eig
    }
}
