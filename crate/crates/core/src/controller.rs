//! Closed-form minimum-intervention controller.
//!
//! Minimizes `1/2 (u - u_d)^T H (u - u_d) + beta/2 delta^2` subject to the
//! single affine constraint `psi(u, delta) >= 0`. With
//! `q = L_g H^{-1} L_g^T + psi_{d-1}^2 / beta` and `omega = psi(u_d, 0)` the
//! minimizer is
//!
//! ```text
//! lambda = max(0, -omega / q)
//! u      = u_d + lambda H^{-1} L_g^T
//! delta  = lambda psi_{d-1} / beta
//! ```

use std::fmt;
use std::sync::Arc;

use nalgebra::Cholesky;

use crate::cbf::{psi_value, ConstraintTerms};
use crate::{Error, Result, Matrix, Vector};

/// Values of `q` at or below this are treated as a degenerate constraint.
pub const DEGENERATE_Q: f64 = 1e-12;

/// State- and estimate-dependent input weight `H(x, theta)`.
pub type WeightFn = Arc<dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync>;

#[derive(Clone)]
pub struct ControllerParams {
    pub beta: f64,
    pub weight: WeightFn,
}

impl ControllerParams {
    /// Constant weight matrix.
    pub fn constant(h: Matrix, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidSim(format!("slack weight beta must be positive, got {beta}")));
        }
        if h.nrows() != h.ncols() || Cholesky::new(h.clone()).is_none() {
            return Err(Error::NotPositiveDefinite("input weight H"));
        }
        Ok(Self {
            beta,
            weight: Arc::new(move |_, _| h.clone()),
        })
    }

    pub fn weight_at(&self, x: &Vector, theta: &Vector) -> Matrix {
        (self.weight)(x, theta)
    }
}

impl fmt::Debug for ControllerParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControllerParams")
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

/// Closed-form solution at one control instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub u_star: Vector,
    pub delta_star: f64,
    pub lambda_star: f64,
    pub omega: f64,
    pub q: f64,
    /// Constraint value at `(u_star, delta_star)`; equals `max(omega, 0)`.
    pub psi_at_solution: f64,
}

fn factor(h: &Matrix) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(h.clone()).ok_or(Error::NotPositiveDefinite("input weight H"))
}

fn solve_q(terms: &ConstraintTerms, chol: &Cholesky<f64, nalgebra::Dyn>, beta: f64) -> Result<(f64, Vector)> {
    let h_inv_lg = chol.solve(&terms.lg);
    let q = terms.lg.dot(&h_inv_lg) + terms.psi_top * terms.psi_top / beta;
    if !(q > DEGENERATE_Q) {
        return Err(Error::DegenerateConstraint(q));
    }
    Ok((q, h_inv_lg))
}

/// `q = L_g H^{-1} L_g^T + psi_{d-1}^2 / beta`.
pub fn q_of(terms: &ConstraintTerms, h: &Matrix, beta: f64) -> Result<f64> {
    check_dims(terms, h)?;
    Ok(solve_q(terms, &factor(h)?, beta)?.0)
}

/// Constraint value at the desired input with zero slack.
pub fn omega_of(terms: &ConstraintTerms, theta: &Vector, nu: f64, u_d: &Vector, gain_top: f64) -> f64 {
    psi_value(terms, theta, nu, u_d, 0.0, gain_top)
}

fn check_dims(terms: &ConstraintTerms, h: &Matrix) -> Result<()> {
    let m = terms.lg.len();
    if h.nrows() != m || h.ncols() != m {
        return Err(Error::Dimension(format!(
            "weight is {}x{} but the input has dimension {m}",
            h.nrows(),
            h.ncols()
        )));
    }
    Ok(())
}

pub fn solve(
    terms: &ConstraintTerms,
    theta: &Vector,
    nu: f64,
    u_d: &Vector,
    h: &Matrix,
    beta: f64,
    gain_top: f64,
) -> Result<ControlDecision> {
    check_dims(terms, h)?;
    if u_d.len() != terms.lg.len() || theta.len() != terms.lphi.len() {
        return Err(Error::Dimension(format!(
            "desired input length {} / estimate length {} do not match constraint terms {}/{}",
            u_d.len(),
            theta.len(),
            terms.lg.len(),
            terms.lphi.len()
        )));
    }
    let (q, h_inv_lg) = solve_q(terms, &factor(h)?, beta)?;
    let omega = omega_of(terms, theta, nu, u_d, gain_top);
    if !omega.is_finite() {
        return Err(Error::NonFinite("constraint value at the desired input"));
    }
    // The tie omega == 0 takes the inactive branch.
    let lambda_star = if omega < 0.0 { -omega / q } else { 0.0 };
    let (u_star, delta_star) = if lambda_star > 0.0 {
        (u_d + h_inv_lg * lambda_star, terms.psi_top * lambda_star / beta)
    } else {
        (u_d.clone(), 0.0)
    };
    let psi_at_solution = psi_value(terms, theta, nu, &u_star, delta_star, gain_top);
    Ok(ControlDecision {
        u_star,
        delta_star,
        lambda_star,
        omega,
        q,
        psi_at_solution,
    })
}

/// `1/2 (u - u_d)^T H (u - u_d) + beta/2 delta^2`.
pub fn augmented_cost(u: &Vector, delta: f64, u_d: &Vector, h: &Matrix, beta: f64) -> f64 {
    let e = u - u_d;
    0.5 * e.dot(&(h * &e)) + 0.5 * beta * delta * delta
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_terms(lf: f64, lg: f64, psi_top: f64) -> ConstraintTerms {
        ConstraintTerms::new(lf, Vector::from_element(1, lg), Vector::zeros(1), psi_top)
    }

    #[test]
    fn q_without_input_authority() {
        let t = scalar_terms(0.0, 0.0, 1.0);
        let q = q_of(&t, &Matrix::from_element(1, 1, 2.0), 200.0).unwrap();
        assert!((q - 1.0 / 200.0).abs() < 1e-16);
    }

    #[test]
    fn q_by_hand() {
        let t = scalar_terms(0.0, 3.0, 0.0);
        let q = q_of(&t, &Matrix::from_element(1, 1, 2.0), 200.0).unwrap();
        assert!((q - 4.5).abs() < 1e-14);
    }

    #[test]
    fn degenerate_q_is_an_error() {
        let t = scalar_terms(-1.0, 0.0, 0.0);
        let h = Matrix::from_element(1, 1, 2.0);
        assert!(matches!(q_of(&t, &h, 1.0), Err(Error::DegenerateConstraint(_))));
        assert!(matches!(
            solve(&t, &Vector::zeros(1), 0.0, &Vector::zeros(1), &h, 1.0, 1.0),
            Err(Error::DegenerateConstraint(_))
        ));
    }

    #[test]
    fn indefinite_weight_is_rejected() {
        let t = scalar_terms(0.0, 1.0, 1.0);
        assert!(matches!(
            q_of(&t, &Matrix::from_element(1, 1, -2.0), 1.0),
            Err(Error::NotPositiveDefinite(_))
        ));
        assert!(ControllerParams::constant(Matrix::from_element(1, 1, 0.0), 1.0).is_err());
        assert!(ControllerParams::constant(Matrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn inactive_constraint_passes_desired_input_through() {
        let t = scalar_terms(5.0, 1.0, 1.0);
        let u_d = Vector::from_element(1, 0.3);
        let d = solve(&t, &Vector::zeros(1), 0.0, &u_d, &Matrix::from_element(1, 1, 2.0), 1.0, 1.0).unwrap();
        assert!(d.omega >= 0.0);
        assert_eq!(d.u_star, u_d);
        assert_eq!(d.delta_star, 0.0);
        assert_eq!(d.lambda_star, 0.0);
        assert_eq!(d.psi_at_solution, d.omega);
    }

    #[test]
    fn tie_takes_inactive_branch() {
        let t = scalar_terms(-1.0, 1.0, 1.0);
        let d = solve(&t, &Vector::zeros(1), 0.0, &Vector::zeros(1), &Matrix::from_element(1, 1, 2.0), 1.0, 1.0)
            .unwrap();
        assert_eq!(d.omega, 0.0);
        assert_eq!(d.lambda_star, 0.0);
    }

    #[test]
    fn scalar_active_case_by_hand() {
        let t = scalar_terms(-2.0, 1.0, 1.0);
        let d = solve(&t, &Vector::zeros(1), 0.0, &Vector::zeros(1), &Matrix::from_element(1, 1, 2.0), 1.0, 0.0)
            .unwrap();
        assert!((d.omega + 2.0).abs() < 1e-15);
        assert!((d.q - 1.5).abs() < 1e-15);
        assert!((d.lambda_star - 4.0 / 3.0).abs() < 1e-15);
        assert!((d.u_star[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.delta_star - 4.0 / 3.0).abs() < 1e-15);
        assert!(d.psi_at_solution.abs() < 1e-14);
    }

    fn random_instance(rng: &mut ChaCha8Rng, m: usize) -> (ConstraintTerms, Vector, f64, Vector, Matrix, f64, f64) {
        let p = 3;
        let terms = ConstraintTerms::new(
            rng.random_range(-5.0..5.0),
            Vector::from_fn(m, |_, _| rng.random_range(-2.0..2.0)),
            Vector::from_fn(p, |_, _| rng.random_range(-2.0..2.0)),
            rng.random_range(-1.0..1.0),
        );
        let theta = Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        let a = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let h = &a * a.transpose() + Matrix::identity(m, m) * 0.5;
        (
            terms,
            theta,
            rng.random_range(0.0..2.0),
            Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
            h,
            rng.random_range(0.5..5.0),
            rng.random_range(0.5..3.0),
        )
    }

    #[test]
    fn closed_form_satisfies_kkt_and_beats_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..200 {
            let m = 1 + trial % 2;
            let (terms, theta, nu, u_d, h, beta, gain) = random_instance(&mut rng, m);
            let d = solve(&terms, &theta, nu, &u_d, &h, beta, gain).unwrap();
            assert!(d.lambda_star >= 0.0);
            assert!(d.psi_at_solution >= -1e-9);
            assert!((d.psi_at_solution - d.omega.max(0.0)).abs() < 1e-9);
            assert!((d.lambda_star * d.psi_at_solution).abs() < 1e-9);
            let stat_u = &h * (&d.u_star - &u_d) - &terms.lg * d.lambda_star;
            assert!(stat_u.abs().max() < 1e-10);
            assert!((beta * d.delta_star - d.lambda_star * terms.psi_top).abs() < 1e-10);

            let best = augmented_cost(&d.u_star, d.delta_star, &u_d, &h, beta);
            for _ in 0..2000 {
                let u = &d.u_star + Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
                let delta = d.delta_star + rng.random_range(-1.0..1.0);
                if psi_value(&terms, &theta, nu, &u, delta, gain) >= 0.0 {
                    assert!(augmented_cost(&u, delta, &u_d, &h, beta) >= best - 1e-8);
                }
            }
        }
    }

    #[test]
    fn larger_bound_never_reduces_intervention() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let (terms, theta, nu, u_d, h, beta, gain) = random_instance(&mut rng, 2);
            let a = solve(&terms, &theta, nu, &u_d, &h, beta, gain).unwrap();
            let b = solve(&terms, &theta, nu + 0.5, &u_d, &h, beta, gain).unwrap();
            assert!(b.lambda_star >= a.lambda_star);
        }
    }

    #[test]
    fn large_bound_eventually_activates_constraint() {
        let t = ConstraintTerms::new(10.0, Vector::from_element(1, 1.0), Vector::from_element(2, 1.0), 1.0);
        let theta = Vector::zeros(2);
        let u_d = Vector::zeros(1);
        assert!(omega_of(&t, &theta, 0.0, &u_d, 1.0) > 0.0);
        assert!(omega_of(&t, &theta, 1e3, &u_d, 1.0) < 0.0);
    }
}
