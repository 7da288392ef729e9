//! Higher-order barrier chain and the robustified constraint.
//!
//! With `psi_{d-1}` the top of the chain `psi_i = L_f psi_{i-1} + c_{i-1} psi_{i-1}`
//! the constraint on a candidate input `u` and slack `delta` is
//!
//! ```text
//! psi = L_f psi_{d-1} + L_g psi_{d-1} u + L_phi psi_{d-1} theta
//!       - ||L_phi psi_{d-1}|| nu + c_{d-1} psi_{d-1} + delta psi_{d-1}
//! ```
//!
//! Whenever `nu >= ||theta - theta_*||` this lower-bounds the same expression
//! evaluated at the true parameter with `nu = 0`.

use crate::plants::Plant;
use crate::{Error, Result, Vector};

/// Safe-set chain of relative degree `d` with linear class-K gains.
///
/// Implementors provide `psi_{d-1}` and its gradient analytically. The chain
/// must satisfy the relative-degree condition (the input and the uncertainty
/// enter only at the top level), which is not checked here.
pub trait SafetySpec: Send + Sync {
    fn relative_degree(&self) -> usize;

    /// Gains `c_0 .. c_{d-1}`, each positive.
    fn gains(&self) -> &[f64];

    /// `[psi_0(x), .., psi_{d-1}(x)]`.
    fn chain(&self, x: &Vector) -> Vec<f64>;

    fn psi0(&self, x: &Vector) -> f64 {
        self.chain(x)[0]
    }

    fn psi_top(&self, x: &Vector) -> f64 {
        *self.chain(x).last().expect("chain has d >= 1 entries")
    }

    /// Gradient of `psi_{d-1}` with respect to the state.
    fn grad_psi_top(&self, x: &Vector) -> Vector;

    /// Gain `c_{d-1}` multiplying `psi_{d-1}` in the constraint.
    fn top_gain(&self) -> f64 {
        *self.gains().last().expect("at least one gain")
    }
}

/// State-dependent pieces of the constraint at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintTerms {
    pub lf: f64,
    pub lg: Vector,
    pub lphi: Vector,
    pub norm_lphi: f64,
    pub psi_top: f64,
}

impl ConstraintTerms {
    pub fn new(lf: f64, lg: Vector, lphi: Vector, psi_top: f64) -> Self {
        let norm_lphi = lphi.norm();
        Self {
            lf,
            lg,
            lphi,
            norm_lphi,
            psi_top,
        }
    }

    /// Constraint value for a candidate `(u, delta)`.
    pub fn psi(&self, theta: &Vector, nu: f64, u: &Vector, delta: f64, gain_top: f64) -> f64 {
        psi_value(self, theta, nu, u, delta, gain_top)
    }
}

/// Lie derivatives of `psi_{d-1}` along `f`, `g` and `phi` at `x`.
pub fn terms(spec: &dyn SafetySpec, plant: &dyn Plant, x: &Vector) -> Result<ConstraintTerms> {
    let dims = plant.dims();
    if x.len() != dims.n {
        return Err(Error::Dimension(format!(
            "state has length {}, plant expects {}",
            x.len(),
            dims.n
        )));
    }
    let grad = spec.grad_psi_top(x);
    if grad.len() != dims.n {
        return Err(Error::Dimension(format!(
            "barrier gradient has length {}, plant state has {}",
            grad.len(),
            dims.n
        )));
    }
    let lf = grad.dot(&plant.drift(x));
    let lg = plant.input_matrix(x).tr_mul(&grad);
    let lphi = plant.regressor(x).tr_mul(&grad);
    let psi_top = spec.psi_top(x);
    let out = ConstraintTerms::new(lf, lg, lphi, psi_top);
    let finite = out.lf.is_finite()
        && out.psi_top.is_finite()
        && out.lg.iter().chain(out.lphi.iter()).all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite("barrier constraint terms"));
    }
    Ok(out)
}

pub fn psi_value(
    terms: &ConstraintTerms,
    theta_hat: &Vector,
    nu_hat: f64,
    u_hat: &Vector,
    delta_hat: f64,
    gain_top: f64,
) -> f64 {
    terms.lf + terms.lg.dot(u_hat) + terms.lphi.dot(theta_hat) - terms.norm_lphi * nu_hat
        + gain_top * terms.psi_top
        + delta_hat * terms.psi_top
}

/// Smooth minimum `-(1/rho) log sum exp(-rho h_i)`, evaluated with a max
/// shift. Lies in `[min h - log(N)/rho, min h]`.
pub fn softmin_psi0(h_values: &[f64], rho: f64) -> Result<f64> {
    Ok(softmin_with_weights(h_values, rho)?.0)
}

/// Smooth minimum together with its gradient weights
/// `w_i = exp(-rho h_i) / sum_j exp(-rho h_j)`.
pub fn softmin_with_weights(h_values: &[f64], rho: f64) -> Result<(f64, Vec<f64>)> {
    if !(rho > 0.0) {
        return Err(Error::InvalidSharpness(rho));
    }
    let h_min = h_values
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or(Error::EmptyBarrierSet)?;
    let exps: Vec<f64> = h_values.iter().map(|&h| (-rho * (h - h_min)).exp()).collect();
    let total: f64 = exps.iter().sum();
    let value = h_min - total.ln() / rho;
    let weights = exps.into_iter().map(|e| e / total).collect();
    Ok((value, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_terms() -> ConstraintTerms {
        ConstraintTerms::new(
            0.4,
            Vector::from_vec(vec![1.0, -2.0]),
            Vector::from_vec(vec![3.0, 4.0]),
            0.5,
        )
    }

    #[test]
    fn norm_of_lphi_is_cached() {
        let t = sample_terms();
        assert!((t.norm_lphi - 5.0).abs() < 1e-14);
    }

    #[test]
    fn psi_value_by_hand() {
        let t = sample_terms();
        let theta = Vector::from_vec(vec![0.1, 0.2]);
        let u = Vector::from_vec(vec![1.0, 1.0]);
        let v = psi_value(&t, &theta, 0.3, &u, 2.0, 5.0);
        let expected = 0.4 + (1.0 - 2.0) + (0.3 + 0.8) - 5.0 * 0.3 + 5.0 * 0.5 + 2.0 * 0.5;
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn psi_is_linear_in_the_bound() {
        let t = sample_terms();
        let theta = Vector::from_vec(vec![0.1, 0.2]);
        let u = Vector::from_vec(vec![0.3, -0.7]);
        let a = psi_value(&t, &theta, 0.2, &u, 0.1, 2.0);
        let b = psi_value(&t, &theta, 1.2, &u, 0.1, 2.0);
        assert!((a - b - t.norm_lphi).abs() < 1e-13);
    }

    #[test]
    fn psi_with_true_parameter_and_zero_bound_is_ideal() {
        let t = sample_terms();
        let theta_star = Vector::from_vec(vec![0.5, -0.25]);
        let u = Vector::from_vec(vec![0.3, -0.7]);
        let ideal = t.lf + t.lg.dot(&u) + t.lphi.dot(&theta_star) + 2.0 * t.psi_top + 0.1 * t.psi_top;
        assert!((psi_value(&t, &theta_star, 0.0, &u, 0.1, 2.0) - ideal).abs() < 1e-14);

        // A bound covering the estimation error can only lower the value.
        let theta_hat = Vector::from_vec(vec![0.7, -0.1]);
        let nu = (&theta_hat - &theta_star).norm();
        assert!(psi_value(&t, &theta_hat, nu, &u, 0.1, 2.0) <= ideal + 1e-12);
    }

    #[test]
    fn softmin_single_value() {
        assert_eq!(softmin_psi0(&[0.37], 3.0).unwrap(), 0.37);
    }

    #[test]
    fn softmin_identical_values() {
        let v = softmin_psi0(&[1.5, 1.5], 3.0).unwrap();
        assert!((v - (1.5 - 2f64.ln() / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn softmin_by_hand() {
        let v = softmin_psi0(&[0.5, 2.0], 3.0).unwrap();
        let direct = -((-1.5f64).exp() + (-6.0f64).exp()).ln() / 3.0;
        assert!((v - direct).abs() < 1e-14);
        assert!((v - 0.4963).abs() < 1e-4);
    }

    #[test]
    fn softmin_is_stable_for_large_arguments() {
        let v = softmin_psi0(&[1000.0, 1001.0], 3.0).unwrap();
        assert!(v.is_finite());
        assert!(v <= 1000.0 && v >= 1000.0 - 2f64.ln() / 3.0);
        let v = softmin_psi0(&[-500.0, 20.0], 3.0).unwrap();
        assert!((v + 500.0).abs() < 1e-12);
    }

    #[test]
    fn softmin_bounds_and_weights() {
        let h = [0.3, -0.2, 1.4, 0.9];
        let (v, w) = softmin_with_weights(&h, 2.0).unwrap();
        assert!(v <= -0.2 && v >= -0.2 - 4f64.ln() / 2.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmin_errors() {
        assert!(matches!(softmin_psi0(&[], 3.0), Err(Error::EmptyBarrierSet)));
        assert!(matches!(softmin_psi0(&[1.0], 0.0), Err(Error::InvalidSharpness(_))));
    }
}
