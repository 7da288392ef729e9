//! C¹ interpolation of the sampled estimate and error bound between sample
//! times.
//!
//! On the interval `[t_k, t_{k+1})` the signals move from `(theta_{k-1},
//! nu_{k-1})` to `(theta_k, nu_k)` with weight `xi((t - t_k) / (t_{k+1} - t_k))`,
//! using `theta_{-1} = theta_0` and `nu_{-1} = nu_0`. Only values already
//! available at time `t` are used.

use std::f64::consts::PI;

use crate::{Error, Result, Vector};

/// Smooth step `xi(t) = eta t - sin(2 pi eta t) / (2 pi)` on `[0, 1/eta]`,
/// zero before and one after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendFunction {
    eta: f64,
}

impl BlendFunction {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta >= 1.0 && eta.is_finite()) {
            return Err(Error::InvalidBlendRate(eta));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn value(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else if t > 1.0 / self.eta {
            1.0
        } else {
            self.eta * t - (2.0 * PI * self.eta * t).sin() / (2.0 * PI)
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if (0.0..=1.0 / self.eta).contains(&t) {
            self.eta * (1.0 - (2.0 * PI * self.eta * t).cos())
        } else {
            0.0
        }
    }
}

/// Free-function form of [`BlendFunction::value`].
pub fn xi(t: f64, eta: f64) -> Result<f64> {
    Ok(BlendFunction::new(eta)?.value(t))
}

/// Sampled estimates and bounds with their sample times.
///
/// The end of the interval that begins at the last sample time is not a
/// sample yet; it is supplied with [`Schedule::set_interval_end`] so the
/// blend over that interval can be evaluated causally. Past the end of the
/// schedule the last pair is held.
#[derive(Debug, Clone)]
pub struct Schedule {
    grid: Vec<f64>,
    thetas: Vec<Vector>,
    nus: Vec<f64>,
    interval_end: Option<f64>,
    blend: BlendFunction,
}

impl Schedule {
    pub fn new(blend: BlendFunction, t0: f64, theta0: Vector, nu0: f64) -> Self {
        Self {
            grid: vec![t0],
            thetas: vec![theta0],
            nus: vec![nu0],
            interval_end: None,
            blend,
        }
    }

    /// Appends `(theta_k, nu_k)` that becomes available at `t_k`.
    pub fn push(&mut self, t: f64, theta: Vector, nu: f64) -> Result<()> {
        let prev = *self.grid.last().expect("schedule is never empty");
        if !(t > prev) {
            return Err(Error::NonIncreasingGrid { prev, next: t });
        }
        if theta.len() != self.thetas[0].len() {
            return Err(Error::Dimension(format!(
                "schedule holds estimates of length {}, got {}",
                self.thetas[0].len(),
                theta.len()
            )));
        }
        self.grid.push(t);
        self.thetas.push(theta);
        self.nus.push(nu);
        if self.interval_end.is_some_and(|end| end <= t) {
            self.interval_end = None;
        }
        Ok(())
    }

    /// Declares the next sample time, closing the interval that starts at the
    /// last grid point.
    pub fn set_interval_end(&mut self, t: f64) -> Result<()> {
        let prev = *self.grid.last().expect("schedule is never empty");
        if !(t > prev) {
            return Err(Error::NonIncreasingGrid { prev, next: t });
        }
        self.interval_end = Some(t);
        Ok(())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn thetas(&self) -> &[Vector] {
        &self.thetas
    }

    pub fn nus(&self) -> &[f64] {
        &self.nus
    }

    pub fn blend(&self) -> BlendFunction {
        self.blend
    }

    /// Interpolated `(theta(t), nu(t))`.
    pub fn eval(&self, t: f64) -> Result<(Vector, f64)> {
        let start = self.grid[0];
        if t < start || t.is_nan() {
            return Err(Error::BeforeSchedule { t, start });
        }
        // Last k with t_k <= t.
        let k = self.grid.partition_point(|&tk| tk <= t) - 1;
        let end = if k + 1 < self.grid.len() {
            Some(self.grid[k + 1])
        } else {
            self.interval_end.filter(|&e| t < e)
        };
        let Some(end) = end else {
            return Ok((self.thetas[k].clone(), self.nus[k]));
        };
        let prev = k.saturating_sub(1);
        let w = self.blend.value((t - self.grid[k]) / (end - self.grid[k]));
        let theta = &self.thetas[k] * w + &self.thetas[prev] * (1.0 - w);
        let nu = w * self.nus[k] + (1.0 - w) * self.nus[prev];
        Ok((theta, nu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blend2() -> BlendFunction {
        BlendFunction::new(2.0).unwrap()
    }

    #[test]
    fn xi_boundaries_and_midpoint() {
        assert_eq!(xi(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(xi(1.0, 2.0).unwrap(), 1.0);
        assert!((xi(0.25, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(xi(-3.0, 1.0).unwrap(), 0.0);
        assert_eq!(xi(0.5 + 1e-9, 2.0).unwrap(), 1.0);
        assert!((xi(0.5, 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn xi_rejects_slow_blend() {
        assert!(matches!(xi(0.1, 0.5), Err(Error::InvalidBlendRate(_))));
        assert!(BlendFunction::new(f64::NAN).is_err());
    }

    #[test]
    fn xi_is_nondecreasing_for_shipped_rates() {
        for eta in [1.0, 2.0, 5.0] {
            let b = BlendFunction::new(eta).unwrap();
            let mut prev = b.value(-0.1);
            for i in 0..=1200 {
                let v = b.value(-0.1 + i as f64 * 1e-3);
                assert!(v >= prev - 1e-15);
                assert!((0.0..=1.0).contains(&v));
                prev = v;
            }
        }
    }

    #[test]
    fn xi_is_continuously_differentiable_at_the_joints() {
        let h = 1e-5;
        for eta in [1.0, 2.0, 5.0] {
            let b = BlendFunction::new(eta).unwrap();
            for joint in [0.0, 1.0 / eta] {
                let fd = (b.value(joint + h) - b.value(joint - h)) / (2.0 * h);
                assert!(fd.abs() <= 1e-6, "eta {eta} joint {joint}: {fd}");
                assert!(b.derivative(joint).abs() < 1e-12);
            }
            let t = 0.3 / eta;
            let fd = (b.value(t + h) - b.value(t - h)) / (2.0 * h);
            assert!((fd - b.derivative(t)).abs() < 1e-6);
        }
    }

    fn sample_schedule() -> Schedule {
        let mut s = Schedule::new(blend2(), 0.0, Vector::from_vec(vec![0.0, 0.0]), 4.0);
        s.push(1.0, Vector::from_vec(vec![1.0, 2.0]), 3.0).unwrap();
        s.push(2.0, Vector::from_vec(vec![2.0, 2.0]), 1.0).unwrap();
        s.set_interval_end(3.0).unwrap();
        s
    }

    #[test]
    fn eval_at_sample_times_returns_previous_pair() {
        let s = sample_schedule();
        let (theta, nu) = s.eval(1.0).unwrap();
        assert_eq!(theta.as_slice(), &[0.0, 0.0]);
        assert_eq!(nu, 4.0);
        let (theta, nu) = s.eval(2.0).unwrap();
        assert_eq!(theta.as_slice(), &[1.0, 2.0]);
        assert_eq!(nu, 3.0);
    }

    #[test]
    fn eval_reaches_current_pair_before_interval_end() {
        let s = sample_schedule();
        // eta = 2 finishes the blend halfway through the interval.
        let (theta, nu) = s.eval(1.75).unwrap();
        assert_eq!(theta.as_slice(), &[1.0, 2.0]);
        assert_eq!(nu, 3.0);
        let (theta, nu) = s.eval(3.0 - 1e-12).unwrap();
        assert_eq!(theta.as_slice(), &[2.0, 2.0]);
        assert_eq!(nu, 1.0);
    }

    #[test]
    fn first_interval_is_constant() {
        let s = sample_schedule();
        for i in 0..10 {
            let (theta, nu) = s.eval(i as f64 * 0.1).unwrap();
            assert_eq!(theta.as_slice(), &[0.0, 0.0]);
            assert_eq!(nu, 4.0);
        }
    }

    #[test]
    fn equal_endpoints_give_constant_blend() {
        let s = sample_schedule();
        for i in 0..10 {
            let (theta, _) = s.eval(2.0 + i as f64 * 0.1).unwrap();
            assert_eq!(theta[1], 2.0);
        }
    }

    #[test]
    fn continuity_across_sample_times() {
        let s = sample_schedule();
        for tk in [1.0, 2.0] {
            let (left, nl) = s.eval(tk - 1e-13).unwrap();
            let (right, nr) = s.eval(tk).unwrap();
            assert!((left - right).abs().max() <= 1e-12);
            assert!((nl - nr).abs() <= 1e-12);
        }
    }

    #[test]
    fn holds_last_pair_after_the_end() {
        let s = sample_schedule();
        let (theta, nu) = s.eval(10.0).unwrap();
        assert_eq!(theta.as_slice(), &[2.0, 2.0]);
        assert_eq!(nu, 1.0);

        let mut open = Schedule::new(blend2(), 0.0, Vector::zeros(1), 1.0);
        open.push(0.5, Vector::from_element(1, 1.0), 0.5).unwrap();
        assert_eq!(open.eval(0.7).unwrap().1, 0.5);
    }

    #[test]
    fn nonuniform_grid_uses_normalized_time() {
        let mut s = Schedule::new(blend2(), 0.0, Vector::zeros(1), 1.0);
        s.push(0.1, Vector::from_element(1, 1.0), 1.0).unwrap();
        s.push(1.1, Vector::from_element(1, 3.0), 1.0).unwrap();
        // Normalized time 0.25 in [0.1, 1.1) gives weight 0.5 between the
        // estimates available at 0.0 and 0.1.
        let (theta, _) = s.eval(0.35).unwrap();
        assert!((theta[0] - 0.5).abs() < 1e-14, "{theta}");
    }

    #[test]
    fn errors() {
        let mut s = sample_schedule();
        assert!(matches!(s.eval(-0.1), Err(Error::BeforeSchedule { .. })));
        assert!(s.push(2.0, Vector::zeros(2), 0.0).is_err());
        assert!(s.push(5.0, Vector::zeros(3), 0.0).is_err());
        assert!(s.set_interval_end(1.5).is_err());
    }
}
