//! Time-varying scaling functions and the stage schedules built from them.
//!
//! A scaling function
//!
//! ```text
//! rho(t) = T^h / (T + t0 - t)^h   for t in [t0, t0 + T)
//!        = 1                      otherwise
//! ```
//!
//! grows without bound as `t` approaches the deadline `t0 + T`. The dynamics
//! only ever consume its logarithmic derivative `rho'/rho = h / (T + t0 - t)`,
//! which is evaluated in that simplified form so that nothing overflows near
//! the deadline.

use crate::error::{Error, Result};

/// Default guard fraction: integration of a stage stops at `deadline - epsilon_rel * T`.
pub const DEFAULT_EPSILON_REL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingSpec {
    pub t_start: f64,
    pub duration: f64,
    pub exponent: f64,
}

impl ScalingSpec {
    pub fn new(t_start: f64, duration: f64, exponent: f64) -> Result<Self> {
        if !t_start.is_finite() {
            return Err(Error::Validation(format!("t0 = {t_start} must be finite")));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Validation(format!(
                "duration T = {duration} must be positive"
            )));
        }
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::Validation(format!(
                "exponent h = {exponent} must be positive"
            )));
        }
        Ok(ScalingSpec {
            t_start,
            duration,
            exponent,
        })
    }

    pub fn deadline(&self) -> f64 {
        self.t_start + self.duration
    }

    fn is_active(&self, t: f64) -> bool {
        t >= self.t_start && t < self.deadline()
    }

    pub fn rho(&self, t: f64) -> f64 {
        if self.is_active(t) {
            (self.duration / (self.deadline() - t)).powf(self.exponent)
        } else {
            1.0
        }
    }

    /// `rho'(t) / rho(t)`; zero outside the active interval.
    pub fn rho_ratio(&self, t: f64) -> f64 {
        if self.is_active(t) {
            self.exponent / (self.deadline() - t)
        } else {
            0.0
        }
    }

    /// `v0 * rho(t)^(-alpha) * exp(-kappa (t - t_start))`.
    ///
    /// With `alpha = 2` this is the closed-form solution of
    /// `V' = -(kappa + 2 rho'/rho) V`; with `kappa = 0` it is the decay bound
    /// used for the Lyapunov functions of both algorithms.
    pub fn envelope(&self, t: f64, kappa: f64, alpha: f64, v0: f64) -> f64 {
        let decay = (-kappa * (t - self.t_start)).exp();
        if self.is_active(t) {
            // rho^-alpha computed from the base to avoid overflow of rho itself
            let base = (self.deadline() - t) / self.duration;
            v0 * base.powf(alpha * self.exponent) * decay
        } else {
            v0 * decay
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageLayout {
    /// One scaling function.
    Single,
    /// Two consecutive scaling functions.
    Multi,
}

/// Contiguous sequence of scaling stages.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSchedule {
    stages: Vec<ScalingSpec>,
    pub epsilon_rel: f64,
}

impl StageSchedule {
    pub fn single(t0: f64, t1: f64, h1: f64) -> Result<Self> {
        Self::from_stages(vec![ScalingSpec::new(t0, t1, h1)?], DEFAULT_EPSILON_REL)
    }

    /// Stage 2 starts exactly at the first deadline `t0 + T1`.
    pub fn multi(t0: f64, t1: f64, h1: f64, t2: f64, h2: f64) -> Result<Self> {
        let first = ScalingSpec::new(t0, t1, h1)?;
        let second = ScalingSpec::new(first.deadline(), t2, h2)?;
        Self::from_stages(vec![first, second], DEFAULT_EPSILON_REL)
    }

    pub fn from_stages(stages: Vec<ScalingSpec>, epsilon_rel: f64) -> Result<Self> {
        if stages.is_empty() || stages.len() > 2 {
            return Err(Error::Validation(format!(
                "a schedule has 1 or 2 stages, got {}",
                stages.len()
            )));
        }
        for w in stages.windows(2) {
            if w[1].t_start != w[0].deadline() {
                return Err(Error::Validation(format!(
                    "stage starting at {} does not begin at the previous deadline {}",
                    w[1].t_start,
                    w[0].deadline()
                )));
            }
        }
        if !(epsilon_rel > 0.0 && epsilon_rel < 1.0) {
            return Err(Error::Validation(format!(
                "epsilon_rel = {epsilon_rel} must lie in (0, 1)"
            )));
        }
        Ok(StageSchedule {
            stages,
            epsilon_rel,
        })
    }

    pub fn with_epsilon_rel(mut self, epsilon_rel: f64) -> Result<Self> {
        let stages = std::mem::take(&mut self.stages);
        Self::from_stages(stages, epsilon_rel)
    }

    pub fn stages(&self) -> &[ScalingSpec] {
        &self.stages
    }

    pub fn layout(&self) -> StageLayout {
        if self.stages.len() == 1 {
            StageLayout::Single
        } else {
            StageLayout::Multi
        }
    }

    pub fn stage(&self, k: usize) -> &ScalingSpec {
        &self.stages[k]
    }

    pub fn t_start(&self) -> f64 {
        self.stages[0].t_start
    }

    pub fn final_deadline(&self) -> f64 {
        self.stages.last().expect("non-empty").deadline()
    }

    /// `deadline - epsilon_rel * T` for stage `k`.
    pub fn guard(&self, k: usize) -> f64 {
        let s = &self.stages[k];
        s.deadline() - self.epsilon_rel * s.duration
    }

    pub fn total_duration(&self) -> f64 {
        self.final_deadline() - self.t_start()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rho_values() {
        let s = ScalingSpec::new(0.0, 1.0, 2.0).unwrap();
        assert_eq!(s.rho(0.0), 1.0);
        assert_eq!(s.rho(0.5), 4.0);
        assert_eq!(s.rho(6.0), 1.0);
        assert_eq!(s.rho(-1.0), 1.0);
    }

    #[test]
    fn ratio_values() {
        let s = ScalingSpec::new(0.0, 1.0, 2.0).unwrap();
        assert_eq!(s.rho_ratio(0.0), 2.0);
        let s = ScalingSpec::new(0.0, 0.3, 2.3).unwrap();
        assert!((s.rho_ratio(0.29) - 230.0).abs() < 1e-9);
        assert_eq!(s.rho_ratio(0.3), 0.0);
        assert_eq!(s.rho_ratio(0.4), 0.0);
    }

    #[test]
    fn envelope_values() {
        let s = ScalingSpec::new(0.5, 1.0, 2.0).unwrap();
        assert_eq!(s.envelope(0.5, 1.0, 2.0, 3.0), 3.0);
        let t = 0.9;
        let closed = s.rho(t).powi(-2) * (-(t - 0.5f64)).exp() * 3.0;
        assert!((s.envelope(t, 1.0, 2.0, 3.0) - closed).abs() < 1e-14);
        assert!(s.envelope(1.5 - 1e-9, 0.0, 0.1, 1.0) < 1e-1);
    }

    #[test]
    fn invalid_specs() {
        assert!(ScalingSpec::new(0.0, 0.0, 1.0).is_err());
        assert!(ScalingSpec::new(0.0, 1.0, -1.0).is_err());
        assert!(ScalingSpec::new(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn schedules() {
        let ms = StageSchedule::multi(0.0, 0.1, 3.0, 0.2, 2.5).unwrap();
        assert_eq!(ms.layout(), StageLayout::Multi);
        assert_eq!(ms.stage(1).t_start, 0.1);
        assert!((ms.final_deadline() - 0.3).abs() < 1e-15);
        assert!((ms.guard(0) - (0.1 - 1e-5)).abs() < 1e-15);

        let gap = vec![
            ScalingSpec::new(0.0, 1.0, 1.0).unwrap(),
            ScalingSpec::new(1.5, 1.0, 1.0).unwrap(),
        ];
        assert!(StageSchedule::from_stages(gap, 1e-4).is_err());
        let ss = StageSchedule::single(0.0, 1.0, 1.0).unwrap();
        assert!(ss.clone().with_epsilon_rel(0.0).is_err());
        assert!(ss.with_epsilon_rel(1e-3).is_ok());
    }

    proptest! {
        #[test]
        fn ratio_matches_log_derivative(
            t0 in -5.0f64..5.0, dur in 0.05f64..10.0, h in 0.2f64..5.0, frac in 0.0f64..0.99,
        ) {
            let s = ScalingSpec::new(t0, dur, h).unwrap();
            let t = t0 + frac * dur;
            let step = 1e-7 * dur;
            prop_assume!(t - step >= t0);
            let deriv = (s.rho(t + step) - s.rho(t - step)) / (2.0 * step);
            let ratio = s.rho_ratio(t);
            prop_assert!((deriv / s.rho(t) - ratio).abs() <= 1e-6 * ratio, "{} vs {}", deriv / s.rho(t), ratio);
        }

        #[test]
        fn ratio_increasing_and_envelope_nonincreasing(
            dur in 0.05f64..10.0, h in 0.2f64..5.0, alpha in 0.01f64..3.0, kappa in 0.0f64..5.0,
            a in 0.0f64..0.999, b in 0.0f64..0.999,
        ) {
            let s = ScalingSpec::new(0.0, dur, h).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi > lo);
            prop_assert!(s.rho_ratio(hi * dur) > s.rho_ratio(lo * dur));
            prop_assert!(s.envelope(hi * dur, kappa, alpha, 1.0) <= s.envelope(lo * dur, kappa, alpha, 1.0));
        }
    }
}
