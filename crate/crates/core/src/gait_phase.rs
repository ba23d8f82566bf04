//! Phase variable and Bernstein-form Bézier curves.
//!
//! Every desired output in the walking controller is a Bézier polynomial of
//! the normalized step time `tau`, so these two primitives are shared by the
//! nominal gait map and the swing-foot trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default Bézier degree for swing-foot trajectories.
pub const SWING_DEGREE: usize = 5;

/// Clock for the current walking step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseClock {
    /// Start time of the current step (s).
    pub t_minus: f64,
    /// Nominal step duration (s).
    pub t_step: f64,
}

impl PhaseClock {
    pub fn new(t_minus: f64, t_step: f64) -> Result<Self> {
        if !(t_step > 0.0) || !t_step.is_finite() {
            return Err(Error::InvalidClock(t_step));
        }
        if !t_minus.is_finite() {
            return Err(Error::NonFinite("phase clock start"));
        }
        Ok(Self { t_minus, t_step })
    }

    /// Normalized step time, clamped to `[0, 1]`.
    pub fn phase(&self, t: f64) -> Result<f64> {
        if !(self.t_step > 0.0) {
            return Err(Error::InvalidClock(self.t_step));
        }
        if t.is_nan() {
            return Err(Error::NonFinite("phase time"));
        }
        if t < self.t_minus {
            return Err(Error::TimeBeforeStep {
                t,
                t_minus: self.t_minus,
            });
        }
        Ok(((t - self.t_minus) / self.t_step).clamp(0.0, 1.0))
    }

    /// Restart the clock at `t`, keeping the step duration.
    pub fn restart(&mut self, t: f64) {
        self.t_minus = t;
    }
}

/// Bézier polynomial in Bernstein form over `tau in [0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BezierCurve {
    coeffs: Vec<f64>,
}

impl BezierCurve {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::InvalidCurve(format!(
                "need at least 2 coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("bezier coefficients"));
        }
        Ok(Self { coeffs })
    }

    /// Constant curve of the given degree.
    pub fn constant(value: f64, degree: usize) -> Result<Self> {
        Self::new(vec![value; degree.max(1) + 1])
    }

    /// Degree-5 transition from `start` to `end` with zero rate at both ends.
    pub fn transition(start: f64, end: f64) -> Result<Self> {
        Self::new(vec![start, start, start, end, end, end])
    }

    /// Degree-5 transition that leaves `start` with rate `start_rate`
    /// (per unit of this curve's parameter) and arrives at `end` at rest.
    pub fn transition_with_rate(start: f64, start_rate: f64, end: f64) -> Result<Self> {
        let d = SWING_DEGREE as f64;
        let a1 = start + start_rate / d;
        Self::new(vec![start, a1, 0.5 * (a1 + end), end, end, end])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let m = self.degree();
        if tau == 0.0 {
            return Ok(self.coeffs[0]);
        }
        if tau == 1.0 {
            return Ok(self.coeffs[m]);
        }
        Ok(bernstein_sum(&self.coeffs, tau))
    }

    /// Derivative with respect to `tau`.
    pub fn deriv(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let m = self.degree();
        let diffs: Vec<f64> = self.coeffs.windows(2).map(|w| w[1] - w[0]).collect();
        let scale = m as f64;
        if diffs.len() == 1 {
            return Ok(scale * diffs[0]);
        }
        if tau == 0.0 {
            return Ok(scale * diffs[0]);
        }
        if tau == 1.0 {
            return Ok(scale * diffs[m - 1]);
        }
        Ok(scale * bernstein_sum(&diffs, tau))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::PhaseOutOfDomain(tau))
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn bernstein_sum(coeffs: &[f64], tau: f64) -> f64 {
    let m = coeffs.len() - 1;
    let s = 1.0 - tau;
    coeffs
        .iter()
        .enumerate()
        .map(|(k, a)| a * binomial(m, k) * tau.powi(k as i32) * s.powi((m - k) as i32))
        .sum()
}
