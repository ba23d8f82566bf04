//! Per-step velocity regulators and the adaptive trajectory modification.

use serde::{Deserialize, Serialize};

use crate::nominal_controller::DeltaY;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegulatorGains {
    /// m per (m/s).
    pub kp_x: f64,
    pub kd_x: f64,
    pub kp_y: f64,
    pub kd_y: f64,
    /// rad per rad.
    pub kp_phi: f64,
    /// rad per (rad/s).
    pub kd_phi: f64,
}

impl Default for RegulatorGains {
    fn default() -> Self {
        Self {
            kp_x: 0.10,
            kd_x: 0.05,
            kp_y: 0.10,
            kd_y: 0.05,
            kp_phi: 0.0,
            kd_phi: 0.0,
        }
    }
}

impl RegulatorGains {
    pub fn is_valid(&self) -> bool {
        [self.kp_x, self.kd_x, self.kp_y, self.kd_y, self.kp_phi, self.kd_phi]
            .iter()
            .all(|g| g.is_finite() && *g >= 0.0)
    }
}

/// Longitudinal foot-placement offset. Positive lengthens the step.
pub fn foot_placement_x(v_k: f64, v_prev: f64, v_d: f64, gains: &RegulatorGains) -> f64 {
    gains.kp_x * (v_k - v_d) + gains.kd_x * (v_k - v_prev)
}

pub fn foot_placement_y(v_k: f64, v_prev: f64, v_d: f64, gains: &RegulatorGains) -> f64 {
    gains.kp_y * (v_k - v_d) + gains.kd_y * (v_k - v_prev)
}

/// Network feedforward for the three decoupled subsystems.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Psi {
    /// Hip, knee (m).
    pub x: [f64; 2],
    /// Swing hip roll, stance hip roll (m).
    pub y: [f64; 2],
    /// Stance hip pitch (rad).
    pub phi: f64,
}

impl Psi {
    pub const ZERO: Psi = Psi {
        x: [0.0; 2],
        y: [0.0; 2],
        phi: 0.0,
    };

    pub fn to_array(self) -> [f64; 5] {
        [self.x[0], self.x[1], self.y[0], self.y[1], self.phi]
    }

    /// Channel layout of `Psi` inside [`DeltaY`].
    pub fn embed(&self) -> DeltaY {
        DeltaY {
            hip: self.x[0],
            knee: self.x[1],
            swhr: self.y[0],
            sthr: self.y[1],
            phi: self.phi,
        }
    }
}

/// Values sampled at the mid-step event.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Measurements {
    pub vx: f64,
    pub vx_prev: f64,
    pub vy: f64,
    pub vy_prev: f64,
    pub phi: f64,
    pub phidot: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct References {
    pub v_d_x: f64,
    pub v_d_y: f64,
    pub phi_d: f64,
    pub phidot_d: f64,
}

/// Heuristic PD terms plus network feedforward. The PD part of each
/// redundant pair goes to its first channel (swing hip pitch, swing hip
/// roll).
pub fn assemble_delta_y(meas: &Measurements, refs: &References, gains: &RegulatorGains, psi: &Psi) -> DeltaY {
    let pd = heuristic_delta_y(meas, refs, gains);
    DeltaY {
        hip: pd.hip + psi.x[0],
        knee: psi.x[1],
        swhr: pd.swhr + psi.y[0],
        sthr: psi.y[1],
        phi: pd.phi + psi.phi,
    }
}

/// The regulators alone, with no feedforward path at all.
pub fn heuristic_delta_y(meas: &Measurements, refs: &References, gains: &RegulatorGains) -> DeltaY {
    DeltaY {
        hip: foot_placement_x(meas.vx, meas.vx_prev, refs.v_d_x, gains),
        knee: 0.0,
        swhr: foot_placement_y(meas.vy, meas.vy_prev, refs.v_d_y, gains),
        sthr: 0.0,
        phi: gains.kp_phi * (meas.phi - refs.phi_d) + gains.kd_phi * (meas.phidot - refs.phidot_d),
    }
}

/// Step-to-step memory of the regulators.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RegulatorState {
    pub v_prev_x: Option<f64>,
    pub v_prev_y: Option<f64>,
    pub latched: DeltaY,
    pub gains: RegulatorGains,
}

impl RegulatorState {
    pub fn new(gains: RegulatorGains) -> Self {
        Self {
            gains,
            ..Self::default()
        }
    }

    /// Record this step's average velocities and return them with the
    /// previous step's. On the first call the previous values equal the
    /// current ones.
    pub fn observe(&mut self, vx: f64, vy: f64, phi: f64, phidot: f64) -> Measurements {
        let vx_prev = self.v_prev_x.unwrap_or(vx);
        let vy_prev = self.v_prev_y.unwrap_or(vy);
        self.v_prev_x = Some(vx);
        self.v_prev_y = Some(vy);
        Measurements {
            vx,
            vx_prev,
            vy,
            vy_prev,
            phi,
            phidot,
        }
    }
}
