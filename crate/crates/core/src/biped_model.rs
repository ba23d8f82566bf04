//! Reduced-order 3D walking plant.
//!
//! The pelvis moves as a linear inverted pendulum over a point stance foot in
//! both the sagittal and frontal planes. The torso is a flywheel whose
//! reaction torque pushes on the pendulum, and whose center of mass may be
//! displaced forward of the hip by `c_x`. Steps are instantaneous: the swing
//! foot becomes the stance foot at the reset map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Torso mass of the unmodified robot (kg).
pub const NOMINAL_TORSO_MASS: f64 = 10.33;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StanceSide {
    Left,
    Right,
}

impl StanceSide {
    pub fn other(self) -> Self {
        match self {
            StanceSide::Left => StanceSide::Right,
            StanceSide::Right => StanceSide::Left,
        }
    }
}

/// Hybrid state of the reduced-order biped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    /// Torso pitch (rad), positive leaning forward.
    pub phi: f64,
    pub phidot: f64,
    pub px: f64,
    pub py: f64,
    pub stance_side: StanceSide,
    /// Step index.
    pub k: u64,
    pub t: f64,
}

impl RobotState {
    pub fn is_finite(&self) -> bool {
        [
            self.x,
            self.y,
            self.vx,
            self.vy,
            self.phi,
            self.phidot,
            self.px,
            self.py,
            self.t,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// True plant parameters. The controller never reads these directly; it
/// carries its own nominal copy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Torso mass (kg).
    pub m: f64,
    /// Torso radius of gyration (m); pitch inertia is `m * r_gyr^2`.
    pub r_gyr: f64,
    /// Pendulum height (m).
    pub h: f64,
    /// Longitudinal offset of the torso COM ahead of the hip (m).
    pub c_x: f64,
    /// Mass of the legs and pelvis structure carried with the hip (kg).
    pub m_legs: f64,
    pub g: f64,
    /// Step duration (s).
    pub t_step: f64,
    /// Fraction of horizontal velocity kept through the reset map.
    pub rho: f64,
    /// Nominal lateral step width (m).
    pub width: f64,
    /// Torso torque limit (N m).
    pub tau_f_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            m: NOMINAL_TORSO_MASS,
            r_gyr: 0.3,
            h: 0.9,
            c_x: 0.05,
            m_legs: 20.0,
            g: 9.81,
            t_step: 0.4,
            rho: 1.0,
            width: 0.2,
            tau_f_max: 60.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.m,
            self.r_gyr,
            self.h,
            self.c_x,
            self.m_legs,
            self.g,
            self.t_step,
            self.rho,
            self.width,
            self.tau_f_max,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        let checks = [
            (self.m > 0.0, "m must be positive"),
            (self.r_gyr > 0.0, "r_gyr must be positive"),
            (self.h > 0.0, "h must be positive"),
            (self.m_legs >= 0.0, "m_legs must be non-negative"),
            (self.g > 0.0, "g must be positive"),
            (self.t_step > 0.0, "t_step must be positive"),
            (self.rho > 0.0 && self.rho <= 1.0, "rho must lie in (0, 1]"),
            (self.tau_f_max > 0.0, "tau_f_max must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParams(msg.to_string()));
            }
        }
        Ok(())
    }

    pub fn inertia(&self) -> f64 {
        self.m * self.r_gyr * self.r_gyr
    }

    /// Pendulum natural frequency `sqrt(g / h)`.
    pub fn lambda(&self) -> f64 {
        (self.g / self.h).sqrt()
    }

    /// Horizontal offset of the whole-body COM from the hip.
    pub fn com_offset(&self) -> f64 {
        self.m * self.c_x / (self.m + self.m_legs)
    }

    /// Constant pelvis-frame offset seen by the pendulum once the torso is
    /// held still: the gravity term through the whole-body COM minus the
    /// reaction of the holding torque `m g c_x`.
    pub fn static_bias_offset(&self) -> f64 {
        self.com_offset() - self.c_x
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub f_ext_x: f64,
    pub f_ext_y: f64,
    /// Ground slope under the current step (rad).
    pub slope_theta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantCommand {
    pub tau_f: f64,
}

impl PlantCommand {
    pub fn saturated(tau_f: f64, p: &ModelParams) -> Self {
        Self {
            tau_f: tau_f.clamp(-p.tau_f_max, p.tau_f_max),
        }
    }
}

/// Time derivative of the continuous part of [`RobotState`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StateRate {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub phi: f64,
    pub phidot: f64,
}

pub fn continuous_dynamics(
    s: &RobotState,
    u: &PlantCommand,
    p: &ModelParams,
    d: &Disturbance,
) -> Result<StateRate> {
    if !s.is_finite() {
        return Err(Error::NonFinite("robot state"));
    }
    let w2 = p.g / p.h;
    let ax = w2 * (s.x + p.com_offset() - s.px) - u.tau_f / (p.m * p.h) + d.f_ext_x / p.m
        - p.g * d.slope_theta.sin();
    let ay = w2 * (s.y - s.py) + d.f_ext_y / p.m;
    let phiddot = (u.tau_f - p.m * p.g * p.c_x) / p.inertia();
    let rate = StateRate {
        x: s.vx,
        y: s.vy,
        vx: ax,
        vy: ay,
        phi: s.phidot,
        phidot: phiddot,
    };
    if [rate.vx, rate.vy, rate.phidot].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state derivative"));
    }
    Ok(rate)
}

fn advance(s: &RobotState, r: &StateRate, h: f64) -> RobotState {
    RobotState {
        x: s.x + h * r.x,
        y: s.y + h * r.y,
        vx: s.vx + h * r.vx,
        vy: s.vy + h * r.vy,
        phi: s.phi + h * r.phi,
        phidot: s.phidot + h * r.phidot,
        ..*s
    }
}

/// One classical RK4 step with the command and disturbance held constant.
pub fn integrate_step(
    s: &RobotState,
    u: &PlantCommand,
    p: &ModelParams,
    d: &Disturbance,
    dt: f64,
) -> Result<RobotState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    let k1 = continuous_dynamics(s, u, p, d)?;
    let k2 = continuous_dynamics(&advance(s, &k1, 0.5 * dt), u, p, d)?;
    let k3 = continuous_dynamics(&advance(s, &k2, 0.5 * dt), u, p, d)?;
    let k4 = continuous_dynamics(&advance(s, &k3, dt), u, p, d)?;
    let c = dt / 6.0;
    let next = RobotState {
        x: s.x + c * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        y: s.y + c * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        vx: s.vx + c * (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx),
        vy: s.vy + c * (k1.vy + 2.0 * k2.vy + 2.0 * k3.vy + k4.vy),
        phi: s.phi + c * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi),
        phidot: s.phidot + c * (k1.phidot + 2.0 * k2.phidot + 2.0 * k3.phidot + k4.phidot),
        t: s.t + dt,
        ..*s
    };
    if !next.is_finite() {
        return Err(Error::NonFinite("integrated state"));
    }
    Ok(next)
}

/// Closed-form linear inverted pendulum solution `(x(t), v(t))` about a fixed
/// foot, valid with no torque, offset or disturbance.
pub fn closed_form_lip(x0: f64, v0: f64, p_foot: f64, p: &ModelParams, t: f64) -> (f64, f64) {
    let lam = p.lambda();
    let (s, c) = ((lam * t).sinh(), (lam * t).cosh());
    let r0 = x0 - p_foot;
    (
        p_foot + r0 * c + v0 / lam * s,
        lam * r0 * s + v0 * c,
    )
}

/// Orbital energy `(v^2 - lambda^2 r^2) / 2` of a pendulum coordinate.
pub fn orbital_energy(r: f64, v: f64, p: &ModelParams) -> f64 {
    let lam = p.lambda();
    0.5 * (v * v - lam * lam * r * r)
}

/// Reset map at touchdown: the swing foot lands `landing` away from the old
/// stance foot and takes over support.
pub fn step_transition(s: &RobotState, landing: (f64, f64), p: &ModelParams) -> Result<RobotState> {
    let (dx, dy) = landing;
    if !dx.is_finite() || !dy.is_finite() {
        return Err(Error::NonFinite("landing offset"));
    }
    Ok(RobotState {
        px: s.px + dx,
        py: s.py + dy,
        vx: p.rho * s.vx,
        vy: p.rho * s.vy,
        stance_side: s.stance_side.other(),
        k: s.k + 1,
        ..*s
    })
}

pub const FALL_PITCH: f64 = 0.8;
pub const FALL_REACH: f64 = 1.5;
pub const FALL_SPEED_X: f64 = 3.0;
pub const FALL_SPEED_Y: f64 = 2.0;

pub fn is_fallen(s: &RobotState, _p: &ModelParams) -> bool {
    !s.is_finite()
        || s.phi.abs() > FALL_PITCH
        || (s.x - s.px).abs() > FALL_REACH
        || s.vx.abs() > FALL_SPEED_X
        || s.vy.abs() > FALL_SPEED_Y
}
