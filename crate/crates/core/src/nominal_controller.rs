//! Output tracking layer: virtual-constraint error, nominal gait map, torso
//! inner loop and landing command.
//!
//! Outputs are laid out as `[swing_x, swing_y, stance_pitch]`: swing-foot
//! offsets from the stance foot (m) and the stance-hip pitch, which in the
//! reduced model is the negated torso pitch (rad). The five adaptive channels
//! of [`DeltaY`] fold onto that layout with [`DeltaY::output_shift`].

use serde::{Deserialize, Serialize};

use crate::biped_model::{closed_form_lip, ModelParams, RobotState};
use crate::error::{Error, Result};
use crate::gait_phase::BezierCurve;

pub const OUTPUT_DIM: usize = 3;
pub const MAX_DESIRED_SPEED: f64 = 1.5;

/// Trajectory modification for the current step, one value per channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaY {
    /// Swing hip pitch (m of foot travel).
    pub hip: f64,
    pub knee: f64,
    /// Swing hip roll (m).
    pub swhr: f64,
    /// Stance hip roll (m).
    pub sthr: f64,
    /// Stance hip pitch (rad).
    pub phi: f64,
}

impl DeltaY {
    pub const CHANNELS: [&'static str; 5] = ["hip", "knee", "swhr", "sthr", "phi"];

    pub fn to_array(self) -> [f64; 5] {
        [self.hip, self.knee, self.swhr, self.sthr, self.phi]
    }

    /// Shift applied to each physical output. The redundant joint pairs act
    /// on the same foot coordinate, so they add.
    pub fn output_shift(&self) -> [f64; OUTPUT_DIM] {
        [self.hip + self.knee, self.swhr + self.sthr, self.phi]
    }
}

/// `y_a - (y_d + delta_y)`, elementwise.
pub fn virtual_constraint_error(y_a: &[f64], y_d: &[f64], delta_y: &[f64]) -> Result<Vec<f64>> {
    for other in [y_d.len(), delta_y.len()] {
        if other != y_a.len() {
            return Err(Error::LayoutMismatch {
                expected: y_a.len(),
                got: other,
            });
        }
    }
    Ok(y_a
        .iter()
        .zip(y_d)
        .zip(delta_y)
        .map(|((a, d), s)| a - (d + s))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSet {
    pub y_a: [f64; OUTPUT_DIM],
    pub y_d: [f64; OUTPUT_DIM],
    pub shift: [f64; OUTPUT_DIM],
}

impl OutputSet {
    pub fn y2(&self) -> [f64; OUTPUT_DIM] {
        let mut out = [0.0; OUTPUT_DIM];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.y_a[i] - (self.y_d[i] + self.shift[i]);
        }
        out
    }
}

/// Torso PD gains of the inner loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorsoGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for TorsoGains {
    fn default() -> Self {
        Self { kp: 80.0, kd: 8.0 }
    }
}

/// Torso torque from the pitch tracking error, saturated at `tau_f_max`.
pub fn inner_loop_torque(pitch_err: f64, pitch_rate_err: f64, gains: &TorsoGains, tau_f_max: f64) -> f64 {
    (-gains.kp * pitch_err - gains.kd * pitch_rate_err).clamp(-tau_f_max, tau_f_max)
}

/// Resting torso pitch under the inner loop when the torso COM sits `c_x`
/// ahead of the hip.
pub fn torso_equilibrium_pitch(p: &ModelParams, gains: &TorsoGains, target: f64) -> f64 {
    target - p.m * p.g * p.c_x / gains.kp
}

/// Period-two pendulum orbit for alternating foot-relative landings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipOrbit {
    /// `(r, v)` at the start of even and odd steps, `r` relative to the foot.
    pub start: [(f64, f64); 2],
    /// Velocity at the end of even and odd steps.
    pub end_velocity: [f64; 2],
}

impl LipOrbit {
    /// `landings[j]` is the landing that ends a step of parity `j`.
    pub fn new(p: &ModelParams, landings: [f64; 2]) -> Self {
        let lam = p.lambda();
        let (c, s) = ((lam * p.t_step).cosh(), (lam * p.t_step).sinh());
        let m = [[c, s / lam], [lam * s, c]];
        let apply = |z: (f64, f64)| (m[0][0] * z.0 + m[0][1] * z.1, m[1][0] * z.0 + m[1][1] * z.1);
        // (I - M^2) z0 = -M l0 - l1, with l = (L, 0).
        let m2 = [
            [m[0][0] * m[0][0] + m[0][1] * m[1][0], m[0][0] * m[0][1] + m[0][1] * m[1][1]],
            [m[1][0] * m[0][0] + m[1][1] * m[1][0], m[1][0] * m[0][1] + m[1][1] * m[1][1]],
        ];
        let a = [[1.0 - m2[0][0], -m2[0][1]], [-m2[1][0], 1.0 - m2[1][1]]];
        let rhs = (-m[0][0] * landings[0] - landings[1], -m[1][0] * landings[0]);
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let z0 = (
            (rhs.0 * a[1][1] - a[0][1] * rhs.1) / det,
            (a[0][0] * rhs.1 - a[1][0] * rhs.0) / det,
        );
        let e0 = apply(z0);
        let z1 = (e0.0 - landings[0], e0.1);
        let e1 = apply(z1);
        Self {
            start: [z0, z1],
            end_velocity: [e0.1, e1.1],
        }
    }
}

/// Swing-foot trajectory over the remainder of a step. The curve parameter
/// runs from `tau_start` to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SwingTrajectory {
    pub curve: BezierCurve,
    pub tau_start: f64,
}

impl SwingTrajectory {
    pub fn new(from: f64, rate: f64, to: f64, tau_start: f64) -> Result<Self> {
        let span = 1.0 - tau_start;
        if !(span > 0.0) {
            return Err(Error::PhaseOutOfDomain(tau_start));
        }
        Ok(Self {
            curve: BezierCurve::transition_with_rate(from, rate * span, to)?,
            tau_start,
        })
    }

    fn local(&self, tau: f64) -> f64 {
        ((tau - self.tau_start) / (1.0 - self.tau_start)).clamp(0.0, 1.0)
    }

    pub fn eval(&self, tau: f64) -> Result<f64> {
        self.curve.eval(self.local(tau))
    }

    /// Rate with respect to the step phase.
    pub fn rate(&self, tau: f64) -> Result<f64> {
        Ok(self.curve.deriv(self.local(tau))? / (1.0 - self.tau_start))
    }

    pub fn end(&self) -> f64 {
        *self.curve.coeffs().last().expect("curve has coefficients")
    }

    /// Same start state, new endpoint.
    pub fn retarget(&self, tau: f64, to: f64) -> Result<Self> {
        Self::new(self.eval(tau)?, self.rate(tau)?, to, tau.min(1.0 - 1e-9))
    }
}

/// Swing foot position and phase rate at the moment a trajectory is rebuilt.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SwingStart {
    pub x: f64,
    pub rate_x: f64,
    pub y: f64,
    pub rate_y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NominalGait {
    pub v_d_x: f64,
    pub v_d_y: f64,
    pub phi_d: f64,
    pub phidot_d: f64,
    /// `v_d_x * t_step`.
    pub step_length_x: f64,
    pub width: f64,
    /// `(-1)^k * width + v_d_y * t_step`.
    pub lateral_target: f64,
    /// Nominal foot-relative landing chosen from the predicted touchdown
    /// state. Equals `(step_length_x, lateral_target)` on the nominal orbit.
    pub landing_x: f64,
    pub landing_y: f64,
    pub swing_x: SwingTrajectory,
    pub swing_y: SwingTrajectory,
}

impl NominalGait {
    /// Refit both swing curves at `tau` so they end at the commanded landing.
    pub fn retarget(&mut self, tau: f64, landing: (f64, f64)) -> Result<()> {
        self.swing_x = self.swing_x.retarget(tau, landing.0)?;
        self.swing_y = self.swing_y.retarget(tau, landing.1)?;
        Ok(())
    }
}

pub fn lateral_landing(k: u64, width: f64, v_d_y: f64, t_step: f64) -> f64 {
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    sign * width + v_d_y * t_step
}

/// Analytic gait map built on the controller's nominal model.
///
/// Landings are chosen so that, absent model error, the pendulum reaches the
/// nominal orbit's touchdown velocity at the end of the following step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NominalGaitMap {
    pub model: ModelParams,
    pub phi_d: f64,
}

impl NominalGaitMap {
    pub fn new(model: ModelParams) -> Self {
        Self { model, phi_d: 0.0 }
    }

    /// Pendulum-frame offset the nominal model attributes to the held torso.
    pub fn model_offset(&self) -> f64 {
        self.model.static_bias_offset()
    }

    pub fn sagittal_orbit(&self, v_d_x: f64) -> LipOrbit {
        let s = v_d_x * self.model.t_step;
        LipOrbit::new(&self.model, [s, s])
    }

    pub fn lateral_orbit(&self, v_d_y: f64) -> LipOrbit {
        let p = &self.model;
        LipOrbit::new(
            p,
            [
                lateral_landing(0, p.width, v_d_y, p.t_step),
                lateral_landing(1, p.width, v_d_y, p.t_step),
            ],
        )
    }

    /// Starting state for step 0 on the nominal orbit, stance foot at the
    /// origin. Returns `(x, vx, y, vy)`.
    pub fn orbit_start(&self, v_d: (f64, f64)) -> (f64, f64, f64, f64) {
        let sx = self.sagittal_orbit(v_d.0).start[0];
        let sy = self.lateral_orbit(v_d.1).start[0];
        (sx.0 - self.model_offset(), sx.1, sy.0, sy.1)
    }

    fn deadbeat(&self, v_touchdown: f64, target_end_velocity: f64) -> f64 {
        let p = &self.model;
        let lam = p.lambda();
        let (c, s) = ((lam * p.t_step).cosh(), (lam * p.t_step).sinh());
        (c * v_touchdown - target_end_velocity) / (lam * s)
    }

    pub fn update(&self, v_d: (f64, f64), s: &RobotState, tau: f64, swing: SwingStart) -> Result<NominalGait> {
        let (v_d_x, v_d_y) = v_d;
        if !v_d_x.is_finite()
            || !v_d_y.is_finite()
            || v_d_x.abs() > MAX_DESIRED_SPEED
            || v_d_y.abs() > MAX_DESIRED_SPEED
        {
            return Err(Error::VelocityOutOfRange(v_d_x, v_d_y));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::PhaseOutOfDomain(tau));
        }
        let p = &self.model;
        let remaining = (1.0 - tau) * p.t_step;
        let offset = self.model_offset();

        // Touchdown prediction in the pendulum frame; the nominal model's
        // static offset shifts the effective foot.
        let (xi_td, vx_td) = closed_form_lip(s.x - s.px + offset, s.vx, 0.0, p, remaining);
        let (ry_td, vy_td) = closed_form_lip(s.y - s.py, s.vy, 0.0, p, remaining);

        let next = ((s.k + 1) % 2) as usize;
        let landing_x = xi_td + self.deadbeat(vx_td, self.sagittal_orbit(v_d_x).end_velocity[next]);
        let landing_y = ry_td + self.deadbeat(vy_td, self.lateral_orbit(v_d_y).end_velocity[next]);

        Ok(NominalGait {
            v_d_x,
            v_d_y,
            phi_d: self.phi_d,
            phidot_d: 0.0,
            step_length_x: v_d_x * p.t_step,
            width: p.width,
            lateral_target: lateral_landing(s.k, p.width, v_d_y, p.t_step),
            landing_x,
            landing_y,
            swing_x: SwingTrajectory::new(swing.x, swing.rate_x, landing_x, tau.min(0.999))?,
            swing_y: SwingTrajectory::new(swing.y, swing.rate_y, landing_y, tau.min(0.999))?,
        })
    }
}

/// Nominal gait for a step starting now, with the swing foot lifting from
/// the previous stance foot.
pub fn nominal_gait_update(v_d: (f64, f64), s: &RobotState, p: &ModelParams, previous_landing: (f64, f64)) -> Result<NominalGait> {
    NominalGaitMap::new(*p).update(
        v_d,
        s,
        0.0,
        SwingStart {
            x: -previous_landing.0,
            y: -previous_landing.1,
            ..SwingStart::default()
        },
    )
}

/// Foot-relative landing `(dx, dy)` at touchdown.
pub fn landing_command(gait: &NominalGait, delta_y: &DeltaY) -> (f64, f64) {
    (
        gait.landing_x + (delta_y.hip + delta_y.knee),
        gait.landing_y + (delta_y.swhr + delta_y.sthr),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biped_model::{integrate_step, step_transition, Disturbance, PlantCommand, StanceSide};
    use proptest::prelude::*;

    fn bare() -> ModelParams {
        ModelParams {
            c_x: 0.0,
            ..ModelParams::default()
        }
    }

    fn state_at(x: f64, vx: f64, y: f64, vy: f64) -> RobotState {
        RobotState {
            x,
            y,
            vx,
            vy,
            phi: 0.0,
            phidot: 0.0,
            px: 0.0,
            py: 0.0,
            stance_side: StanceSide::Right,
            k: 0,
            t: 0.0,
        }
    }

    #[test]
    fn constraint_error_examples() {
        let y = virtual_constraint_error(&[0.1, 0.2], &[0.05, 0.1], &[0.0, 0.0]).unwrap();
        assert_eq!(y, vec![0.1 - 0.05, 0.2 - 0.1]);
        let y = virtual_constraint_error(&[0.07], &[0.05], &[0.02]).unwrap();
        assert!(y[0].abs() < 1e-15);
        let y = virtual_constraint_error(&[0.1], &[0.05], &[0.02]).unwrap();
        assert!((y[0] - 0.03).abs() < 1e-15);
        assert!(matches!(
            virtual_constraint_error(&[0.1, 0.2], &[0.1], &[0.0, 0.0]),
            Err(Error::LayoutMismatch { .. })
        ));
    }

    #[test]
    fn torque_examples() {
        let g = TorsoGains::default();
        assert_eq!(inner_loop_torque(0.0, 0.0, &g, 60.0), 0.0);
        let pd = TorsoGains { kp: 80.0, kd: 0.0 };
        assert!((inner_loop_torque(0.1, 0.0, &pd, 60.0) + 8.0).abs() < 1e-12);
        assert_eq!(inner_loop_torque(2.0, 0.0, &pd, 60.0), -60.0);
    }

    #[test]
    fn gait_examples() {
        let p = bare();
        let map = NominalGaitMap::new(p);
        let swing = SwingStart::default();
        let g = map.update((0.5, 0.0), &state_at(0.0, 0.0, 0.0, 0.0), 0.0, swing).unwrap();
        assert!((g.step_length_x - 0.2).abs() < 1e-15);

        let g = map.update((0.0, 0.0), &state_at(0.0, 0.0, 0.0, 0.0), 0.0, swing).unwrap();
        assert_eq!(g.step_length_x, 0.0);
        assert_eq!(g.lateral_target, p.width);

        let odd = RobotState { k: 3, ..state_at(0.0, 0.0, 0.0, 0.0) };
        let g = map.update((0.6, 0.1), &odd, 0.0, swing).unwrap();
        assert!((g.step_length_x - 0.24).abs() < 1e-12);
        assert!((g.lateral_target - (-p.width + 0.04)).abs() < 1e-12);

        assert!(matches!(
            map.update((1.6, 0.0), &odd, 0.0, swing),
            Err(Error::VelocityOutOfRange(..))
        ));
    }

    #[test]
    fn orbit_start_lands_on_nominal_targets() {
        for (vx, vy) in [(0.5, 0.0), (0.6, 0.1), (0.4, -0.2), (0.0, 0.0)] {
            let p = ModelParams::default();
            let map = NominalGaitMap::new(p);
            let (x, vxs, y, vys) = map.orbit_start((vx, vy));
            let s = state_at(x, vxs, y, vys);
            let g = map.update((vx, vy), &s, 0.0, SwingStart::default()).unwrap();
            assert!((g.landing_x - g.step_length_x).abs() < 1e-12, "{} vs {}", g.landing_x, g.step_length_x);
            assert!((g.landing_y - g.lateral_target).abs() < 1e-12);
        }
    }

    #[test]
    fn lateral_orbit_is_period_two() {
        let p = bare();
        let orbit = LipOrbit::new(&p, [0.2 + 0.04, -0.2 + 0.04]);
        let (z0, z1) = (orbit.start[0], orbit.start[1]);
        let (r, v) = closed_form_lip(z0.0, z0.1, 0.0, &p, p.t_step);
        assert!((r - 0.24 - z1.0).abs() < 1e-12);
        assert!((v - z1.1).abs() < 1e-12);
        let (r, v) = closed_form_lip(z1.0, z1.1, 0.0, &p, p.t_step);
        assert!((r + 0.16 - z0.0).abs() < 1e-12);
        assert!((v - z0.1).abs() < 1e-12);
        assert!((orbit.end_velocity[0] - z1.1).abs() < 1e-12);
    }

    #[test]
    fn deadbeat_map_recovers_from_velocity_error() {
        // Pure pendulum: one step after a perturbed touchdown the next
        // touchdown velocity is back on the orbit.
        let p = bare();
        let map = NominalGaitMap::new(p);
        let (x, vx, y, vy) = map.orbit_start((0.5, 0.0));
        let mut s = state_at(x, vx + 0.2, y, vy);
        let cmd = PlantCommand::default();
        let dist = Disturbance::default();
        let n = (p.t_step / 1e-3).round() as usize;
        for _ in 0..2 {
            let g = map.update((0.5, 0.0), &s, 0.0, SwingStart::default()).unwrap();
            for _ in 0..n {
                s = integrate_step(&s, &cmd, &p, &dist, 1e-3).unwrap();
            }
            s = step_transition(&s, landing_command(&g, &DeltaY::default()), &p).unwrap();
        }
        let target = map.sagittal_orbit(0.5).end_velocity[0];
        assert!((s.vx - target).abs() < 1e-6, "{} vs {}", s.vx, target);
    }

    #[test]
    fn landing_examples() {
        let p = bare();
        let map = NominalGaitMap::new(p);
        let (x, vx, y, vy) = map.orbit_start((0.5, 0.0));
        let g = map.update((0.5, 0.0), &state_at(x, vx, y, vy), 0.0, SwingStart::default()).unwrap();
        let (dx, dy) = landing_command(&g, &DeltaY::default());
        assert!((dx - g.step_length_x).abs() < 1e-12);
        assert!((dy - g.lateral_target).abs() < 1e-12);

        let both = DeltaY { hip: 0.02, knee: 0.02, ..Default::default() };
        let knee_only = DeltaY { knee: 0.04, ..Default::default() };
        let a = landing_command(&g, &both).0;
        assert!((a - (g.landing_x + 0.04)).abs() < 1e-15);
        assert_eq!(a, landing_command(&g, &knee_only).0);
    }

    #[test]
    fn swing_curve_is_continuous_through_retarget() {
        let p = bare();
        let map = NominalGaitMap::new(p);
        let (x, vx, y, vy) = map.orbit_start((0.5, 0.0));
        let mut g = map
            .update((0.5, 0.0), &state_at(x, vx, y, vy), 0.0, SwingStart { x: -0.2, y: 0.2, ..Default::default() })
            .unwrap();
        assert_eq!(g.swing_x.eval(0.0).unwrap(), -0.2);
        assert!((g.swing_x.eval(1.0).unwrap() - g.landing_x).abs() < 1e-12);
        let before = (g.swing_x.eval(0.5).unwrap(), g.swing_x.rate(0.5).unwrap());
        g.retarget(0.5, (0.25, -0.2)).unwrap();
        let after = (g.swing_x.eval(0.5).unwrap(), g.swing_x.rate(0.5).unwrap());
        assert!((before.0 - after.0).abs() < 1e-12);
        assert!((before.1 - after.1).abs() < 1e-9);
        assert!((g.swing_x.eval(1.0).unwrap() - 0.25).abs() < 1e-12);
        assert!((g.swing_y.end() + 0.2).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_pitch_balances_gravity() {
        let p = ModelParams::default();
        let gains = TorsoGains::default();
        let phi = torso_equilibrium_pitch(&p, &gains, 0.0);
        let tau = inner_loop_torque(phi, 0.0, &gains, p.tau_f_max);
        assert!((tau - p.m * p.g * p.c_x).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn constraint_error_is_shift_invariant(
            ya in prop::collection::vec(-1.0f64..1.0, 3),
            yd in prop::collection::vec(-1.0f64..1.0, 3),
            dy in prop::collection::vec(-1.0f64..1.0, 3),
            c in -1.0f64..1.0,
        ) {
            let base = virtual_constraint_error(&ya, &yd, &dy).unwrap();
            let yd2: Vec<f64> = yd.iter().map(|v| v + c).collect();
            let dy2: Vec<f64> = dy.iter().map(|v| v - c).collect();
            let moved = virtual_constraint_error(&ya, &yd2, &dy2).unwrap();
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn landing_symmetric_in_redundant_pair(a in -0.2f64..0.2, b in -0.2f64..0.2, r in -0.2f64..0.2, s in -0.2f64..0.2) {
            let p = bare();
            let g = NominalGaitMap::new(p)
                .update((0.5, 0.0), &state_at(-0.1, 0.55, 0.1, -0.2), 0.0, SwingStart::default())
                .unwrap();
            let one = landing_command(&g, &DeltaY { hip: a, knee: b, swhr: r, sthr: s, phi: 0.0 });
            let two = landing_command(&g, &DeltaY { hip: b, knee: a, swhr: s, sthr: r, phi: 0.0 });
            prop_assert_eq!(one, two);
        }
    }
}
