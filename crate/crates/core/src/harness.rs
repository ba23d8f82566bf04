//! Closed-loop scenario runner, event injection, metrics and the scenario
//! catalog.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive_net::{AdaptiveNetwork, NetworkInput, DEFAULT_GAMMA, DEFAULT_HIDDEN, DEFAULT_INPUT_SCALES};
use crate::biped_model::{
    integrate_step, is_fallen, step_transition, Disturbance, ModelParams, PlantCommand, RobotState, StanceSide,
};
use crate::error::{Error, Result};
use crate::nominal_controller::{
    inner_loop_torque, landing_command, lateral_landing, torso_equilibrium_pitch, DeltaY, NominalGait,
    NominalGaitMap, OutputSet, SwingStart, TorsoGains, MAX_DESIRED_SPEED,
};
use crate::regulators::{assemble_delta_y, heuristic_delta_y, Psi, References, RegulatorGains, RegulatorState};

/// Band for the convergence metric (m/s).
pub const CONVERGENCE_BAND: f64 = 0.02;
/// Steps averaged by the steady-state metric.
pub const STEADY_STATE_STEPS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "+x" => Some(Direction::PosX),
            "-x" => Some(Direction::NegX),
            "+y" => Some(Direction::PosY),
            "-y" => Some(Direction::NegY),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::PosX => "+x",
            Direction::NegX => "-x",
            Direction::PosY => "+y",
            Direction::NegY => "-y",
        }
    }

    fn force(self, n: f64) -> (f64, f64) {
        match self {
            Direction::PosX => (n, 0.0),
            Direction::NegX => (-n, 0.0),
            Direction::PosY => (0.0, n),
            Direction::NegY => (0.0, -n),
        }
    }
}

/// The three decoupled adaptive subsystems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    X,
    Y,
    Phi,
}

impl Subsystem {
    pub const ALL: [Subsystem; 3] = [Subsystem::X, Subsystem::Y, Subsystem::Phi];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "x" => Some(Subsystem::X),
            "y" => Some(Subsystem::Y),
            "phi" => Some(Subsystem::Phi),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subsystem::X => "x",
            Subsystem::Y => "y",
            Subsystem::Phi => "phi",
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            Subsystem::X | Subsystem::Y => 2,
            Subsystem::Phi => 1,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Event {
    /// Absolute torso mass (kg).
    SetMass { t: f64, kg: f64 },
    /// Torso COM shift added to the nominal offset (m).
    SetComOffset { t: f64, offset: f64 },
    Push { t: f64, force: f64, duration: f64, direction: Direction },
    /// Per-step random slope in `[-max_slope, max_slope]` from the next step on.
    Terrain { t: f64, max_slope: f64 },
    MaskChannel { t: f64, network: Subsystem, channel: usize, on: bool },
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::SetMass { t, .. }
            | Event::SetComOffset { t, .. }
            | Event::Push { t, .. }
            | Event::Terrain { t, .. }
            | Event::MaskChannel { t, .. } => t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocitySegment {
    pub t_start: f64,
    pub v_x: f64,
    pub v_y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_hidden: usize,
    pub gamma: f64,
    /// Update every control tick with the learning rate scaled by
    /// `dt / t_step`, instead of once per step.
    pub update_per_tick: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_hidden: DEFAULT_HIDDEN,
            gamma: DEFAULT_GAMMA,
            update_per_tick: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
    pub velocity: Vec<VelocitySegment>,
    pub events: Vec<Event>,
    pub adaptive: bool,
    /// Exit with failure if this scenario falls.
    pub must_not_fall: bool,
    /// Also run the adaptive-off arm and report both.
    pub compare: bool,
    pub gains: RegulatorGains,
    pub torso: TorsoGains,
    /// Plant parameters at `t = 0`, also the controller's nominal model.
    pub model: ModelParams,
    pub network: NetworkConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "nominal".into(),
            seed: 0,
            duration: 60.0,
            dt: 1e-3,
            velocity: vec![VelocitySegment {
                t_start: 0.0,
                v_x: 0.5,
                v_y: 0.0,
            }],
            events: Vec::new(),
            adaptive: true,
            must_not_fall: true,
            compare: false,
            gains: RegulatorGains::default(),
            torso: TorsoGains::default(),
            model: ModelParams::default(),
            network: NetworkConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Scenario(format!("{}: {msg}", self.name)));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be non-empty and contain no path separators".into());
        }
        self.model.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        let ratio = self.model.t_step / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 2.0 {
            return bad(format!("t_step {} must be a multiple of dt {} (at least 2 ticks)", self.model.t_step, self.dt));
        }
        if !self.gains.is_valid() {
            return bad("regulator gains must be finite and non-negative".into());
        }
        if !(self.torso.kp > 0.0 && self.torso.kd >= 0.0 && self.torso.kp.is_finite() && self.torso.kd.is_finite()) {
            return bad("torso gains must be finite with kp > 0".into());
        }
        if self.network.n_hidden == 0 || !(self.network.gamma >= 0.0 && self.network.gamma.is_finite()) {
            return bad("network needs n_hidden >= 1 and a finite non-negative gamma".into());
        }
        match self.velocity.first() {
            Some(seg) if seg.t_start == 0.0 => {}
            _ => return bad("velocity profile must start with a segment at t = 0".into()),
        }
        for w in self.velocity.windows(2) {
            if !(w[1].t_start > w[0].t_start) {
                return bad("velocity segments must have increasing start times".into());
            }
        }
        for seg in &self.velocity {
            if !(seg.v_x.is_finite() && seg.v_y.is_finite())
                || seg.v_x.abs() > MAX_DESIRED_SPEED
                || seg.v_y.abs() > MAX_DESIRED_SPEED
            {
                return Err(Error::VelocityOutOfRange(seg.v_x, seg.v_y));
            }
        }
        for w in self.events.windows(2) {
            if w[1].time() < w[0].time() {
                return bad("events must be sorted by time".into());
            }
        }
        for ev in &self.events {
            let t = ev.time();
            if !(t >= 0.0 && t <= self.duration) {
                return bad(format!("event time {t} outside [0, duration]"));
            }
            match *ev {
                Event::SetMass { kg, .. } if !(kg > 0.0 && kg.is_finite()) => {
                    return bad(format!("mass must be positive, got {kg}"));
                }
                Event::SetComOffset { offset, .. } if !offset.is_finite() => {
                    return bad("com offset must be finite".into());
                }
                Event::Push { force, duration, .. } if !(force.is_finite() && duration > 0.0 && duration.is_finite()) => {
                    return bad("push needs a finite force and a positive duration".into());
                }
                Event::Terrain { max_slope, .. } if !(max_slope >= 0.0 && max_slope < std::f64::consts::FRAC_PI_2) => {
                    return bad(format!("max slope {max_slope} must lie in [0, pi/2)"));
                }
                Event::MaskChannel { network, channel, .. } if channel >= network.outputs() => {
                    return Err(Error::BadChannel {
                        index: channel,
                        dim: network.outputs(),
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn desired_velocity(&self, t: f64) -> (f64, f64) {
        let seg = self
            .velocity
            .iter()
            .rev()
            .find(|s| s.t_start <= t)
            .unwrap_or(&self.velocity[0]);
        (seg.v_x, seg.v_y)
    }

    pub fn ticks(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn step_ticks(&self) -> u64 {
        (self.model.t_step / self.dt).round() as u64
    }

    fn tick_of(&self, t: f64) -> u64 {
        (t / self.dt).round() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TickRecord {
    pub t: f64,
    pub k: u64,
    pub tau: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub phi: f64,
    pub phidot: f64,
    pub tau_f: f64,
    pub delta_y: DeltaY,
    pub psi: Psi,
    pub slope: f64,
    pub fx: f64,
    pub fy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub k: u64,
    pub t_mid: f64,
    pub vx_avg: f64,
    pub vy_avg: f64,
    pub vxd: f64,
    pub vyd: f64,
    pub dx_land: f64,
    pub dy_land: f64,
    pub fell: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub ticks: Vec<TickRecord>,
    pub steps: Vec<StepRecord>,
    pub fell: bool,
}

/// A metric that may be undefined, with the reason.
#[derive(Clone, Debug, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined(String),
}

impl Metric {
    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Undefined(_) => None,
        }
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            Metric::Value(_) => None,
            Metric::Undefined(r) => Some(r),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentMetrics {
    pub v_d: (f64, f64),
    pub first_step: u64,
    pub steps: usize,
    pub steady_state_err_x: Metric,
    pub steady_state_err_y: Metric,
    pub convergence_time_x: Metric,
    pub convergence_time_y: Metric,
    /// Step index from which both axes stay in the band.
    pub convergence_step: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub fell: bool,
    pub steady_state_err_x: Metric,
    pub steady_state_err_y: Metric,
    pub convergence_time_x: Metric,
    pub convergence_time_y: Metric,
    pub max_abs_phi: f64,
    pub segments: Vec<SegmentMetrics>,
}

impl Metrics {
    pub fn final_segment(&self) -> Option<&SegmentMetrics> {
        self.segments.last()
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub trace: Trace,
    pub metrics: Metrics,
    /// Learned networks at the end of the run, in `Subsystem::ALL` order.
    pub networks: Option<Vec<AdaptiveNetwork>>,
}

/// Average velocity between consecutive mid-step samples. Falls back to the
/// instantaneous velocity when there is no earlier sample.
pub fn mid_step_velocity(previous: Option<f64>, current: f64, t_step: f64, instantaneous: f64) -> f64 {
    match previous {
        Some(p) => (current - p) / t_step,
        None => instantaneous,
    }
}

/// Average over a full stride (two steps), which removes the alternating
/// sway of the lateral motion.
pub fn stride_velocity(samples: &[f64], t_step: f64, instantaneous: f64) -> f64 {
    match samples {
        [.., a, _, b] => (b - a) / (2.0 * t_step),
        _ => instantaneous,
    }
}

/// Stable per-scenario seed from a master seed and the scenario name.
pub fn scenario_seed(master: u64, name: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(master ^ h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Networks {
    nets: Vec<AdaptiveNetwork>,
    per_tick: bool,
}

impl Networks {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let gamma = if cfg.network.update_per_tick {
            cfg.network.gamma * cfg.dt / cfg.model.t_step
        } else {
            cfg.network.gamma
        };
        let nets = Subsystem::ALL
            .iter()
            .enumerate()
            .map(|(i, s)| {
                AdaptiveNetwork::init(
                    splitmix(cfg.seed.wrapping_add(i as u64 + 1)),
                    cfg.network.n_hidden,
                    s.outputs(),
                    gamma,
                    DEFAULT_INPUT_SCALES,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            nets,
            per_tick: cfg.network.update_per_tick,
        })
    }

    fn hidden(&self, x: &NetworkInput) -> Vec<Vec<f64>> {
        self.nets.iter().map(|n| n.hidden(x)).collect()
    }

    fn psi(&self, hs: &[Vec<f64>]) -> Result<Psi> {
        let x = self.nets[0].output(&hs[0])?;
        let y = self.nets[1].output(&hs[1])?;
        let phi = self.nets[2].output(&hs[2])?;
        Ok(Psi {
            x: [x[0], x[1]],
            y: [y[0], y[1]],
            phi: phi[0],
        })
    }

    /// Errors are desired minus measured, broadcast across each pair.
    fn update(&mut self, hs: &[Vec<f64>], input: &NetworkInput) -> Result<()> {
        let ex = input.v_x_d - input.v_x;
        let ey = input.v_y_d - input.v_y;
        let ephi = input.phi_d - input.phi;
        self.nets[0].update(&[ex, ex], &hs[0])?;
        self.nets[1].update(&[ey, ey], &hs[1])?;
        self.nets[2].update(&[ephi], &hs[2])
    }
}

/// Closed-loop state of one scenario run.
struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    plant: ModelParams,
    map: NominalGaitMap,
    state: RobotState,
    regulator: RegulatorState,
    networks: Option<Networks>,
    gait: NominalGait,
    delta_y: DeltaY,
    psi: Psi,
    landing: (f64, f64),
    mid_x: Option<f64>,
    mid_y: Vec<f64>,
    slope: f64,
    max_slope: Option<f64>,
    rng: ChaCha8Rng,
    trace: Trace,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        let nominal = cfg.model;
        let map = NominalGaitMap::new(nominal);
        let v_d = cfg.desired_velocity(0.0);
        let (x, vx, y, vy) = map.orbit_start(v_d);
        let state = RobotState {
            x,
            y,
            vx,
            vy,
            phi: torso_equilibrium_pitch(&nominal, &cfg.torso, map.phi_d),
            phidot: 0.0,
            px: 0.0,
            py: 0.0,
            stance_side: StanceSide::Right,
            k: 0,
            t: 0.0,
        };
        let previous = (v_d.0 * nominal.t_step, lateral_landing(1, nominal.width, v_d.1, nominal.t_step));
        let gait = map.update(
            v_d,
            &state,
            0.0,
            SwingStart {
                x: -previous.0,
                y: -previous.1,
                ..SwingStart::default()
            },
        )?;
        let networks = if cfg.adaptive { Some(Networks::new(cfg)?) } else { None };
        Ok(Self {
            cfg,
            plant: nominal,
            map,
            state,
            regulator: RegulatorState::new(cfg.gains),
            networks,
            landing: (gait.landing_x, gait.landing_y),
            gait,
            delta_y: DeltaY::default(),
            psi: Psi::ZERO,
            mid_x: None,
            mid_y: Vec::new(),
            slope: 0.0,
            max_slope: None,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            trace: Trace::default(),
        })
    }

    fn apply(&mut self, ev: &Event) -> Result<()> {
        match *ev {
            Event::SetMass { kg, .. } => self.plant.m = kg,
            Event::SetComOffset { offset, .. } => self.plant.c_x = self.cfg.model.c_x + offset,
            Event::Push { .. } => {}
            Event::Terrain { max_slope, .. } => self.max_slope = Some(max_slope),
            Event::MaskChannel { network, channel, on, .. } => {
                if let Some(n) = self.networks.as_mut() {
                    n.nets[network.index()].mask_channel(channel, on)?;
                }
            }
        }
        Ok(())
    }

    fn push_force(&self, tick: u64) -> (f64, f64) {
        let mut f = (0.0, 0.0);
        for ev in &self.cfg.events {
            if let Event::Push { t, force, duration, direction } = *ev {
                let start = self.cfg.tick_of(t);
                let len = (duration / self.cfg.dt).round() as u64;
                if tick >= start && tick < start + len {
                    let (fx, fy) = direction.force(force);
                    f.0 += fx;
                    f.1 += fy;
                }
            }
        }
        f
    }

    fn network_input(&self, vx: f64, vy: f64, v_d: (f64, f64)) -> NetworkInput {
        NetworkInput {
            v_x: vx,
            v_x_d: v_d.0,
            v_y: vy,
            v_y_d: v_d.1,
            phi: self.state.phi,
            phi_d: self.gait.phi_d,
            phidot: self.state.phidot,
            phidot_d: self.gait.phidot_d,
        }
    }

    fn mid_step(&mut self, tau: f64) -> Result<()> {
        let s = self.state;
        let t_step = self.cfg.model.t_step;
        let v_d = self.cfg.desired_velocity(s.t);

        let vx = mid_step_velocity(self.mid_x, s.x, t_step, s.vx);
        self.mid_x = Some(s.x);
        self.mid_y.push(s.y);
        let vy = stride_velocity(&self.mid_y, t_step, s.vy);

        let meas = self.regulator.observe(vx, vy, s.phi, s.phidot);
        let refs = References {
            v_d_x: v_d.0,
            v_d_y: v_d.1,
            phi_d: self.gait.phi_d,
            phidot_d: self.gait.phidot_d,
        };
        let input = self.network_input(vx, vy, v_d);
        let (delta_y, psi) = match self.networks.as_mut() {
            None => (heuristic_delta_y(&meas, &refs, &self.cfg.gains), Psi::ZERO),
            Some(nets) => {
                let hs = nets.hidden(&input);
                let psi = nets.psi(&hs)?;
                if !nets.per_tick {
                    nets.update(&hs, &input)?;
                }
                (assemble_delta_y(&meas, &refs, &self.cfg.gains, &psi), psi)
            }
        };

        let swing = SwingStart {
            x: self.gait.swing_x.eval(tau)?,
            rate_x: self.gait.swing_x.rate(tau)?,
            y: self.gait.swing_y.eval(tau)?,
            rate_y: self.gait.swing_y.rate(tau)?,
        };
        self.gait = self.map.update(v_d, &s, tau, swing)?;
        let landing = landing_command(&self.gait, &delta_y);
        self.gait.retarget(tau, landing)?;
        self.landing = landing;
        self.delta_y = delta_y;
        self.psi = psi;
        self.regulator.latched = delta_y;

        self.trace.steps.push(StepRecord {
            k: s.k,
            t_mid: s.t,
            vx_avg: vx,
            vy_avg: vy,
            vxd: v_d.0,
            vyd: v_d.1,
            dx_land: landing.0,
            dy_land: landing.1,
            fell: false,
        });
        Ok(())
    }

    fn touchdown(&mut self) -> Result<()> {
        self.state = step_transition(&self.state, self.landing, &self.plant)?;
        if let Some(max) = self.max_slope {
            self.slope = if max > 0.0 { self.rng.random_range(-max..=max) } else { 0.0 };
        }
        let v_d = self.cfg.desired_velocity(self.state.t);
        let previous = self.landing;
        self.gait = self.map.update(
            v_d,
            &self.state,
            0.0,
            SwingStart {
                x: -previous.0,
                y: -previous.1,
                ..SwingStart::default()
            },
        )?;
        self.landing = (self.gait.landing_x, self.gait.landing_y);
        Ok(())
    }

    fn mark_fall(&mut self) {
        self.trace.fell = true;
        let s = self.state;
        match self.trace.steps.last_mut() {
            Some(last) if last.k == s.k => last.fell = true,
            _ => {
                let v_d = self.cfg.desired_velocity(s.t);
                self.trace.steps.push(StepRecord {
                    k: s.k,
                    t_mid: s.t,
                    vx_avg: s.vx,
                    vy_avg: s.vy,
                    vxd: v_d.0,
                    vyd: v_d.1,
                    dx_land: self.landing.0,
                    dy_land: self.landing.1,
                    fell: true,
                })
            }
        }
    }

    fn run(mut self) -> Result<RunResult> {
        let cfg = self.cfg;
        let n_ticks = cfg.ticks();
        let n_step = cfg.step_ticks();
        let mid = n_step / 2;
        let mut next_event = 0;
        let mut tick_in_step = 0u64;
        self.trace.ticks.reserve(n_ticks as usize);

        for tick in 0..n_ticks {
            while next_event < cfg.events.len() && cfg.tick_of(cfg.events[next_event].time()) <= tick {
                let ev = cfg.events[next_event];
                self.apply(&ev)?;
                next_event += 1;
            }

            let tau = tick_in_step as f64 / n_step as f64;
            let outputs = OutputSet {
                y_a: [
                    self.gait.swing_x.eval(tau)?,
                    self.gait.swing_y.eval(tau)?,
                    -self.state.phi,
                ],
                y_d: [
                    self.gait.swing_x.eval(tau)?,
                    self.gait.swing_y.eval(tau)?,
                    -self.gait.phi_d,
                ],
                shift: [0.0, 0.0, self.delta_y.phi],
            };
            let pitch_err = -outputs.y2()[2];
            let tau_f = inner_loop_torque(
                pitch_err,
                self.state.phidot - self.gait.phidot_d,
                &cfg.torso,
                self.plant.tau_f_max,
            );
            let u = PlantCommand::saturated(tau_f, &self.plant);
            let (fx, fy) = self.push_force(tick);
            let dist = Disturbance {
                f_ext_x: fx,
                f_ext_y: fy,
                slope_theta: self.slope,
            };
            let t_next = (tick + 1) as f64 * cfg.dt;
            self.state = integrate_step(&self.state, &u, &self.plant, &dist, cfg.dt)
                .map_err(|_| Error::Divergence { tick, t: t_next })?;
            self.state.t = t_next;
            tick_in_step += 1;

            if let Some(nets) = self.networks.as_mut().filter(|n| n.per_tick) {
                let v_d = cfg.desired_velocity(t_next);
                let input = NetworkInput {
                    v_x: self.state.vx,
                    v_x_d: v_d.0,
                    v_y: self.state.vy,
                    v_y_d: v_d.1,
                    phi: self.state.phi,
                    phi_d: self.gait.phi_d,
                    phidot: self.state.phidot,
                    phidot_d: self.gait.phidot_d,
                };
                let hs = nets.hidden(&input);
                nets.update(&hs, &input)?;
            }

            let fallen = is_fallen(&self.state, &self.plant);
            if !fallen && tick_in_step == mid {
                self.mid_step(mid as f64 / n_step as f64)?;
            }
            self.trace.ticks.push(TickRecord {
                t: t_next,
                k: self.state.k,
                tau: tick_in_step as f64 / n_step as f64,
                x: self.state.x,
                y: self.state.y,
                vx: self.state.vx,
                vy: self.state.vy,
                phi: self.state.phi,
                phidot: self.state.phidot,
                tau_f: u.tau_f,
                delta_y: self.delta_y,
                psi: self.psi,
                slope: self.slope,
                fx,
                fy,
            });
            if fallen {
                self.mark_fall();
                break;
            }
            if tick_in_step == n_step {
                self.touchdown()?;
                tick_in_step = 0;
            }
        }

        let metrics = compute_metrics(&self.trace, cfg);
        Ok(RunResult {
            config: cfg.clone(),
            trace: self.trace,
            metrics,
            networks: self.networks.map(|n| n.nets),
        })
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    cfg.validate()?;
    Sim::new(cfg)?.run()
}

fn axis_metrics(errs: &[f64], times: &[f64], fell: bool) -> (Metric, Metric, Option<usize>) {
    let steady = if errs.len() < STEADY_STATE_STEPS {
        Metric::Undefined(format!(
            "segment has {} steps, fewer than {STEADY_STATE_STEPS}",
            errs.len()
        ))
    } else {
        let tail = &errs[errs.len() - STEADY_STATE_STEPS..];
        Metric::Value(tail.iter().sum::<f64>() / STEADY_STATE_STEPS as f64)
    };
    let first = first_converged(errs);
    let conv = match first {
        _ if fell => Metric::Undefined("fell".into()),
        Some(i) => Metric::Value(times[i]),
        None => Metric::Undefined("not converged".into()),
    };
    (steady, conv, first)
}

/// First index from which every error stays within the band.
fn first_converged(errs: &[f64]) -> Option<usize> {
    let mut first = None;
    for (i, e) in errs.iter().enumerate().rev() {
        if *e <= CONVERGENCE_BAND {
            first = Some(i);
        } else {
            break;
        }
    }
    first
}

pub fn compute_metrics(trace: &Trace, _cfg: &ScenarioConfig) -> Metrics {
    let max_abs_phi = trace.ticks.iter().map(|r| r.phi.abs()).fold(0.0, f64::max);
    let steps: Vec<&StepRecord> = trace.steps.iter().collect();

    let mut segments = Vec::new();
    let mut start = 0;
    while start < steps.len() {
        let v_d = (steps[start].vxd, steps[start].vyd);
        let mut end = start;
        while end < steps.len() && (steps[end].vxd, steps[end].vyd) == v_d {
            end += 1;
        }
        let seg = &steps[start..end];
        let is_last = end == steps.len();
        let fell = trace.fell && is_last;
        let times: Vec<f64> = seg.iter().map(|s| s.t_mid).collect();
        let ex: Vec<f64> = seg.iter().map(|s| (s.vx_avg - s.vxd).abs()).collect();
        let ey: Vec<f64> = seg.iter().map(|s| (s.vy_avg - s.vyd).abs()).collect();
        let (ssx, cx, fx) = axis_metrics(&ex, &times, fell);
        let (ssy, cy, fy) = axis_metrics(&ey, &times, fell);
        let both = match (fx, fy) {
            (Some(a), Some(b)) if !fell => Some(seg[a.max(b)].k),
            _ => None,
        };
        segments.push(SegmentMetrics {
            v_d,
            first_step: seg[0].k,
            steps: seg.len(),
            steady_state_err_x: ssx,
            steady_state_err_y: ssy,
            convergence_time_x: cx,
            convergence_time_y: cy,
            convergence_step: both,
        });
        start = end;
    }

    let (ssx, ssy, cx, cy) = match segments.last() {
        Some(s) => (
            s.steady_state_err_x.clone(),
            s.steady_state_err_y.clone(),
            s.convergence_time_x.clone(),
            s.convergence_time_y.clone(),
        ),
        None => {
            let none = Metric::Undefined("no steps recorded".into());
            (none.clone(), none.clone(), none.clone(), none)
        }
    };
    Metrics {
        fell: trace.fell,
        steady_state_err_x: ssx,
        steady_state_err_y: ssy,
        convergence_time_x: cx,
        convergence_time_y: cy,
        max_abs_phi,
        segments,
    }
}

/// Torso mass plus 5 kg and torso COM 0.1 m further forward.
fn compare_uncertainty() -> Vec<Event> {
    vec![
        Event::SetMass {
            t: 0.0,
            kg: crate::biped_model::NOMINAL_TORSO_MASS + 5.0,
        },
        Event::SetComOffset { t: 0.0, offset: 0.1 },
    ]
}

fn entry(name: &str, master_seed: u64, duration: f64, v_d: (f64, f64), events: Vec<Event>) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        seed: scenario_seed(master_seed, name),
        duration,
        velocity: vec![VelocitySegment {
            t_start: 0.0,
            v_x: v_d.0,
            v_y: v_d.1,
        }],
        events,
        ..ScenarioConfig::default()
    }
}

/// The fixed catalog of named scenarios.
pub fn scenario_catalog(master_seed: u64) -> Vec<ScenarioConfig> {
    let walk = (0.5, 0.0);
    let mass = |kg| vec![Event::SetMass { t: 0.0, kg }];
    let com = |offset| vec![Event::SetComOffset { t: 0.0, offset }];
    let push = |force, direction| {
        vec![Event::Push {
            t: 2.5,
            force,
            duration: 0.1,
            direction,
        }]
    };
    let mut masked = compare_uncertainty();
    masked.push(Event::MaskChannel {
        t: 0.0,
        network: Subsystem::X,
        channel: 0,
        on: true,
    });

    let mut catalog = vec![
        entry("mass-15kg", master_seed, 90.0, walk, mass(15.0)),
        entry("mass-20kg", master_seed, 90.0, walk, mass(20.0)),
        entry("mass-23kg", master_seed, 90.0, walk, mass(23.0)),
        entry("com+0.05", master_seed, 90.0, walk, com(0.05)),
        entry("com+0.10", master_seed, 90.0, walk, com(0.10)),
        entry("com-0.10", master_seed, 90.0, walk, com(-0.10)),
        ScenarioConfig {
            compare: true,
            ..entry("compare-baseline", master_seed, 60.0, walk, compare_uncertainty())
        },
        entry("diag-(0.4,-0.2)", master_seed, 60.0, (0.4, -0.2), compare_uncertainty()),
        entry("diag-(0.6,0.1)", master_seed, 60.0, (0.6, 0.1), compare_uncertainty()),
        entry("push-fwd-30N-0.1s", master_seed, 20.0, walk, push(30.0, Direction::PosX)),
        entry("push-bwd-25N-0.1s", master_seed, 20.0, walk, push(25.0, Direction::NegX)),
        ScenarioConfig {
            must_not_fall: false,
            ..entry(
                "terrain-20deg",
                master_seed,
                30.0,
                walk,
                vec![Event::Terrain {
                    t: 0.0,
                    max_slope: 20f64.to_radians(),
                }],
            )
        },
        entry("redundancy-mask-hip", master_seed, 90.0, walk, masked),
    ];
    for c in &mut catalog {
        c.events.sort_by(|a, b| a.time().total_cmp(&b.time()));
    }
    catalog
}

pub fn catalog_entry(name: &str, master_seed: u64) -> Option<ScenarioConfig> {
    scenario_catalog(master_seed).into_iter().find(|c| c.name == name)
}
