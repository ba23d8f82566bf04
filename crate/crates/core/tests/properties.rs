use proptest::prelude::*;

use gaitadapt::biped_model::{
    integrate_step, orbital_energy, Disturbance, ModelParams, PlantCommand, RobotState, StanceSide,
};
use gaitadapt::config::{parse_config, write_config};
use gaitadapt::harness::{
    run_scenario, Direction, Event, NetworkConfig, ScenarioConfig, Subsystem, VelocitySegment,
};

fn small(duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: "prop".into(),
        duration,
        network: NetworkConfig {
            n_hidden: 40,
            ..NetworkConfig::default()
        },
        ..ScenarioConfig::default()
    }
}

fn event_at(kind: u8, t: f64, a: f64) -> Event {
    match kind {
        0 => Event::SetMass { t, kg: 10.33 + 10.0 * a },
        1 => Event::SetComOffset { t, offset: 0.1 * (a - 0.5) },
        2 => Event::Push {
            t,
            force: 40.0 * a,
            duration: 0.1,
            direction: Direction::PosX,
        },
        3 => Event::Terrain { t, max_slope: 0.05 * a },
        _ => Event::MaskChannel {
            t,
            network: Subsystem::X,
            channel: 0,
            on: a > 0.5,
        },
    }
}

#[test]
fn identical_configs_give_identical_traces() {
    let cfg = ScenarioConfig {
        events: vec![Event::Terrain { t: 1.0, max_slope: 0.05 }],
        ..small(6.0)
    };
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert!(a.trace.ticks.iter().any(|r| r.slope != 0.0));
    let c = run_scenario(&ScenarioConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.trace, c.trace);
}

#[test]
fn desired_velocity_change_starts_a_new_segment() {
    let cfg = ScenarioConfig {
        velocity: vec![
            VelocitySegment { t_start: 0.0, v_x: 0.5, v_y: 0.0 },
            VelocitySegment { t_start: 8.0, v_x: 0.6, v_y: 0.1 },
        ],
        ..small(20.0)
    };
    let r = run_scenario(&cfg).unwrap();
    assert!(!r.metrics.fell);
    assert_eq!(r.metrics.segments.len(), 2);
    assert_eq!(r.metrics.segments[1].v_d, (0.6, 0.1));
    let last = r.trace.steps.last().unwrap();
    assert!((last.vx_avg - 0.6).abs() < 0.05, "{}", last.vx_avg);
}

#[test]
fn per_tick_updates_run_and_learn() {
    let cfg = ScenarioConfig {
        network: NetworkConfig {
            n_hidden: 40,
            update_per_tick: true,
            ..NetworkConfig::default()
        },
        events: vec![Event::SetComOffset { t: 0.0, offset: 0.1 }],
        ..small(4.0)
    };
    let r = run_scenario(&cfg).unwrap();
    let nets = r.networks.unwrap();
    assert!(nets[0].column_norm(0) > 0.0);
    assert!((nets[0].gamma() - 1e-4 * 1e-3 / 0.4).abs() < 1e-18);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn state_before_an_event_ignores_its_parameters(
        kind in 0u8..5, tick in 200u64..1500, a in 0.0f64..1.0, b in 0.0f64..1.0,
    ) {
        let t = tick as f64 * 1e-3;
        let one = ScenarioConfig { events: vec![event_at(kind, t, a)], ..small(2.0) };
        let two = ScenarioConfig { events: vec![event_at(kind, t, b)], ..small(2.0) };
        let ra = run_scenario(&one).unwrap();
        let rb = run_scenario(&two).unwrap();
        let n = tick as usize;
        prop_assert_eq!(&ra.trace.ticks[..n], &rb.trace.ticks[..n]);
    }

    #[test]
    fn stance_energy_conserved_without_torque(x0 in -0.15f64..0.15, v0 in -0.8f64..0.8, h in 0.6f64..1.2) {
        let p = ModelParams { c_x: 0.0, h, rho: 1.0, ..ModelParams::default() };
        let mut s = RobotState {
            x: x0, y: 0.0, vx: v0, vy: 0.0, phi: 0.0, phidot: 0.0,
            px: 0.0, py: 0.0, stance_side: StanceSide::Left, k: 0, t: 0.0,
        };
        let e0 = orbital_energy(s.x - s.px, s.vx, &p);
        prop_assume!(e0.abs() > 1e-4);
        for _ in 0..400 {
            s = integrate_step(&s, &PlantCommand::default(), &p, &Disturbance::default(), 1e-3).unwrap();
            let e = orbital_energy(s.x - s.px, s.vx, &p);
            prop_assert!((e - e0).abs() <= 1e-6 * e0.abs());
        }
    }

    #[test]
    fn config_text_round_trips(
        seed in any::<u64>(), dur in 1.0f64..100.0, vx in -1.0f64..1.0, vy in -0.5f64..0.5,
        kind in 0u8..5, a in 0.0f64..1.0, kp in 0.0f64..0.5,
    ) {
        let mut cfg = ScenarioConfig {
            seed,
            duration: dur,
            velocity: vec![VelocitySegment { t_start: 0.0, v_x: vx, v_y: vy }],
            events: vec![event_at(kind, 0.5 * dur, a)],
            ..ScenarioConfig::default()
        };
        cfg.gains.kp_x = kp;
        prop_assert_eq!(parse_config(&write_config(&cfg)).unwrap(), cfg);
    }
}
