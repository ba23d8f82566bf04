//! Sectioned `key = value` scenario files.
//!
//! ```text
//! [scenario]
//! name = mass-23kg
//! seed = 42
//! duration = 90
//!
//! [velocity]
//! segment = 0, 0.5, 0
//!
//! [events]
//! set_mass = 0, 23
//! push = 2.5, 30, 0.1, +x
//! mask_channel = 0, x, 0
//! ```
//!
//! Lists are repeated keys. `#` starts a comment. Missing keys keep their
//! defaults.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{Direction, Event, ScenarioConfig, Subsystem, VelocitySegment};

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn num(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| err(line, format!("{key}: expected a number, got '{}'", v.trim())))?;
    if !x.is_finite() {
        return Err(err(line, format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        other => Err(err(line, format!("{key}: expected true or false, got '{other}'"))),
    }
}

fn fields<'a>(line: usize, key: &str, v: &'a str, min: usize, max: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() < min || parts.len() > max {
        let want = if min == max { format!("{min}") } else { format!("{min} to {max}") };
        return Err(err(line, format!("{key}: expected {want} comma-separated values, got {}", parts.len())));
    }
    Ok(parts)
}

fn parse_event(line: usize, key: &str, v: &str) -> Result<Event> {
    Ok(match key {
        "set_mass" => {
            let f = fields(line, key, v, 2, 2)?;
            Event::SetMass {
                t: num(line, key, f[0])?,
                kg: num(line, key, f[1])?,
            }
        }
        "set_com_offset" => {
            let f = fields(line, key, v, 2, 2)?;
            Event::SetComOffset {
                t: num(line, key, f[0])?,
                offset: num(line, key, f[1])?,
            }
        }
        "push" => {
            let f = fields(line, key, v, 4, 4)?;
            Event::Push {
                t: num(line, key, f[0])?,
                force: num(line, key, f[1])?,
                duration: num(line, key, f[2])?,
                direction: Direction::parse(f[3])
                    .ok_or_else(|| err(line, format!("push: unknown direction '{}'", f[3])))?,
            }
        }
        "terrain" => {
            let f = fields(line, key, v, 2, 2)?;
            Event::Terrain {
                t: num(line, key, f[0])?,
                max_slope: num(line, key, f[1])?,
            }
        }
        "mask_channel" => {
            let f = fields(line, key, v, 3, 4)?;
            let on = match f.get(3) {
                None | Some(&"on") => true,
                Some(&"off") => false,
                Some(other) => return Err(err(line, format!("mask_channel: expected on or off, got '{other}'"))),
            };
            Event::MaskChannel {
                t: num(line, key, f[0])?,
                network: Subsystem::parse(f[1])
                    .ok_or_else(|| err(line, format!("mask_channel: unknown network '{}'", f[1])))?,
                channel: f[2]
                    .parse()
                    .map_err(|_| err(line, format!("mask_channel: bad channel index '{}'", f[2])))?,
                on,
            }
        }
        _ => return Err(err(line, format!("unknown event '{key}'"))),
    })
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    let mut velocity = Vec::new();
    let mut section = String::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, "unterminated section header"))?
                .trim();
            if !["scenario", "velocity", "events", "gains", "model", "network"].contains(&name) {
                return Err(err(line, format!("unknown section '{name}'")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(line, format!("expected 'key = value', got '{content}'")))?;
        let unknown = || err(line, format!("unknown key '{key}' in [{section}]"));

        match section.as_str() {
            "" => return Err(err(line, "key outside of any section")),
            "scenario" => match key {
                "name" => cfg.name = value.to_string(),
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| err(line, format!("seed: expected an unsigned integer, got '{value}'")))?
                }
                "duration" => cfg.duration = num(line, key, value)?,
                "dt" => cfg.dt = num(line, key, value)?,
                "adaptive" => cfg.adaptive = boolean(line, key, value)?,
                "must_not_fall" => cfg.must_not_fall = boolean(line, key, value)?,
                "compare" => cfg.compare = boolean(line, key, value)?,
                _ => return Err(unknown()),
            },
            "velocity" => match key {
                "segment" => {
                    let f = fields(line, key, value, 3, 3)?;
                    velocity.push(VelocitySegment {
                        t_start: num(line, key, f[0])?,
                        v_x: num(line, key, f[1])?,
                        v_y: num(line, key, f[2])?,
                    });
                }
                _ => return Err(unknown()),
            },
            "events" => cfg.events.push(parse_event(line, key, value)?),
            "gains" => {
                let v = num(line, key, value)?;
                let g = &mut cfg.gains;
                match key {
                    "kp_x" => g.kp_x = v,
                    "kd_x" => g.kd_x = v,
                    "kp_y" => g.kp_y = v,
                    "kd_y" => g.kd_y = v,
                    "kp_phi" => g.kp_phi = v,
                    "kd_phi" => g.kd_phi = v,
                    "kp_torso" => cfg.torso.kp = v,
                    "kd_torso" => cfg.torso.kd = v,
                    _ => return Err(unknown()),
                }
            }
            "model" => {
                let v = num(line, key, value)?;
                let m = &mut cfg.model;
                match key {
                    "m" => m.m = v,
                    "r_gyr" => m.r_gyr = v,
                    "h" => m.h = v,
                    "c_x" => m.c_x = v,
                    "m_legs" => m.m_legs = v,
                    "g" => m.g = v,
                    "t_step" => m.t_step = v,
                    "rho" => m.rho = v,
                    "width" => m.width = v,
                    "tau_f_max" => m.tau_f_max = v,
                    _ => return Err(unknown()),
                }
            }
            "network" => match key {
                "n_hidden" => {
                    cfg.network.n_hidden = value
                        .parse()
                        .map_err(|_| err(line, format!("n_hidden: expected a count, got '{value}'")))?
                }
                "gamma" => cfg.network.gamma = num(line, key, value)?,
                "update_per_tick" => cfg.network.update_per_tick = boolean(line, key, value)?,
                _ => return Err(unknown()),
            },
            _ => unreachable!("sections are checked when entered"),
        }
    }
    if !velocity.is_empty() {
        cfg.velocity = velocity;
    }
    // Stable sort keeps the file order of simultaneous events.
    cfg.events.sort_by(|a, b| a.time().total_cmp(&b.time()));
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Render a config that [`parse_config`] reads back unchanged.
pub fn write_config(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let b = |v: bool| if v { "true" } else { "false" };
    // `{:?}` prints the shortest representation that round-trips.
    let _ = writeln!(s, "[scenario]");
    let _ = writeln!(s, "name = {}", cfg.name);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "duration = {:?}", cfg.duration);
    let _ = writeln!(s, "dt = {:?}", cfg.dt);
    let _ = writeln!(s, "adaptive = {}", b(cfg.adaptive));
    let _ = writeln!(s, "must_not_fall = {}", b(cfg.must_not_fall));
    let _ = writeln!(s, "compare = {}", b(cfg.compare));

    let _ = writeln!(s, "\n[velocity]");
    for seg in &cfg.velocity {
        let _ = writeln!(s, "segment = {:?}, {:?}, {:?}", seg.t_start, seg.v_x, seg.v_y);
    }

    let _ = writeln!(s, "\n[events]");
    for ev in &cfg.events {
        let _ = match *ev {
            Event::SetMass { t, kg } => writeln!(s, "set_mass = {t:?}, {kg:?}"),
            Event::SetComOffset { t, offset } => writeln!(s, "set_com_offset = {t:?}, {offset:?}"),
            Event::Push { t, force, duration, direction } => {
                writeln!(s, "push = {t:?}, {force:?}, {duration:?}, {}", direction.as_str())
            }
            Event::Terrain { t, max_slope } => writeln!(s, "terrain = {t:?}, {max_slope:?}"),
            Event::MaskChannel { t, network, channel, on } => writeln!(
                s,
                "mask_channel = {t:?}, {}, {channel}, {}",
                network.as_str(),
                if on { "on" } else { "off" }
            ),
        };
    }

    let g = &cfg.gains;
    let _ = writeln!(s, "\n[gains]");
    for (k, v) in [
        ("kp_x", g.kp_x),
        ("kd_x", g.kd_x),
        ("kp_y", g.kp_y),
        ("kd_y", g.kd_y),
        ("kp_phi", g.kp_phi),
        ("kd_phi", g.kd_phi),
        ("kp_torso", cfg.torso.kp),
        ("kd_torso", cfg.torso.kd),
    ] {
        let _ = writeln!(s, "{k} = {v:?}");
    }

    let m = &cfg.model;
    let _ = writeln!(s, "\n[model]");
    for (k, v) in [
        ("m", m.m),
        ("r_gyr", m.r_gyr),
        ("h", m.h),
        ("c_x", m.c_x),
        ("m_legs", m.m_legs),
        ("g", m.g),
        ("t_step", m.t_step),
        ("rho", m.rho),
        ("width", m.width),
        ("tau_f_max", m.tau_f_max),
    ] {
        let _ = writeln!(s, "{k} = {v:?}");
    }

    let _ = writeln!(s, "\n[network]");
    let _ = writeln!(s, "n_hidden = {}", cfg.network.n_hidden);
    let _ = writeln!(s, "gamma = {:?}", cfg.network.gamma);
    let _ = writeln!(s, "update_per_tick = {}", b(cfg.network.update_per_tick));
    s
}
