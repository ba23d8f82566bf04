//! Trace, summary and weight-snapshot writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{Metric, Metrics, RunResult, StepRecord, Subsystem, TickRecord, Trace};

pub const TRACE_HEADER: &str = "t,k,tau,x,y,vx,vy,phi,phidot,tau_f,dy_hip,dy_knee,dy_swhr,dy_sthr,dy_phi,psi_x1,psi_x2,psi_y1,psi_y2,psi_phi,slope,fx,fy";
pub const STEPS_HEADER: &str = "k,t_mid,vx_avg,vy_avg,vxd,vyd,dx_land,dy_land,fell";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

/// Scientific notation with 11 significant digits. Negative zero prints
/// as zero.
fn fmt(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.10e}")
}

fn tick_values(r: &TickRecord) -> [f64; 21] {
    let d = r.delta_y;
    let p = r.psi;
    [
        r.tau, r.x, r.y, r.vx, r.vy, r.phi, r.phidot, r.tau_f, d.hip, d.knee, d.swhr, d.sthr, d.phi, p.x[0], p.x[1],
        p.y[0], p.y[1], p.phi, r.slope, r.fx, r.fy,
    ]
}

fn step_values(s: &StepRecord) -> [f64; 7] {
    [s.t_mid, s.vx_avg, s.vy_avg, s.vxd, s.vyd, s.dx_land, s.dy_land]
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_trace_csv<W: Write>(trace: &Trace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &trace.ticks {
        let mut line = format!("{},{}", fmt(r.t), r.k);
        for v in tick_values(r) {
            line.push(',');
            line.push_str(&fmt(v));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn write_steps_csv<W: Write>(trace: &Trace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{STEPS_HEADER}")?;
    for s in &trace.steps {
        let mut line = s.k.to_string();
        for v in step_values(s) {
            line.push(',');
            line.push_str(&fmt(v));
        }
        line.push(',');
        line.push_str(if s.fell { "1" } else { "0" });
        writeln!(w, "{line}")?;
    }
    w.flush()
}

fn jsonl_line<W: Write>(w: &mut W, keys: &str, ints: &[(usize, u64)], values: &[f64]) -> std::io::Result<()> {
    let mut obj = serde_json::Map::new();
    let mut floats = values.iter();
    for (i, key) in keys.split(',').enumerate() {
        let v = match ints.iter().find(|(j, _)| *j == i) {
            Some((_, n)) => serde_json::Value::from(*n),
            None => serde_json::Value::from(*floats.next().expect("one value per column")),
        };
        obj.insert(key.to_string(), v);
    }
    serde_json::to_writer(&mut *w, &obj)?;
    writeln!(w)
}

pub fn write_trace_jsonl<W: Write>(trace: &Trace, mut w: W) -> std::io::Result<()> {
    for r in &trace.ticks {
        let mut values = vec![r.t];
        values.extend(tick_values(r));
        jsonl_line(&mut w, TRACE_HEADER, &[(1, r.k)], &values)?;
    }
    w.flush()
}

pub fn write_steps_jsonl<W: Write>(trace: &Trace, mut w: W) -> std::io::Result<()> {
    for s in &trace.steps {
        jsonl_line(&mut w, STEPS_HEADER, &[(0, s.k), (8, s.fell as u64)], &step_values(s))?;
    }
    w.flush()
}

/// Write `<stem>.<ext>` and `<stem>.steps.<ext>` into `dir`.
pub fn emit_trace(trace: &Trace, dir: &Path, stem: &str, format: Format) -> Result<Vec<PathBuf>> {
    let ext = format.extension();
    let main = dir.join(format!("{stem}.{ext}"));
    let steps = dir.join(format!("{stem}.steps.{ext}"));
    let io = |p: &Path, r: std::io::Result<()>| r.map_err(|e| Error::io(p, e));
    match format {
        Format::Csv => {
            io(&main, write_trace_csv(trace, create(&main)?))?;
            io(&steps, write_steps_csv(trace, create(&steps)?))?;
        }
        Format::Jsonl => {
            io(&main, write_trace_jsonl(trace, create(&main)?))?;
            io(&steps, write_steps_jsonl(trace, create(&steps)?))?;
        }
    }
    Ok(vec![main, steps])
}

/// One weight file per network: `<stem>.weights.<x|y|phi>.txt`.
pub fn emit_weights(result: &RunResult, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let Some(nets) = &result.networks else {
        return Ok(Vec::new());
    };
    let mut paths = Vec::new();
    for (sub, net) in Subsystem::ALL.iter().zip(nets) {
        let path = dir.join(format!("{stem}.weights.{}.txt", sub.as_str()));
        let mut w = create(&path)?;
        net.write_snapshot(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub seed: u64,
    pub adaptive: bool,
    pub fell: bool,
    pub steady_state_err_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_state_err_x_reason: Option<String>,
    pub steady_state_err_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_state_err_y_reason: Option<String>,
    pub convergence_time_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_time_x_reason: Option<String>,
    pub convergence_time_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_time_y_reason: Option<String>,
    pub max_abs_phi: f64,
}

fn split(m: &Metric) -> (Option<f64>, Option<String>) {
    (m.value(), m.reason().map(str::to_string))
}

impl ScenarioSummary {
    pub fn new(name: &str, seed: u64, adaptive: bool, m: &Metrics) -> Self {
        let (ssx, ssx_r) = split(&m.steady_state_err_x);
        let (ssy, ssy_r) = split(&m.steady_state_err_y);
        let (cx, cx_r) = split(&m.convergence_time_x);
        let (cy, cy_r) = split(&m.convergence_time_y);
        Self {
            name: name.to_string(),
            seed,
            adaptive,
            fell: m.fell,
            steady_state_err_x: ssx,
            steady_state_err_x_reason: ssx_r,
            steady_state_err_y: ssy,
            steady_state_err_y_reason: ssy_r,
            convergence_time_x: cx,
            convergence_time_x_reason: cx_r,
            convergence_time_y: cy,
            convergence_time_y_reason: cy_r,
            max_abs_phi: m.max_abs_phi,
        }
    }

    pub fn from_result(r: &RunResult) -> Self {
        Self::new(&r.config.name, r.config.seed, r.config.adaptive, &r.metrics)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareSummary {
    pub name: String,
    pub adaptive_on: ScenarioSummary,
    pub adaptive_off: ScenarioSummary,
    /// Adaptive-off over adaptive-on steady-state longitudinal error.
    pub steady_state_ratio_x: Option<f64>,
}

impl CompareSummary {
    pub fn new(on: &RunResult, off: &RunResult) -> Self {
        let ratio = match (on.metrics.steady_state_err_x.value(), off.metrics.steady_state_err_x.value()) {
            (Some(a), Some(b)) if a > 0.0 => Some(b / a),
            _ => None,
        };
        Self {
            name: on.config.name.clone(),
            adaptive_on: ScenarioSummary::from_result(on),
            adaptive_off: ScenarioSummary::from_result(off),
            steady_state_ratio_x: ratio,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub scenarios: Vec<ScenarioSummary>,
    pub compare: Vec<CompareSummary>,
}

pub fn emit_summary(summary: &Summary, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, summary)
        .map_err(std::io::Error::from)
        .and_then(|_| writeln!(w))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Plain-text comparison table for the terminal.
pub fn compare_table(summary: &Summary) -> String {
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let mut out = format!(
        "{:<24} {:>8} {:>10} {:>10} {:>10} {:>8}\n",
        "scenario", "arm", "ss_err_x", "ss_err_y", "t_conv_x", "ratio"
    );
    for c in &summary.compare {
        for (arm, s) in [("on", &c.adaptive_on), ("off", &c.adaptive_off)] {
            out.push_str(&format!(
                "{:<24} {:>8} {:>10} {:>10} {:>10} {:>8}\n",
                c.name,
                arm,
                cell(s.steady_state_err_x),
                cell(s.steady_state_err_y),
                cell(s.convergence_time_x),
                if arm == "on" { cell(c.steady_state_ratio_x) } else { String::new() },
            ));
        }
    }
    out
}
