//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::{load_config, write_config};
use crate::error::{Error, Result};
use crate::harness::{run_scenario, scenario_catalog, RunResult, ScenarioConfig};
use crate::report::{compare_table, emit_summary, emit_trace, emit_weights, CompareSummary, Format, ScenarioSummary, Summary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FELL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const THREADS_ENV: &str = "GAITADAPT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gaitadapt", version, about = "Adaptive velocity regulation for a reduced-order 3D biped")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Jsonl => Format::Jsonl,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the adaptive flag.
        #[arg(long, value_enum)]
        adaptive: Option<Switch>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
    /// Run the full scenario catalog.
    Catalog {
        #[arg(long)]
        out: PathBuf,
        /// Master seed; each scenario derives its own from this and its name.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
    /// Run a config with adaptation on and off and compare.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } | Error::NonFinite(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn emit_run(r: &RunResult, dir: &Path, stem: &str, format: Format) -> Result<()> {
    emit_trace(&r.trace, dir, stem, format)?;
    emit_weights(r, dir, stem)?;
    Ok(())
}

fn arm(cfg: &ScenarioConfig, adaptive: bool) -> ScenarioConfig {
    ScenarioConfig {
        adaptive,
        ..cfg.clone()
    }
}

fn fell_badly(results: &[&RunResult]) -> bool {
    let mut bad = false;
    for r in results {
        if r.metrics.fell && r.config.must_not_fall {
            eprintln!("scenario '{}' fell", r.config.name);
            bad = true;
        }
    }
    bad
}

fn cmd_run(config: &Path, out: &Path, seed: Option<u64>, adaptive: Option<Switch>, format: Format) -> Result<i32> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(a) = adaptive {
        cfg.adaptive = a == Switch::On;
    }
    prepare_dir(out)?;
    let r = run_scenario(&cfg)?;
    emit_run(&r, out, &cfg.name, format)?;
    let summary = Summary {
        scenarios: vec![ScenarioSummary::from_result(&r)],
        compare: Vec::new(),
    };
    emit_summary(&summary, &out.join("summary.json"))?;
    Ok(if fell_badly(&[&r]) { EXIT_FELL } else { EXIT_OK })
}

fn cmd_compare(config: &Path, out: &Path, seed: Option<u64>, format: Format) -> Result<i32> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    prepare_dir(out)?;
    let (on, off) = rayon::join(|| run_scenario(&arm(&cfg, true)), || run_scenario(&arm(&cfg, false)));
    let (on, off) = (on?, off?);
    emit_run(&on, out, &format!("{}.adaptive-on", cfg.name), format)?;
    emit_run(&off, out, &format!("{}.adaptive-off", cfg.name), format)?;
    let summary = Summary {
        scenarios: vec![ScenarioSummary::from_result(&on), ScenarioSummary::from_result(&off)],
        compare: vec![CompareSummary::new(&on, &off)],
    };
    emit_summary(&summary, &out.join("summary.json"))?;
    print!("{}", compare_table(&summary));
    Ok(if fell_badly(&[&on, &off]) { EXIT_FELL } else { EXIT_OK })
}

fn thread_cap(jobs: usize) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n.min(jobs.max(1))),
            _ => Err(Error::Scenario(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(jobs.max(1)),
    }
}

struct Job {
    cfg: ScenarioConfig,
    stem: String,
}

fn cmd_catalog(out: &Path, seed: u64, format: Format) -> Result<i32> {
    prepare_dir(out)?;
    let catalog = scenario_catalog(seed);
    let mut jobs = Vec::new();
    for cfg in &catalog {
        let path = out.join(format!("{}.cfg", cfg.name));
        std::fs::write(&path, write_config(cfg)).map_err(|e| Error::io(&path, e))?;
        jobs.push(Job {
            cfg: cfg.clone(),
            stem: cfg.name.clone(),
        });
        if cfg.compare {
            jobs.push(Job {
                cfg: arm(cfg, !cfg.adaptive),
                stem: format!("{}.adaptive-{}", cfg.name, if cfg.adaptive { "off" } else { "on" }),
            });
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap(jobs.len())?)
        .build()
        .map_err(|e| Error::Scenario(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let r = run_scenario(&job.cfg)?;
                emit_run(&r, out, &job.stem, format)?;
                Ok(r)
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut summary = Summary::default();
    for (job, r) in jobs.iter().zip(&results) {
        let mut s = ScenarioSummary::from_result(r);
        s.name = job.stem.clone();
        summary.scenarios.push(s);
    }
    for cfg in catalog.iter().filter(|c| c.compare) {
        let find = |adaptive: bool| {
            results
                .iter()
                .find(|r| r.config.name == cfg.name && r.config.adaptive == adaptive)
                .expect("both arms were scheduled")
        };
        summary.compare.push(CompareSummary::new(find(true), find(false)));
    }
    emit_summary(&summary, &out.join("summary.json"))?;
    print!("{}", compare_table(&summary));
    let refs: Vec<&RunResult> = results.iter().collect();
    Ok(if fell_badly(&refs) { EXIT_FELL } else { EXIT_OK })
}

/// Parse `args` (program name first), run, and return the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            adaptive,
            format,
        } => cmd_run(&config, &out, seed, adaptive, format.into()),
        Command::Catalog { out, seed, format } => cmd_catalog(&out, seed, format.into()),
        Command::Compare {
            config,
            out,
            seed,
            format,
        } => cmd_compare(&config, &out, seed, format.into()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_run_invocation() {
        let cli = Cli::try_parse_from(["gaitadapt", "run", "--config", "s.cfg", "--out", "out/", "--seed", "42"]).unwrap();
        match cli.command {
            Command::Run { seed, config, format, .. } => {
                assert_eq!(seed, Some(42));
                assert_eq!(config, PathBuf::from("s.cfg"));
                assert_eq!(format, OutputFormat::Csv);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_cli(["gaitadapt", "run"]), EXIT_USAGE);
        assert_eq!(run_cli(["gaitadapt", "run", "--config", "a", "--out", "b", "--bogus"]), EXIT_USAGE);
        assert_eq!(run_cli(["gaitadapt"]), EXIT_USAGE);
        assert_eq!(
            run_cli(["gaitadapt", "compare", "--config", "a", "--out", "b", "--adaptive", "on"]),
            EXIT_USAGE
        );
    }

    #[test]
    fn catalog_parses_without_config() {
        let cli = Cli::try_parse_from(["gaitadapt", "catalog", "--out", "out/"]).unwrap();
        assert!(matches!(cli.command, Command::Catalog { seed: 0, .. }));
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(exit_code(&Error::Divergence { tick: 3, t: 0.003 }), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::Config { line: 1, msg: "x".into() }), EXIT_USAGE);
    }
}
