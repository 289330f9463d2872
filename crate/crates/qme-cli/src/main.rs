//! `qme`: config-driven engine scenarios and calibration fits.
//!
//! Exit codes group the failure classes: 2 bad configuration or flags,
//! 3 bad or insufficient data, 4 simulation failure, 5 I/O failure.

mod config;
mod csvout;
mod fitio;
mod manifest;
mod scenario;

use std::env;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{Config, RunMode};
use csvout::NamedOutput;
use fitio::FixedReflectionParams;
use manifest::{digest_outputs, RunManifest};
use scenario::{run_scenario, Scenario};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Sim(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Sim(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Sim(m) => write!(f, "simulation: {m}"),
            CliError::Io(m) => write!(f, "io: {m}"),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(
    name = "qme",
    version,
    about = "Measurement-driven qubit engine: scenario simulations and device-calibration fits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a TOML config and write CSV datasets plus a manifest.
    Simulate {
        #[arg(value_enum)]
        scenario: Scenario,
        /// Path to the TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Overrides [run] seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides [run] trajectories.
        #[arg(long)]
        trajectories: Option<u64>,
        /// Overrides [run] mode.
        #[arg(long, value_enum)]
        mode: Option<RunMode>,
    },
    /// Fit device parameters from a measured data file.
    Fit {
        #[arg(value_enum)]
        target: FitTarget,
        /// Path to the CSV data file.
        #[arg(long)]
        data: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Fixed energy relaxation time for the reflection model.
        #[arg(long, default_value_t = 25.4)]
        t1_us: f64,
        /// Fixed dephasing time for the reflection model.
        #[arg(long, default_value_t = 32.0)]
        t2_us: f64,
        /// Ground-state polarization entering the reflection dip.
        #[arg(long, default_value_t = 1.0)]
        p_pol: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "snake_case")]
enum FitTarget {
    /// Line coupling and drive amplitude from a weak-drive reflection scan.
    Reflection,
    /// Dispersive shift and resonator linewidth from shift/dephasing scans.
    Stark,
}

/// Honor QME_WORKERS if set; otherwise rayon picks the hardware default.
fn init_workers() -> Result<(), CliError> {
    let Ok(raw) = env::var("QME_WORKERS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("QME_WORKERS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

fn write_outputs(dir: &Path, outputs: &[NamedOutput]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for o in outputs {
        let path = dir.join(&o.name);
        fs::write(&path, &o.data).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn simulate(
    scenario: Scenario,
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    trajectories: Option<u64>,
    mode: Option<RunMode>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(config_path).map_err(|e| io_err(config_path, e))?;
    let mut cfg = Config::parse(&text)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    if let Some(t) = trajectories {
        cfg.run.trajectories = t;
    }
    if let Some(m) = mode {
        cfg.run.mode = m;
    }
    let resolved = cfg.resolve()?;

    let start = Instant::now();
    let outputs = run_scenario(
        scenario,
        &cfg,
        &resolved,
        cfg.run.mode,
        cfg.run.seed,
        cfg.run.trajectories,
    )?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let m = RunManifest {
        scenario: scenario.label(),
        code_version: env!("CARGO_PKG_VERSION"),
        mode: cfg.run.mode.label(),
        seed: cfg.run.seed,
        trajectories: cfg.run.trajectories,
        wall_time_s,
        config: &cfg,
        outputs: digest_outputs(&outputs),
    };
    let manifest_json = serde_json::to_string_pretty(&m)
        .map_err(|e| CliError::Io(format!("manifest: {e}")))?
        + "\n";

    write_outputs(out, &outputs)?;
    let path = out.join("manifest.json");
    fs::write(&path, manifest_json).map_err(|e| io_err(&path, e))?;

    for entry in &m.outputs {
        println!("wrote {} ({} bytes)", out.join(&entry.path).display(), entry.bytes);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn fit(
    target: FitTarget,
    data_path: &Path,
    out: &Path,
    fixed: &FixedReflectionParams,
) -> Result<(), CliError> {
    let text = fs::read_to_string(data_path).map_err(|e| io_err(data_path, e))?;
    let outputs = match target {
        FitTarget::Reflection => fitio::run_reflection_fit(&text, fixed)?,
        FitTarget::Stark => fitio::run_stark_fit(&text)?,
    };
    write_outputs(out, &outputs)?;
    for o in &outputs {
        println!("wrote {}", out.join(&o.name).display());
    }
    if let Some(report) = outputs.iter().find(|o| o.name == "fit_report.txt") {
        print!("{}", report.data);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_workers()?;
    match cli.command {
        Command::Simulate { scenario, config, out, seed, trajectories, mode } => {
            simulate(scenario, &config, &out, seed, trajectories, mode)
        }
        Command::Fit { target, data, out, t1_us, t2_us, p_pol } => {
            fit(target, &data, &out, &FixedReflectionParams { t1_us, t2_us, p_pol })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
