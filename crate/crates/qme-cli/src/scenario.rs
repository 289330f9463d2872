//! The four scenario runners. Each returns its finished output files;
//! writing to disk stays with the caller. Monte Carlo batches and sweep
//! grid points evaluate in parallel, but partial results are collected and
//! merged in index order, so output bytes do not depend on the worker
//! count.

use std::f64::consts::TAU;

use rayon::prelude::*;

use qme_core::{
    ensemble_batch, oracle, run_ensemble_averaged, stats_to_mean, CycleSchedule, DriveConfig,
    EngineError, EnsembleStats, Mode, SamplingConfig, TlsEnsemble, TrajectoryResult,
    TRAJECTORY_BATCH,
};

use crate::config::{Config, Resolved, RunMode};
use crate::csvout::{self, MapRow, NamedOutput, SweepRow};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "snake_case")]
pub enum Scenario {
    /// Time-resolved engine run: state, powers, and gain over a few cycles.
    Cyclic,
    /// Mean excess gain and work over a drive-amplitude by stroke-length grid.
    GainWorkSweep,
    /// Per-cycle extracted work along one run.
    WorkVsCycle,
    /// Feedback-free work decay over a stroke-angle by cycle grid.
    OpenLoopMap,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::Cyclic => "cyclic",
            Scenario::GainWorkSweep => "gain_work_sweep",
            Scenario::WorkVsCycle => "work_vs_cycle",
            Scenario::OpenLoopMap => "open_loop_map",
        }
    }
}

fn sim_err(e: EngineError) -> CliError {
    CliError::Sim(e.to_string())
}

/// Monte Carlo mean with batches fanned out over the rayon pool. Batch
/// partials come back in index order, so the merged sums are bit-identical
/// to a sequential run.
fn monte_carlo_mean(
    ens: &TlsEnsemble,
    sched: &CycleSchedule,
    seed: u64,
    trajectories: u64,
) -> Result<TrajectoryResult, CliError> {
    let prep = ens.prepare(sched).map_err(|e| CliError::Config(e.to_string()))?;
    let n_batches = trajectories.div_ceil(TRAJECTORY_BATCH);
    let parts: Result<Vec<EnsembleStats>, EngineError> = (0..n_batches)
        .into_par_iter()
        .map(|b| ensemble_batch(&prep, sched, seed, b, trajectories))
        .collect();
    let mut stats = EnsembleStats::empty(sched.n_cycles);
    for part in parts.map_err(sim_err)? {
        stats.merge(&part);
    }
    Ok(stats_to_mean(&stats, ens.base(), &sched.drive))
}

/// One run under the resolved mode: exact average or sampled trajectories.
fn evaluate(
    ens: &TlsEnsemble,
    sched: &CycleSchedule,
    mode: RunMode,
    seed: u64,
    trajectories: u64,
) -> Result<TrajectoryResult, CliError> {
    match mode {
        RunMode::Averaged => run_ensemble_averaged(ens, sched).map_err(sim_err),
        RunMode::Feedback | RunMode::OpenLoop => {
            if trajectories == 0 {
                return Err(CliError::Config(
                    "[run] trajectories must be positive in sampled modes".into(),
                ));
            }
            monte_carlo_mean(ens, sched, seed, trajectories)
        }
    }
}

pub fn run_scenario(
    scenario: Scenario,
    cfg: &Config,
    resolved: &Resolved,
    mode: RunMode,
    seed: u64,
    trajectories: u64,
) -> Result<Vec<NamedOutput>, CliError> {
    match scenario {
        Scenario::Cyclic => cyclic(cfg, resolved, mode, seed, trajectories),
        Scenario::GainWorkSweep => gain_work_sweep(cfg, resolved, mode, seed, trajectories),
        Scenario::WorkVsCycle => work_vs_cycle(cfg, resolved, mode, seed, trajectories),
        Scenario::OpenLoopMap => open_loop_map(cfg, resolved, mode, seed, trajectories),
    }
}

fn cyclic(
    cfg: &Config,
    resolved: &Resolved,
    mode: RunMode,
    seed: u64,
    trajectories: u64,
) -> Result<Vec<NamedOutput>, CliError> {
    let sched = cfg.schedule(
        resolved,
        resolved.drive,
        cfg.run.n_cycles,
        cfg.protocol_for(mode),
        resolved.sampling,
    )?;
    let tr = evaluate(&resolved.ensemble, &sched, mode, seed, trajectories)?;
    Ok(vec![csvout::series_csv(&tr), csvout::cycles_csv(&tr)])
}

fn gain_work_sweep(
    cfg: &Config,
    resolved: &Resolved,
    mode: RunMode,
    seed: u64,
    trajectories: u64,
) -> Result<Vec<NamedOutput>, CliError> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| {
        CliError::Config("gain_work_sweep needs a [sweep] section with omega_hz and t_r_us".into())
    })?;
    if sweep.omega_hz.is_empty() || sweep.t_r_us.is_empty() {
        return Err(CliError::Config("[sweep] omega_hz and t_r_us must be non-empty".into()));
    }
    let mut grid = Vec::with_capacity(sweep.t_r_us.len() * sweep.omega_hz.len());
    for &t_r_us in &sweep.t_r_us {
        for &omega_hz in &sweep.omega_hz {
            grid.push((omega_hz, t_r_us));
        }
    }
    let protocol = cfg.protocol_for(mode);
    let gamma_c = resolved.qubit.gamma_c();
    let t2 = resolved.qubit.t2();
    let rows: Result<Vec<SweepRow>, CliError> = grid
        .par_iter()
        .map(|&(omega_hz, t_r_us)| {
            let drive = DriveConfig::new(TAU * omega_hz, resolved.drive.phi(), t_r_us * 1e-6)
                .map_err(|e| CliError::Config(format!("[sweep] {e}")))?;
            let sched = cfg.schedule(
                resolved,
                drive,
                cfg.run.n_cycles,
                protocol,
                SamplingConfig::records_only(),
            )?;
            let tr = evaluate(&resolved.ensemble, &sched, mode, seed, trajectories)?;
            let n = tr.records.len() as f64;
            let work_normalized =
                tr.records.iter().map(|r| r.work_normalized).sum::<f64>() / n;
            let gains: Vec<f64> =
                tr.records.iter().filter_map(|r| r.cycle_gain).map(|g| g - 1.0).collect();
            let gain_minus_1 =
                (!gains.is_empty()).then(|| gains.iter().sum::<f64>() / gains.len() as f64);
            let theta = drive.theta();
            let omega = drive.omega();
            let (t2_factor, t2_work) = oracle::finite_t2_cycle(omega, drive.t_r(), t2);
            Ok(SweepRow {
                omega_hz,
                t_r_us,
                theta,
                gain_minus_1,
                work_normalized,
                ideal_gain_minus_1: oracle::ideal_excess_gain(theta, gamma_c, omega),
                ideal_work_normalized: oracle::ideal_norm_work(theta),
                t2_gain_minus_1: t2_factor * 2.0 * gamma_c / omega,
                t2_work_normalized: t2_work,
            })
        })
        .collect();
    Ok(vec![csvout::sweep_csv(&rows?)])
}

fn work_vs_cycle(
    cfg: &Config,
    resolved: &Resolved,
    mode: RunMode,
    seed: u64,
    trajectories: u64,
) -> Result<Vec<NamedOutput>, CliError> {
    let sched = cfg.schedule(
        resolved,
        resolved.drive,
        cfg.run.n_cycles,
        cfg.protocol_for(mode),
        SamplingConfig::records_only(),
    )?;
    let tr = evaluate(&resolved.ensemble, &sched, mode, seed, trajectories)?;
    Ok(vec![csvout::work_vs_cycle_csv(&tr, resolved.drive.theta())])
}

fn open_loop_map(
    cfg: &Config,
    resolved: &Resolved,
    mode: RunMode,
    seed: u64,
    trajectories: u64,
) -> Result<Vec<NamedOutput>, CliError> {
    let map = cfg.map.as_ref().ok_or_else(|| {
        CliError::Config("open_loop_map needs a [map] section with theta_rad and n_cycles".into())
    })?;
    if map.theta_rad.is_empty() {
        return Err(CliError::Config("[map] theta_rad must be non-empty".into()));
    }
    if mode == RunMode::Feedback {
        return Err(CliError::Config(
            "open_loop_map always runs feedback-free; use --mode averaged or --mode open_loop"
                .into(),
        ));
    }
    let t_r = resolved.drive.t_r();
    let results: Result<Vec<(f64, TrajectoryResult)>, CliError> = map
        .theta_rad
        .par_iter()
        .map(|&theta| {
            let drive = DriveConfig::new(theta / t_r, resolved.drive.phi(), t_r)
                .map_err(|e| CliError::Config(format!("[map] {e}")))?;
            let sched = cfg.schedule(
                resolved,
                drive,
                map.n_cycles,
                Mode::OpenLoop,
                SamplingConfig::records_only(),
            )?;
            let tr = evaluate(&resolved.ensemble, &sched, mode, seed, trajectories)?;
            Ok((theta, tr))
        })
        .collect();
    let mut rows = Vec::new();
    for (theta, tr) in results? {
        let w1 = tr.records.first().map_or(0.0, |r| r.work_normalized);
        for r in &tr.records {
            rows.push(MapRow {
                theta,
                cycle_index: r.cycle_index,
                work_normalized: r.work_normalized,
                work_ratio: (w1 != 0.0).then(|| r.work_normalized / w1),
            });
        }
    }
    Ok(vec![csvout::map_csv(&rows)])
}
