//! Slow device-parameter fluctuations as a quenched mixture.
//!
//! Each two-level fluctuator, when excited, shifts the qubit frequency and
//! changes its dephasing; fluctuators flip slowly compared with one engine
//! sequence, so a sequence sees one frozen joint configuration drawn from
//! the product distribution. K independent fluctuators expand to 2^K
//! weighted [`QubitConfig`]s: frequency shifts add into the detuning, and
//! excess transverse rates 1/t2_excited - 1/t2_base add onto the base rate.
//!
//! Averaged runs are exact convex mixtures of per-configuration averaged
//! runs (every reported column is linear in the configuration weights);
//! Monte Carlo runs draw the fluctuator state per trajectory, before any
//! reset or measurement randomness, so trajectory streams stay aligned with
//! the single-configuration engine when K = 0.
//!
//! [`fit_tls_probabilities`] inverts the mixture: because the model gain
//! series is linear in the weights, the per-configuration series are
//! computed once and the occupation probabilities are recovered by a dense
//! grid scan plus local refinement, with a flatness flag instead of a fake
//! minimum when the data cannot distinguish the configurations.

use crate::bloch::{BlochState, DriveConfig, DrivenPropagator, QubitConfig};
use crate::cycle::{
    prepare_propagator, run_engine_averaged, run_engine_prepared, trajectory_rng, CycleRecord,
    CycleSchedule, EnsembleStats, TimedState, TrajectoryResult, TRAJECTORY_BATCH,
};
use crate::error::{ConfigError, EngineError, FitError};
use crate::field::{FieldTimeSeries, Window};
use crate::num;
use alloc::vec::Vec;
use num_complex::Complex;
use rand::Rng;

const TAU: f64 = core::f64::consts::TAU;

/// Cap on fluctuator count; the expansion is exponential in it.
pub const MAX_FLUCTUATORS: usize = 16;

/// How an excited fluctuator changes the qubit coherence: either the
/// absolute transverse lifetime while excited, or the rate it adds to the
/// base 1/t2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TlsDephasing {
    /// Absolute t2 (seconds) of the qubit while this fluctuator is excited.
    T2Excited(f64),
    /// Added transverse rate (1/s) on top of the base 1/t2.
    ExcessRate(f64),
}

/// One two-level fluctuator: frequency pull, coherence change, and the
/// probability of finding it excited in a given sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TlsSpec {
    freq_shift_hz: f64,
    dephasing: TlsDephasing,
    p_excited: f64,
}

impl TlsSpec {
    pub fn new(
        freq_shift_hz: f64,
        dephasing: TlsDephasing,
        p_excited: f64,
    ) -> Result<Self, ConfigError> {
        if !freq_shift_hz.is_finite() {
            return Err(ConfigError::NonFinite("freq_shift_hz"));
        }
        match dephasing {
            TlsDephasing::T2Excited(t2) => {
                if !(t2 > 0.0) {
                    return Err(ConfigError::NonPositive("t2_excited"));
                }
            }
            TlsDephasing::ExcessRate(r) => {
                if !r.is_finite() {
                    return Err(ConfigError::NonFinite("excess_rate"));
                }
            }
        }
        if !(0.0..=1.0).contains(&p_excited) {
            return Err(ConfigError::ExcitationProbability);
        }
        Ok(TlsSpec { freq_shift_hz, dephasing, p_excited })
    }

    /// Fluctuator whose excited state sets an absolute t2.
    pub fn with_t2_excited(
        freq_shift_hz: f64,
        t2_excited: f64,
        p_excited: f64,
    ) -> Result<Self, ConfigError> {
        TlsSpec::new(freq_shift_hz, TlsDephasing::T2Excited(t2_excited), p_excited)
    }

    pub fn freq_shift_hz(&self) -> f64 {
        self.freq_shift_hz
    }

    pub fn p_excited(&self) -> f64 {
        self.p_excited
    }

    pub fn with_p_excited(mut self, p_excited: f64) -> Result<Self, ConfigError> {
        if !(0.0..=1.0).contains(&p_excited) {
            return Err(ConfigError::ExcitationProbability);
        }
        self.p_excited = p_excited;
        Ok(self)
    }

    /// Rate this fluctuator adds to the base transverse rate when excited.
    fn excess_rate(&self, base_rate: f64) -> f64 {
        match self.dephasing {
            TlsDephasing::T2Excited(t2) => 1.0 / t2 - base_rate,
            TlsDephasing::ExcessRate(r) => r,
        }
    }
}

/// A base configuration dressed by independent fluctuators.
#[derive(Clone, Debug, PartialEq)]
pub struct TlsEnsemble {
    base: QubitConfig,
    tls: Vec<TlsSpec>,
}

impl TlsEnsemble {
    /// Validates eagerly: every joint configuration must itself be a valid
    /// [`QubitConfig`].
    pub fn new(base: QubitConfig, tls: Vec<TlsSpec>) -> Result<Self, ConfigError> {
        if tls.len() > MAX_FLUCTUATORS {
            return Err(ConfigError::EnsembleTooLarge);
        }
        let ens = TlsEnsemble { base, tls };
        ens.expand()?;
        Ok(ens)
    }

    pub fn base(&self) -> &QubitConfig {
        &self.base
    }

    pub fn tls(&self) -> &[TlsSpec] {
        &self.tls
    }

    /// Same fluctuators with replaced excitation probabilities.
    pub fn with_probabilities(&self, p: &[f64]) -> Result<Self, ConfigError> {
        assert_eq!(p.len(), self.tls.len());
        let mut tls = self.tls.clone();
        for (t, &pi) in tls.iter_mut().zip(p) {
            *t = t.with_p_excited(pi)?;
        }
        Ok(TlsEnsemble { base: self.base, tls })
    }

    /// The 2^K joint configurations. Entry `mask` has fluctuator i excited
    /// iff bit i of `mask` is set; its weight is the product of the
    /// per-fluctuator probabilities. Entry 0 is the base configuration
    /// bit-exactly.
    pub fn expand(&self) -> Result<Vec<(f64, QubitConfig)>, ConfigError> {
        let k = self.tls.len();
        let base_rate = self.base.gamma_2();
        let mut out = Vec::with_capacity(1usize << k);
        for mask in 0..(1u32 << k) {
            let mut w = 1.0;
            let mut delta = self.base.delta();
            let mut rate = base_rate;
            for (i, t) in self.tls.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    w *= t.p_excited;
                    delta += TAU * t.freq_shift_hz;
                    rate += t.excess_rate(base_rate);
                } else {
                    w *= 1.0 - t.p_excited;
                }
            }
            let q = if mask == 0 {
                self.base
            } else {
                let t2 = if rate == 0.0 { f64::INFINITY } else { 1.0 / rate };
                self.base.with_delta(delta)?.with_t2(t2)?
            };
            out.push((w, q));
        }
        Ok(out)
    }
}

/// How to average over the fluctuator mixture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsembleMode {
    /// Exact weighted mixture of per-configuration averaged runs.
    Averaged,
    /// Quenched sampling: each trajectory draws one joint configuration.
    MonteCarlo { trajectories: u64, seed: u64 },
}

/// Expanded configurations with their stroke propagators, shareable across
/// trajectories and worker threads.
pub struct PreparedEnsemble {
    configs: Vec<(f64, QubitConfig)>,
    props: Vec<DrivenPropagator>,
    probs: Vec<f64>,
}

impl PreparedEnsemble {
    pub fn configs(&self) -> &[(f64, QubitConfig)] {
        &self.configs
    }

    /// Draw one joint configuration index; consumes exactly K draws.
    fn draw_mask<R: Rng>(&self, rng: &mut R) -> usize {
        let mut mask = 0usize;
        for (i, &p) in self.probs.iter().enumerate() {
            if rng.random_bool(p) {
                mask |= 1 << i;
            }
        }
        mask
    }
}

impl TlsEnsemble {
    pub fn prepare(&self, sched: &CycleSchedule) -> Result<PreparedEnsemble, ConfigError> {
        let configs = self.expand()?;
        let props = configs
            .iter()
            .map(|(_, q)| prepare_propagator(q, sched))
            .collect();
        let probs = self.tls.iter().map(|t| t.p_excited).collect();
        Ok(PreparedEnsemble { configs, props, probs })
    }
}

/// Partial sums for trajectories [batch_index * TRAJECTORY_BATCH, ...)
/// bounded by `n_total`. Trajectory i draws its fluctuator bits first, then
/// runs the engine, all from stream i of the master seed; merging batches in
/// index order reproduces the sequential result bit for bit.
pub fn ensemble_batch(
    prep: &PreparedEnsemble,
    sched: &CycleSchedule,
    master_seed: u64,
    batch_index: u64,
    n_total: u64,
) -> Result<EnsembleStats, EngineError> {
    let start = batch_index * TRAJECTORY_BATCH;
    let end = n_total.min(start + TRAJECTORY_BATCH);
    let mut stats = EnsembleStats::empty(sched.n_cycles);
    for idx in start..end {
        let mut rng = trajectory_rng(master_seed, idx);
        let mask = prep.draw_mask(&mut rng);
        let tr = run_engine_prepared(&prep.configs[mask].1, sched, &prep.props[mask], &mut rng)?;
        stats.add_trajectory(&tr);
    }
    Ok(stats)
}

/// All Monte Carlo statistics, batches merged in order on one thread.
pub fn run_ensemble_stats(
    ens: &TlsEnsemble,
    sched: &CycleSchedule,
    master_seed: u64,
    n_trajectories: u64,
) -> Result<EnsembleStats, EngineError> {
    let prep = ens.prepare(sched).map_err(EngineError::Config)?;
    let mut stats = EnsembleStats::empty(sched.n_cycles);
    for b in 0..n_trajectories.div_ceil(TRAJECTORY_BATCH) {
        let part = ensemble_batch(&prep, sched, master_seed, b, n_trajectories)?;
        stats.merge(&part);
    }
    Ok(stats)
}

fn mix_states(parts: &[(f64, BlochState)]) -> BlochState {
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    for (w, s) in parts {
        x += w * s.x();
        y += w * s.y();
        z += w * s.z();
    }
    BlochState::new_unchecked(x, y, z)
}

/// Exact convex mixture of per-configuration averaged runs; all grids are
/// identical because timing comes from the schedule alone.
pub fn run_ensemble_averaged(
    ens: &TlsEnsemble,
    sched: &CycleSchedule,
) -> Result<TrajectoryResult, EngineError> {
    let configs = ens.expand().map_err(EngineError::Config)?;
    let mut parts = Vec::with_capacity(configs.len());
    for (w, q) in &configs {
        parts.push((*w, run_engine_averaged(q, sched)?));
    }

    let n_rows = parts[0].1.field.len();
    let n_cycles = parts[0].1.records.len();
    debug_assert!(parts.iter().all(|(_, tr)| tr.field.len() == n_rows));

    let mut records = Vec::with_capacity(n_cycles);
    for c in 0..n_cycles {
        let r0 = &parts[0].1.records[c];
        let sum = |f: &dyn Fn(&CycleRecord) -> f64| -> f64 {
            parts.iter().map(|(w, tr)| w * f(&tr.records[c])).sum()
        };
        let cycle_gain = if r0.cycle_gain.is_some() {
            Some(sum(&|r| r.cycle_gain.expect("uniform drive")))
        } else {
            None
        };
        records.push(CycleRecord {
            cycle_index: r0.cycle_index,
            outcome: None,
            p_plus: sum(&|r| r.p_plus),
            stroke_end_state: mix_states(
                &parts
                    .iter()
                    .map(|(w, tr)| (*w, tr.records[c].stroke_end_state))
                    .collect::<Vec<_>>(),
            ),
            end_state: mix_states(
                &parts
                    .iter()
                    .map(|(w, tr)| (*w, tr.records[c].end_state))
                    .collect::<Vec<_>>(),
            ),
            work: sum(&|r| r.work),
            work_normalized: sum(&|r| r.work_normalized),
            cycle_gain,
        });
    }

    let mut field = FieldTimeSeries::new(&ens.base, &sched.drive);
    let mut states = Vec::with_capacity(n_rows);
    let template = &parts[0].1.field;
    for i in 0..n_rows {
        let mut b_out = Complex::new(0.0, 0.0);
        let (mut p_out, mut p_in, mut p_ex, mut g) = (0.0, 0.0, 0.0, 0.0);
        for (w, tr) in &parts {
            b_out += tr.field.b_out[i] * *w;
            p_out += w * tr.field.p_out_norm[i];
            p_in += w * tr.field.p_in_norm[i];
            p_ex += w * tr.field.p_excess[i];
            if let Some(gi) = tr.field.gain[i] {
                g += w * gi;
            }
        }
        field.t.push(template.t[i]);
        field.cycle_index.push(template.cycle_index[i]);
        field.window.push(template.window[i]);
        field.b_out.push(b_out);
        field.p_out_norm.push(p_out);
        field.p_in_norm.push(p_in);
        field.gain.push(template.gain[i].map(|_| g));
        field.p_excess.push(p_ex);
        states.push(TimedState {
            t: template.t[i],
            state: mix_states(
                &parts
                    .iter()
                    .map(|(w, tr)| (*w, tr.states[i].state))
                    .collect::<Vec<_>>(),
            ),
        });
    }

    Ok(TrajectoryResult { records, states, field })
}

/// Monte Carlo mean converted to the common run shape (records carry means,
/// no sampled outcomes).
pub fn stats_to_mean(
    stats: &EnsembleStats,
    base: &QubitConfig,
    d: &DriveConfig,
) -> TrajectoryResult {
    let n = stats.trajectories as f64;
    let mut records = Vec::with_capacity(stats.cycles.len());
    for (c, cs) in stats.cycles.iter().enumerate() {
        records.push(CycleRecord {
            cycle_index: c as u32 + 1,
            outcome: None,
            p_plus: cs.sum_p_plus / n,
            stroke_end_state: {
                let m = stats.mean_stroke_end(c);
                BlochState::new_unchecked(m[0], m[1], m[2])
            },
            end_state: {
                let m = stats.mean_end(c);
                BlochState::new_unchecked(m[0], m[1], m[2])
            },
            work: cs.sum_work / n,
            work_normalized: cs.sum_work_norm / n,
            cycle_gain: stats.mean_excess_gain(c).map(|e| 1.0 + e),
        });
    }
    let mut field = FieldTimeSeries::new(base, d);
    let mut states = Vec::new();
    if let Some(grid) = &stats.grid {
        for i in 0..grid.t.len() {
            let row = &grid.rows[i];
            field.t.push(grid.t[i]);
            field.cycle_index.push(grid.cycle_index[i]);
            field.window.push(grid.window[i]);
            field.b_out.push(row.sum_b_out / n);
            field.p_out_norm.push(row.sum_p_out / n);
            field.p_in_norm.push(row.sum_p_in / n);
            field.gain.push(match grid.window[i] {
                Window::Drive => Some(row.sum_gain / n),
                Window::Dead => None,
            });
            field.p_excess.push(row.sum_p_excess / n);
            let s = row.sum_state;
            states.push(TimedState {
                t: grid.t[i],
                state: BlochState::new_unchecked(s[0] / n, s[1] / n, s[2] / n),
            });
        }
    }
    TrajectoryResult { records, states, field }
}

/// Mixture-averaged engine run in either mode.
pub fn run_ensemble(
    ens: &TlsEnsemble,
    sched: &CycleSchedule,
    mode: EnsembleMode,
) -> Result<TrajectoryResult, EngineError> {
    match mode {
        EnsembleMode::Averaged => run_ensemble_averaged(ens, sched),
        EnsembleMode::MonteCarlo { trajectories, seed } => {
            let stats = run_ensemble_stats(ens, sched, seed, trajectories)?;
            Ok(stats_to_mean(&stats, &ens.base, &sched.drive))
        }
    }
}

/// Result of [`fit_tls_probabilities`]. `residual` is the sum of squared
/// gain deviations at the minimum; `residual_spread` is max - min over the
/// coarse scan, and `identifiable` is false when the landscape is flat to
/// numerical noise (the data cannot constrain the probabilities).
#[derive(Clone, Debug, PartialEq)]
pub struct TlsFit {
    pub p: Vec<f64>,
    pub residual: f64,
    pub residual_spread: f64,
    pub identifiable: bool,
}

const COARSE_STEP: f64 = 0.01;
const REFINE_STEP: f64 = 5.0e-4;

/// Recover fluctuator occupation probabilities from an observed gain time
/// series taken under `sched`. The model series must share the observed
/// grid (same schedule and sampling). At most two free probabilities.
///
/// The ensemble gain column is linear in the configuration weights, so the
/// 2^K per-configuration averaged series are computed once and each
/// candidate p costs only the weight algebra: a dense scan at step 0.01
/// followed by refinement at step 5e-4 around the minimum.
pub fn fit_tls_probabilities(
    observed: &FieldTimeSeries,
    ens: &TlsEnsemble,
    sched: &CycleSchedule,
) -> Result<TlsFit, FitError> {
    let k = ens.tls.len();
    if k > 2 {
        return Err(FitError::Config(ConfigError::EnsembleTooLarge));
    }
    let configs = ens.expand().map_err(FitError::Config)?;
    let mut model_cols: Vec<Vec<f64>> = Vec::with_capacity(configs.len());
    let mut drive_rows: Vec<usize> = Vec::new();
    for (j, (_, q)) in configs.iter().enumerate() {
        let tr = run_engine_averaged(q, sched).map_err(|_| FitError::TooFewPoints {
            needed: 1,
            got: 0,
        })?;
        if j == 0 {
            if observed.len() != tr.field.len() {
                return Err(FitError::TooFewPoints {
                    needed: tr.field.len(),
                    got: observed.len(),
                });
            }
            drive_rows = (0..tr.field.len())
                .filter(|&i| tr.field.gain[i].is_some() && observed.gain[i].is_some())
                .collect();
            if drive_rows.len() < 2 {
                return Err(FitError::TooFewPoints { needed: 2, got: drive_rows.len() });
            }
        }
        model_cols.push(
            drive_rows
                .iter()
                .map(|&i| tr.field.gain[i].expect("drive row"))
                .collect(),
        );
    }
    let obs: Vec<f64> = drive_rows
        .iter()
        .map(|&i| observed.gain[i].expect("drive row"))
        .collect();

    let residual_at = |p: &[f64]| -> f64 {
        let mut rss = 0.0;
        for (t, &o) in obs.iter().enumerate() {
            let mut g = 0.0;
            for (mask, col) in model_cols.iter().enumerate() {
                let mut w = 1.0;
                for (i, &pi) in p.iter().enumerate() {
                    w *= if mask & (1 << i) != 0 { pi } else { 1.0 - pi };
                }
                g += w * col[t];
            }
            let r = g - o;
            rss += r * r;
        }
        rss
    };

    let scan = |lo: &[f64], hi: &[f64], step: f64| -> (Vec<f64>, f64, f64, f64) {
        let counts: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| num::round((b - a) / step) as usize + 1)
            .collect();
        let total: usize = counts.iter().product();
        let mut best_p = lo.to_vec();
        let mut best = f64::INFINITY;
        let mut worst = f64::NEG_INFINITY;
        let mut p = alloc::vec![0.0; k];
        for flat in 0..total.max(1) {
            let mut rem = flat;
            for i in 0..k {
                let idx = rem % counts[i];
                rem /= counts[i];
                p[i] = (lo[i] + idx as f64 * step).clamp(0.0, 1.0);
            }
            let r = residual_at(&p);
            if r < best {
                best = r;
                best_p.copy_from_slice(&p);
            }
            if r > worst {
                worst = r;
            }
        }
        let spread = if total > 1 { worst - best } else { 0.0 };
        (best_p, best, worst, spread)
    };

    if k == 0 {
        let residual = residual_at(&[]);
        return Ok(TlsFit { p: Vec::new(), residual, residual_spread: 0.0, identifiable: true });
    }

    let zeros = alloc::vec![0.0; k];
    let ones = alloc::vec![1.0; k];
    let (coarse_p, coarse_best, _, spread) = scan(&zeros, &ones, COARSE_STEP);
    let identifiable = spread > 1e-9 * (1.0 + coarse_best);
    if !identifiable {
        return Ok(TlsFit {
            p: coarse_p,
            residual: coarse_best,
            residual_spread: spread,
            identifiable: false,
        });
    }
    let lo: Vec<f64> = coarse_p.iter().map(|&v| (v - COARSE_STEP).max(0.0)).collect();
    let hi: Vec<f64> = coarse_p.iter().map(|&v| (v + COARSE_STEP).min(1.0)).collect();
    let (p, residual, _, _) = scan(&lo, &hi, REFINE_STEP);
    Ok(TlsFit { p, residual, residual_spread: spread, identifiable: true })
}
