//! The four-stroke engine cycle.
//!
//! One cycle is: Rabi work stroke of duration t_r, then a measurement block
//! of duration t_meas containing an x-basis readout and (in feedback mode) a
//! conditional recovery gate. Active reset runs once before the first cycle.
//!
//! The x readout is built from y-axis pi/2 gates around a projective z
//! measurement. All gates are instantaneous and written as their exact
//! action on the Bloch vector:
//!
//! * opening gate (+pi/2 about y):  (x, y, z) -> (z, y, -x), so |+x> -> |-z>
//! * aligning-from-minus-z gate (-pi/2 about y): (x, y, z) -> (-z, y, x)
//! * aligning-from-plus-z gate (+pi/2 about y): same map as the opening gate
//! * pi pulse about y: (x, y, z) -> (-x, y, -z)
//!
//! A projection onto -z therefore means the qubit was found along +x. In
//! feedback mode the closing gate is chosen from the *reported* outcome so
//! that a correct report restores |+x>; in open-loop mode the closing gate
//! always inverts the opening gate, which preserves <sx> through the block.
//! Each gate contracts the Bloch vector by (1 - gate_error), a depolarizing
//! error model.
//!
//! Block timing: the readout window t_int is centered in the dead time
//! t_meas; the projection sits at the middle of the window with free
//! evolution for t_int/2 on either side; the leading and trailing remainders
//! are free evolution.
//!
//! Two evaluation modes are provided. [`run_engine`] draws measurement
//! outcomes stochastically and is bit-reproducible from a seed;
//! [`run_engine_averaged`] propagates the exact ensemble average by treating
//! the measurement as a channel and recombining the feedback branches, so it
//! has no sampling noise. Both report per-cycle work and gain computed from
//! propagator-exact stroke integrals, not from the sampling grid.

use crate::bloch::{evolve_free, BlochState, DriveConfig, DrivenPropagator, QubitConfig};
use crate::error::{ConfigError, EngineError, FieldError};
use crate::field::{
    excess_gain_from_integrals, work_from_integrals, FieldTimeSeries, Spontaneous, Window,
};
use alloc::vec::Vec;
use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Whether the closing gate is conditioned on the reported outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Feedback,
    OpenLoop,
}

/// Reported x-basis readout result.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    PlusX,
    MinusX,
}

/// Readout block parameters. Times in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutConfig {
    t_int: f64,
    assignment_error: f64,
    t_meas: f64,
    reset_max_iter: u32,
}

impl ReadoutConfig {
    pub fn new(
        t_int: f64,
        assignment_error: f64,
        t_meas: f64,
        reset_max_iter: u32,
    ) -> Result<Self, ConfigError> {
        if !(t_int >= 0.0) || !t_int.is_finite() {
            return Err(ConfigError::NonFinite("t_int"));
        }
        if !(t_meas >= 0.0) || !t_meas.is_finite() {
            return Err(ConfigError::NonFinite("t_meas"));
        }
        if t_int > t_meas {
            return Err(ConfigError::ReadoutWindow);
        }
        if !(0.0..0.5).contains(&assignment_error) {
            return Err(ConfigError::AssignmentError);
        }
        Ok(ReadoutConfig { t_int, assignment_error, t_meas, reset_max_iter })
    }

    /// Error-free instantaneous readout: t_int = t_meas = 0, no assignment
    /// error.
    pub fn ideal() -> Self {
        ReadoutConfig { t_int: 0.0, assignment_error: 0.0, t_meas: 0.0, reset_max_iter: 10 }
    }

    pub fn t_int(&self) -> f64 {
        self.t_int
    }

    pub fn assignment_error(&self) -> f64 {
        self.assignment_error
    }

    pub fn t_meas(&self) -> f64 {
        self.t_meas
    }

    pub fn reset_max_iter(&self) -> u32 {
        self.reset_max_iter
    }
}

/// Series sampling density. `samples_per_stroke` is the number of grid
/// intervals per drive stroke (each stroke emits that many + 1 rows,
/// endpoints included); 0 disables all series output for a fast records-only
/// run. Dead-time samples sit at segment midpoints so time tags stay
/// strictly increasing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingConfig {
    pub samples_per_stroke: u32,
    pub samples_per_dead_segment: u32,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { samples_per_stroke: 100, samples_per_dead_segment: 1 }
    }
}

impl SamplingConfig {
    pub fn records_only() -> Self {
        SamplingConfig { samples_per_stroke: 0, samples_per_dead_segment: 0 }
    }
}

/// Full description of an engine run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleSchedule {
    pub n_cycles: u32,
    pub mode: Mode,
    pub drive: DriveConfig,
    pub readout: ReadoutConfig,
    pub sampling: SamplingConfig,
    pub spontaneous: Spontaneous,
}

impl CycleSchedule {
    pub fn new(
        n_cycles: u32,
        mode: Mode,
        drive: DriveConfig,
        readout: ReadoutConfig,
    ) -> Result<Self, ConfigError> {
        if n_cycles == 0 {
            return Err(ConfigError::NoCycles);
        }
        Ok(CycleSchedule {
            n_cycles,
            mode,
            drive,
            readout,
            sampling: SamplingConfig::default(),
            spontaneous: Spontaneous::default(),
        })
    }

    pub fn with_sampling(mut self, sampling: SamplingConfig) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_spontaneous(mut self, spontaneous: Spontaneous) -> Self {
        self.spontaneous = spontaneous;
        self
    }

    /// Wall-clock duration of one cycle.
    pub fn cycle_period(&self) -> f64 {
        self.drive.t_r() + self.readout.t_meas()
    }
}

/// Result of one cycle. `outcome` is `None` in averaged mode; `p_plus` is
/// the probability of reporting +x given the pre-block state in both modes.
/// `work` integrates the excess output power over the drive stroke;
/// `work_normalized` is work / (hbar omega_q omega t_r). `cycle_gain` is
/// `None` when the drive is off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleRecord {
    pub cycle_index: u32,
    pub outcome: Option<Outcome>,
    pub p_plus: f64,
    pub stroke_end_state: BlochState,
    pub end_state: BlochState,
    pub work: f64,
    pub work_normalized: f64,
    pub cycle_gain: Option<f64>,
}

/// A Bloch state tagged with its absolute sample time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedState {
    pub t: f64,
    pub state: BlochState,
}

/// Output of one engine run. `states` is row-aligned with `field`.
#[derive(Clone, Debug)]
pub struct TrajectoryResult {
    pub records: Vec<CycleRecord>,
    pub states: Vec<TimedState>,
    pub field: FieldTimeSeries,
}

// Gate maps. Each is the exact Bloch action followed by the depolarizing
// contraction.

fn open_gate(s: BlochState, ge: f64) -> BlochState {
    BlochState::new_unchecked(s.z(), s.y(), -s.x()).contracted(1.0 - ge)
}

fn align_from_minus_z(s: BlochState, ge: f64) -> BlochState {
    BlochState::new_unchecked(-s.z(), s.y(), s.x()).contracted(1.0 - ge)
}

fn align_from_plus_z(s: BlochState, ge: f64) -> BlochState {
    BlochState::new_unchecked(s.z(), s.y(), -s.x()).contracted(1.0 - ge)
}

fn pi_gate(s: BlochState, ge: f64) -> BlochState {
    BlochState::new_unchecked(-s.x(), s.y(), -s.z()).contracted(1.0 - ge)
}

fn init_gate(s: BlochState, ge: f64) -> BlochState {
    align_from_minus_z(s, ge)
}

/// The per-trajectory generator: one master seed, one ChaCha stream per
/// trajectory index. Streams are independent, so trajectories can be
/// evaluated in any order or in parallel with identical results.
pub fn trajectory_rng(master_seed: u64, trajectory_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trajectory_index);
    rng
}

/// Drive the qubit to reported ground: repeatedly read out z projectively
/// and apply a pi pulse whenever the report says excited. Draws two random
/// numbers per iteration (projection, report flip).
pub fn active_reset(
    state: BlochState,
    q: &QubitConfig,
    r: &ReadoutConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BlochState, EngineError> {
    let mut s = state;
    for _ in 0..r.reset_max_iter {
        let p_excited = ((1.0 + s.z()) / 2.0).clamp(0.0, 1.0);
        let excited = rng.random_bool(p_excited);
        s = if excited { BlochState::EXCITED } else { BlochState::GROUND };
        let reported_excited = excited ^ rng.random_bool(r.assignment_error);
        if !reported_excited {
            return Ok(s);
        }
        s = pi_gate(s, q.gate_error());
    }
    Err(EngineError::ResetFailed { max_iter: r.reset_max_iter })
}

/// Reset from thermal equilibrium, then rotate |-z> onto |+x>.
pub fn initialize(
    q: &QubitConfig,
    r: &ReadoutConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BlochState, EngineError> {
    let thermal = BlochState::new_unchecked(0.0, 0.0, q.z_eq());
    let s = active_reset(thermal, q, r, rng)?;
    Ok(init_gate(s, q.gate_error()))
}

/// Exact ensemble average of [`initialize`]. All reset branches live on the
/// z axis, so the continuing ensemble is tracked as a weighted mean z; the
/// un-terminated tail after reset_max_iter (mass of order
/// (p_th + assignment_error)^max_iter) is folded into the exit mixture
/// instead of erroring.
pub fn initialize_averaged(q: &QubitConfig, r: &ReadoutConfig) -> BlochState {
    let a = r.assignment_error;
    let ge = q.gate_error();
    let mut cont_w = 1.0;
    let mut cont_z = q.z_eq();
    let mut exit_w = 0.0;
    let mut exit_z = 0.0; // weight-summed z of exited branches
    for _ in 0..r.reset_max_iter {
        let w_plus = cont_w * (1.0 + cont_z) / 2.0;
        let w_minus = cont_w - w_plus;
        // Reported ground exits: correct report of -z, or flipped report
        // of +z.
        exit_w += w_minus * (1.0 - a) + w_plus * a;
        exit_z += -w_minus * (1.0 - a) + w_plus * a;
        // Reported excited continues through a pi pulse.
        cont_w = w_minus * a + w_plus * (1.0 - a);
        let z_sum = -w_minus * a + w_plus * (1.0 - a);
        cont_z = if cont_w > 0.0 { -(z_sum / cont_w) * (1.0 - ge) } else { 0.0 };
        if cont_w < 1e-300 {
            cont_w = 0.0;
            break;
        }
    }
    exit_w += cont_w;
    exit_z += cont_w * cont_z;
    let z_bar = exit_z / exit_w;
    init_gate(BlochState::new_unchecked(0.0, 0.0, z_bar), ge)
}

/// Series writer shared by both evaluation modes. Disabled when the
/// schedule requests no samples.
struct Recorder<'a> {
    series: &'a mut FieldTimeSeries,
    states: &'a mut Vec<TimedState>,
    q: &'a QubitConfig,
    d: &'a DriveConfig,
    spontaneous: Spontaneous,
    dead_samples: u32,
    enabled: bool,
}

impl Recorder<'_> {
    fn sample(
        &mut self,
        t: f64,
        cycle: u32,
        window: Window,
        s: BlochState,
    ) -> Result<(), FieldError> {
        self.series
            .push_sample(t, cycle, window, &s, self.d, self.q, self.spontaneous)?;
        self.states.push(TimedState { t, state: s });
        Ok(())
    }

    /// Midpoint samples of a free-evolution segment starting at `t0` from
    /// `s0`.
    fn free_segment(
        &mut self,
        t0: f64,
        cycle: u32,
        s0: BlochState,
        duration: f64,
    ) -> Result<(), FieldError> {
        if !self.enabled || self.dead_samples == 0 || duration <= 0.0 {
            return Ok(());
        }
        for i in 0..self.dead_samples {
            let dt = duration * (i as f64 + 0.5) / self.dead_samples as f64;
            let s = evolve_free(s0, self.q, dt);
            self.sample(t0 + dt, cycle, Window::Dead, s)?;
        }
        Ok(())
    }
}

struct BlockLayout {
    lead: f64,
    half: f64,
}

fn block_layout(r: &ReadoutConfig) -> BlockLayout {
    BlockLayout { lead: (r.t_meas - r.t_int) / 2.0, half: r.t_int / 2.0 }
}

/// Probability that the block reports +x, given the state just before the
/// projection (after the opening gate and the first half window).
fn p_report_plus(pre_projection: &BlochState, a: f64) -> f64 {
    let p_true_plus = ((1.0 - pre_projection.z()) / 2.0).clamp(0.0, 1.0);
    (1.0 - a) * p_true_plus + a * (1.0 - p_true_plus)
}

/// One stochastic measurement block. Draws two random numbers (projection,
/// report flip). Returns (reported outcome, p_plus, post-block state).
#[allow(clippy::too_many_arguments)]
fn measure_block_stochastic(
    s0: BlochState,
    q: &QubitConfig,
    r: &ReadoutConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
    rec: &mut Recorder<'_>,
    t0: f64,
    cycle: u32,
) -> Result<(Outcome, f64, BlochState), FieldError> {
    let lay = block_layout(r);
    let ge = q.gate_error();

    rec.free_segment(t0, cycle, s0, lay.lead)?;
    let mut s = evolve_free(s0, q, lay.lead);
    s = open_gate(s, ge);
    rec.free_segment(t0 + lay.lead, cycle, s, lay.half)?;
    s = evolve_free(s, q, lay.half);

    let p_plus = p_report_plus(&s, r.assignment_error);
    let p_true_plus = ((1.0 - s.z()) / 2.0).clamp(0.0, 1.0);
    // Projection to -z is the +x outcome.
    let true_plus = rng.random_bool(p_true_plus);
    s = if true_plus { BlochState::GROUND } else { BlochState::EXCITED };
    let reported_plus = true_plus ^ rng.random_bool(r.assignment_error);

    rec.free_segment(t0 + lay.lead + lay.half, cycle, s, lay.half)?;
    s = evolve_free(s, q, lay.half);
    s = match (mode, reported_plus) {
        (Mode::OpenLoop, _) => align_from_minus_z(s, ge),
        (Mode::Feedback, true) => align_from_minus_z(s, ge),
        (Mode::Feedback, false) => align_from_plus_z(s, ge),
    };
    rec.free_segment(t0 + lay.lead + r.t_int, cycle, s, lay.lead)?;
    s = evolve_free(s, q, lay.lead);

    let outcome = if reported_plus { Outcome::PlusX } else { Outcome::MinusX };
    Ok((outcome, p_plus, s))
}

/// The measurement block as an exact channel on the ensemble average: both
/// projection branches (pure +-z) are evolved and recombined after their
/// report-conditioned closing gates. Returns (p_plus, post-block state).
fn measure_block_averaged(
    s0: BlochState,
    q: &QubitConfig,
    r: &ReadoutConfig,
    mode: Mode,
    rec: &mut Recorder<'_>,
    t0: f64,
    cycle: u32,
) -> Result<(f64, BlochState), FieldError> {
    let lay = block_layout(r);
    let ge = q.gate_error();
    let a = r.assignment_error;

    rec.free_segment(t0, cycle, s0, lay.lead)?;
    let mut s = evolve_free(s0, q, lay.lead);
    s = open_gate(s, ge);
    rec.free_segment(t0 + lay.lead, cycle, s, lay.half)?;
    s = evolve_free(s, q, lay.half);

    let p_plus = p_report_plus(&s, a);
    let w_minus = ((1.0 - s.z()) / 2.0).clamp(0.0, 1.0); // projected -z, true +x
    let w_plus = 1.0 - w_minus;

    // The projection dephases the mean to the z axis; its evolved mean is
    // what the series sees during the second half window.
    let dephased = BlochState::new_unchecked(0.0, 0.0, s.z());
    rec.free_segment(t0 + lay.lead + lay.half, cycle, dephased, lay.half)?;

    let branch_minus = evolve_free(BlochState::GROUND, q, lay.half);
    let branch_plus = evolve_free(BlochState::EXCITED, q, lay.half);

    let mix = |wa: f64, sa: &BlochState, wb: f64, sb: &BlochState| {
        BlochState::new_unchecked(
            wa * sa.x() + wb * sb.x(),
            wa * sa.y() + wb * sb.y(),
            wa * sa.z() + wb * sb.z(),
        )
    };

    let closed = match mode {
        Mode::OpenLoop => {
            // Closing gate independent of the report: act on the mean.
            let mean = mix(w_minus, &branch_minus, w_plus, &branch_plus);
            align_from_minus_z(mean, ge)
        }
        Mode::Feedback => {
            // Group by reported outcome; the gates are linear so they act on
            // unnormalized class sums.
            let report_plus =
                mix(w_minus * (1.0 - a), &branch_minus, w_plus * a, &branch_plus);
            let report_minus =
                mix(w_minus * a, &branch_minus, w_plus * (1.0 - a), &branch_plus);
            let c_plus = align_from_minus_z(report_plus, ge);
            let c_minus = align_from_plus_z(report_minus, ge);
            mix(1.0, &c_plus, 1.0, &c_minus)
        }
    };

    rec.free_segment(t0 + lay.lead + r.t_int, cycle, closed, lay.lead)?;
    let s = evolve_free(closed, q, lay.lead);
    Ok((p_plus, s))
}

enum Evaluation<'r> {
    Stochastic(&'r mut ChaCha8Rng),
    Averaged,
}

fn run_engine_impl(
    q: &QubitConfig,
    sched: &CycleSchedule,
    prop: &DrivenPropagator,
    mut eval: Evaluation<'_>,
) -> Result<TrajectoryResult, EngineError> {
    let d = &sched.drive;
    let r = &sched.readout;
    let sampling_on = sched.sampling.samples_per_stroke > 0;
    if sampling_on && q.gamma_c() == 0.0 && d.omega() > 0.0 {
        // Series columns need a finite input amplitude; records-only runs
        // (samples_per_stroke = 0) stay valid for uncoupled benchmarks.
        return Err(EngineError::Field(FieldError::MissingCoupling));
    }

    let mut series = FieldTimeSeries::new(q, d);
    let mut states = Vec::new();
    let mut records = Vec::with_capacity(sched.n_cycles as usize);

    let mut s = match eval {
        Evaluation::Stochastic(ref mut rng) => initialize(q, r, rng)?,
        Evaluation::Averaged => initialize_averaged(q, r),
    };

    let mut t = 0.0;
    for k in 1..=sched.n_cycles {
        let si = prop.stroke(s);
        if sampling_on {
            let mut rec = Recorder {
                series: &mut series,
                states: &mut states,
                q,
                d,
                spontaneous: sched.spontaneous,
                dead_samples: sched.sampling.samples_per_dead_segment,
                enabled: true,
            };
            let mut sg = s;
            for j in 0..prop.grid_steps() {
                rec.sample(t + j as f64 * prop.grid_dt(), k, Window::Drive, sg)
                    .map_err(EngineError::Field)?;
                sg = prop.step_state(sg);
            }
            rec.sample(t + d.t_r(), k, Window::Drive, si.end)
                .map_err(EngineError::Field)?;
        }

        let (work, work_normalized) = work_from_integrals(&si, d, q, sched.spontaneous);
        let cycle_gain = if d.omega() > 0.0 {
            Some(
                1.0 + excess_gain_from_integrals(&si, d, q, sched.spontaneous)
                    .expect("omega > 0"),
            )
        } else {
            None
        };

        let mut rec = Recorder {
            series: &mut series,
            states: &mut states,
            q,
            d,
            spontaneous: sched.spontaneous,
            dead_samples: sched.sampling.samples_per_dead_segment,
            enabled: sampling_on,
        };
        let block_t0 = t + d.t_r();
        let (outcome, p_plus, end) = match eval {
            Evaluation::Stochastic(ref mut rng) => {
                let (o, p, e) = measure_block_stochastic(
                    si.end, q, r, sched.mode, rng, &mut rec, block_t0, k,
                )
                .map_err(EngineError::Field)?;
                (Some(o), p, e)
            }
            Evaluation::Averaged => {
                let (p, e) =
                    measure_block_averaged(si.end, q, r, sched.mode, &mut rec, block_t0, k)
                        .map_err(EngineError::Field)?;
                (None, p, e)
            }
        };

        records.push(CycleRecord {
            cycle_index: k,
            outcome,
            p_plus,
            stroke_end_state: si.end,
            end_state: end,
            work,
            work_normalized,
            cycle_gain,
        });
        s = end;
        t += sched.cycle_period();
    }

    Ok(TrajectoryResult { records, states, field: series })
}

/// Stroke propagator matched to a schedule's drive and sampling grid. One of
/// these can be shared across many trajectories of the same configuration;
/// building it is the expensive step (a matrix exponential).
pub fn prepare_propagator(q: &QubitConfig, sched: &CycleSchedule) -> DrivenPropagator {
    DrivenPropagator::new(q, &sched.drive, sched.sampling.samples_per_stroke)
}

/// One stochastic trajectory reusing a prepared propagator.
pub fn run_engine_prepared(
    q: &QubitConfig,
    sched: &CycleSchedule,
    prop: &DrivenPropagator,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryResult, EngineError> {
    run_engine_impl(q, sched, prop, Evaluation::Stochastic(rng))
}

/// One stochastic trajectory from an explicit generator. Use
/// [`trajectory_rng`] to build generators that are independent across
/// trajectory indices.
pub fn run_engine_rng(
    q: &QubitConfig,
    sched: &CycleSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryResult, EngineError> {
    let prop = prepare_propagator(q, sched);
    run_engine_impl(q, sched, &prop, Evaluation::Stochastic(rng))
}

/// One stochastic trajectory, deterministic in `seed`.
pub fn run_engine(
    q: &QubitConfig,
    sched: &CycleSchedule,
    seed: u64,
) -> Result<TrajectoryResult, EngineError> {
    run_engine_rng(q, sched, &mut trajectory_rng(seed, 0))
}

/// Exact ensemble average over measurement outcomes, reset branches, and
/// assignment errors; no sampling noise.
pub fn run_engine_averaged(
    q: &QubitConfig,
    sched: &CycleSchedule,
) -> Result<TrajectoryResult, EngineError> {
    let prop = prepare_propagator(q, sched);
    run_engine_impl(q, sched, &prop, Evaluation::Averaged)
}

/// Trajectories per accumulation batch. Partial sums are formed
/// sequentially inside each batch and merged in batch order, so ensemble
/// statistics are bit-identical for any degree of parallelism over batches.
pub const TRAJECTORY_BATCH: u64 = 256;

/// Accumulated per-cycle sums over trajectories.
#[derive(Clone, Copy, Debug, Default)]
pub struct CycleStats {
    pub n_plus: u64,
    pub n_minus: u64,
    pub sum_p_plus: f64,
    pub sum_work: f64,
    pub sum_work_norm: f64,
    pub sum_excess_gain: f64,
    pub n_gain: u64,
    pub sum_stroke_end: [f64; 3],
    pub sum_end: [f64; 3],
}

/// Accumulated sums for one series row.
#[derive(Clone, Copy, Debug, Default)]
pub struct SampleStats {
    pub sum_state: [f64; 3],
    pub sum_b_out: Complex<f64>,
    pub sum_p_out: f64,
    pub sum_p_in: f64,
    pub sum_gain: f64,
    pub sum_p_excess: f64,
}

/// The fixed sample grid (identical across trajectories) plus per-row sums.
#[derive(Clone, Debug)]
pub struct SampleGrid {
    pub t: Vec<f64>,
    pub cycle_index: Vec<u32>,
    pub window: Vec<Window>,
    pub rows: Vec<SampleStats>,
}

/// Mergeable trajectory statistics.
#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub trajectories: u64,
    pub cycles: Vec<CycleStats>,
    pub grid: Option<SampleGrid>,
}

impl EnsembleStats {
    /// The zero accumulator batches are merged into.
    pub fn empty(n_cycles: u32) -> Self {
        let mut cycles = Vec::with_capacity(n_cycles as usize);
        cycles.resize(n_cycles as usize, CycleStats::default());
        EnsembleStats { trajectories: 0, cycles, grid: None }
    }

    pub(crate) fn add_trajectory(&mut self, tr: &TrajectoryResult) {
        self.trajectories += 1;
        for (stats, rec) in self.cycles.iter_mut().zip(&tr.records) {
            match rec.outcome {
                Some(Outcome::PlusX) => stats.n_plus += 1,
                Some(Outcome::MinusX) => stats.n_minus += 1,
                None => {}
            }
            stats.sum_p_plus += rec.p_plus;
            stats.sum_work += rec.work;
            stats.sum_work_norm += rec.work_normalized;
            if let Some(g) = rec.cycle_gain {
                stats.sum_excess_gain += g - 1.0;
                stats.n_gain += 1;
            }
            let se = rec.stroke_end_state;
            stats.sum_stroke_end[0] += se.x();
            stats.sum_stroke_end[1] += se.y();
            stats.sum_stroke_end[2] += se.z();
            let e = rec.end_state;
            stats.sum_end[0] += e.x();
            stats.sum_end[1] += e.y();
            stats.sum_end[2] += e.z();
        }
        if tr.field.is_empty() {
            return;
        }
        let grid = self.grid.get_or_insert_with(|| SampleGrid {
            t: tr.field.t.clone(),
            cycle_index: tr.field.cycle_index.clone(),
            window: tr.field.window.clone(),
            rows: alloc::vec![SampleStats::default(); tr.field.len()],
        });
        debug_assert_eq!(grid.t.len(), tr.field.len());
        for i in 0..tr.field.len() {
            let row = &mut grid.rows[i];
            let s = tr.states[i].state;
            row.sum_state[0] += s.x();
            row.sum_state[1] += s.y();
            row.sum_state[2] += s.z();
            row.sum_b_out += tr.field.b_out[i];
            row.sum_p_out += tr.field.p_out_norm[i];
            row.sum_p_in += tr.field.p_in_norm[i];
            if let Some(g) = tr.field.gain[i] {
                row.sum_gain += g;
            }
            row.sum_p_excess += tr.field.p_excess[i];
        }
    }

    /// Element-wise accumulation. Callers must merge batches in ascending
    /// batch order to keep results bit-stable.
    pub fn merge(&mut self, other: &EnsembleStats) {
        assert_eq!(self.cycles.len(), other.cycles.len());
        self.trajectories += other.trajectories;
        for (a, b) in self.cycles.iter_mut().zip(&other.cycles) {
            a.n_plus += b.n_plus;
            a.n_minus += b.n_minus;
            a.sum_p_plus += b.sum_p_plus;
            a.sum_work += b.sum_work;
            a.sum_work_norm += b.sum_work_norm;
            a.sum_excess_gain += b.sum_excess_gain;
            a.n_gain += b.n_gain;
            for i in 0..3 {
                a.sum_stroke_end[i] += b.sum_stroke_end[i];
                a.sum_end[i] += b.sum_end[i];
            }
        }
        match (&mut self.grid, &other.grid) {
            (Some(g), Some(h)) => {
                assert_eq!(g.t.len(), h.t.len());
                for (a, b) in g.rows.iter_mut().zip(&h.rows) {
                    for i in 0..3 {
                        a.sum_state[i] += b.sum_state[i];
                    }
                    a.sum_b_out += b.sum_b_out;
                    a.sum_p_out += b.sum_p_out;
                    a.sum_p_in += b.sum_p_in;
                    a.sum_gain += b.sum_gain;
                    a.sum_p_excess += b.sum_p_excess;
                }
            }
            (None, Some(h)) => self.grid = Some(h.clone()),
            _ => {}
        }
    }

    pub fn mean_stroke_end(&self, cycle: usize) -> [f64; 3] {
        let n = self.trajectories as f64;
        let s = &self.cycles[cycle].sum_stroke_end;
        [s[0] / n, s[1] / n, s[2] / n]
    }

    pub fn mean_end(&self, cycle: usize) -> [f64; 3] {
        let n = self.trajectories as f64;
        let s = &self.cycles[cycle].sum_end;
        [s[0] / n, s[1] / n, s[2] / n]
    }

    pub fn mean_work_norm(&self, cycle: usize) -> f64 {
        self.cycles[cycle].sum_work_norm / self.trajectories as f64
    }

    pub fn mean_work(&self, cycle: usize) -> f64 {
        self.cycles[cycle].sum_work / self.trajectories as f64
    }

    pub fn mean_excess_gain(&self, cycle: usize) -> Option<f64> {
        let c = &self.cycles[cycle];
        if c.n_gain == 0 {
            return None;
        }
        Some(c.sum_excess_gain / c.n_gain as f64)
    }

    pub fn frac_plus(&self, cycle: usize) -> f64 {
        let c = &self.cycles[cycle];
        let n = c.n_plus + c.n_minus;
        if n == 0 {
            return f64::NAN;
        }
        c.n_plus as f64 / n as f64
    }

    pub fn mean_state_at(&self, row: usize) -> [f64; 3] {
        let grid = self.grid.as_ref().expect("series sampling was enabled");
        let n = self.trajectories as f64;
        let s = &grid.rows[row].sum_state;
        [s[0] / n, s[1] / n, s[2] / n]
    }
}

/// Sequential partial sums over trajectories
/// [batch_index * TRAJECTORY_BATCH, ...) bounded by `n_total`.
pub fn simulate_batch(
    q: &QubitConfig,
    sched: &CycleSchedule,
    master_seed: u64,
    batch_index: u64,
    n_total: u64,
) -> Result<EnsembleStats, EngineError> {
    let start = batch_index * TRAJECTORY_BATCH;
    let end = n_total.min(start + TRAJECTORY_BATCH);
    let mut stats = EnsembleStats::empty(sched.n_cycles);
    let prop = prepare_propagator(q, sched);
    for idx in start..end {
        let mut rng = trajectory_rng(master_seed, idx);
        let tr = run_engine_prepared(q, sched, &prop, &mut rng)?;
        stats.add_trajectory(&tr);
    }
    Ok(stats)
}

/// All trajectory statistics, batches merged in order on one thread.
pub fn run_engine_ensemble(
    q: &QubitConfig,
    sched: &CycleSchedule,
    master_seed: u64,
    n_trajectories: u64,
) -> Result<EnsembleStats, EngineError> {
    let mut stats = EnsembleStats::empty(sched.n_cycles);
    let n_batches = n_trajectories.div_ceil(TRAJECTORY_BATCH);
    for b in 0..n_batches {
        let part = simulate_batch(q, sched, master_seed, b, n_trajectories)?;
        stats.merge(&part);
    }
    Ok(stats)
}
