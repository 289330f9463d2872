//! Core model of a measurement-fueled single-qubit microwave amplifier.
//!
//! A driven transmon coupled to a transmission line adds a coherent component
//! to the field it scatters. Interleaving short Rabi strokes with projective
//! x-basis measurement and feedback keeps the qubit in the amplifying state,
//! so the device outputs more drive power than it absorbs, with the energy
//! supplied by the measurement backaction. This crate models that cycle:
//!
//! * [`bloch`]: Bloch-vector state, device parameters, and exact
//!   propagators for driven and free strokes, including propagator-exact
//!   time integrals for work and gain.
//! * [`field`]: input/output relations of the scattered field, power and
//!   gain series, quadrature variances, and the detection chain.
//! * [`cycle`]: the four-stroke engine (reset, drive, measure, feedback) in
//!   stochastic-trajectory and deterministic ensemble-averaged forms.
//! * [`oracle`]: closed-form benchmarks the simulation is tested against.
//! * [`ensemble`]: dephasing-defect mixtures over many engine runs and the
//!   recovery of defect occupation probabilities from averaged data.
//! * [`fit`]: a small damped least-squares fitter.
//! * [`calib`]: resonator-based device calibration models and fits.
//!
//! The crate is `no_std` (with `alloc`); all transcendentals go through
//! `libm` so results are bit-identical across platforms.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bloch;
pub mod calib;
pub mod cycle;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod fit;
mod linalg;
mod num;
pub mod oracle;

pub use bloch::{
    evolve_driven, evolve_free, rotate, BlochState, DriveConfig, DrivenPropagator, Observable,
    QubitConfig, StrokeIntegrals, HBAR,
};
pub use calib::{
    fit_reflection, fit_stark, pointer_states, reflection_model, stark_and_dephasing,
    synthetic_reflection, synthetic_stark, DispersiveConfig, ReflectionFit, ReflectionPoint,
    StarkFit, StarkPoint,
};
pub use cycle::{
    active_reset, initialize, initialize_averaged, prepare_propagator, run_engine,
    run_engine_averaged, run_engine_ensemble, run_engine_prepared, run_engine_rng,
    simulate_batch, trajectory_rng, CycleRecord, CycleSchedule, CycleStats, EnsembleStats, Mode,
    Outcome, ReadoutConfig, SampleGrid, SampleStats, SamplingConfig, TimedState,
    TrajectoryResult, TRAJECTORY_BATCH,
};
pub use ensemble::{
    ensemble_batch, fit_tls_probabilities, run_ensemble, run_ensemble_averaged,
    run_ensemble_stats, stats_to_mean, EnsembleMode, PreparedEnsemble, TlsDephasing,
    TlsEnsemble, TlsFit, TlsSpec, MAX_FLUCTUATORS,
};
pub use error::{BlochError, ConfigError, EngineError, FieldError, FitError};
pub use field::{
    detection_chain, excess_gain_from_integrals, gain, input_amplitude, output_amplitude,
    quadrature_variances, work_from_integrals, FieldTimeSeries, QuadratureStats, Spontaneous,
    Window,
};
pub use fit::{least_squares, multi_start, FitOptions, FitOutcome};
pub use num::{sinc, sinhc};
