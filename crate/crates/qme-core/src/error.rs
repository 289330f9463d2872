//! Error types shared across the crate.

use thiserror::Error;

/// Rejected parameter set.
#[derive(Error, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("1/t2 must be at least 1/(2 t1); pure dephasing cannot be negative")]
    CoherenceBound,
    #[error("gamma_c exceeds the total decay rate 1/t1")]
    CouplingExceedsDecay,
    #[error("p_th must lie in [0, 0.5)")]
    ThermalOccupation,
    #[error("{0} must lie in [0, 1)")]
    UnitInterval(&'static str),
    #[error("omega must be non-negative")]
    NegativeDrive,
    #[error("t_int must not exceed t_meas")]
    ReadoutWindow,
    #[error("assignment_error must lie in [0, 0.5)")]
    AssignmentError,
    #[error("n_cycles must be at least 1")]
    NoCycles,
    #[error("p_excited must lie in [0, 1]")]
    ExcitationProbability,
    #[error("too many fluctuators: 2^K configurations would not fit")]
    EnsembleTooLarge,
}

/// Invalid state-level operation.
#[derive(Error, Debug, Clone, Copy, PartialEq)]
pub enum BlochError {
    #[error("Bloch vector norm {0} exceeds 1")]
    NormExceeded(f64),
    #[error("rotation axis must be a unit vector (|axis| - 1 = {0:e})")]
    NonUnitAxis(f64),
}

/// Failure while running the engine protocol.
#[derive(Error, Debug, Clone, Copy, PartialEq)]
pub enum EngineError {
    #[error("active reset did not report ground within {max_iter} iterations")]
    ResetFailed { max_iter: u32 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Field-quantity evaluation failure.
#[derive(Error, Debug, Clone, Copy, PartialEq)]
pub enum FieldError {
    #[error("gain is undefined without a drive (omega = 0)")]
    UndefinedGain,
    #[error("input amplitude is undefined: omega > 0 with gamma_c = 0")]
    MissingCoupling,
    #[error("cycle {0} is not present in the series")]
    CycleOutOfRange(u32),
    #[error("cycle {0} has an incomplete drive window")]
    IncompleteWindow(u32),
    #[error("measurement chain gain must be at least 1, got {0}")]
    ChainGainBelowUnity(f64),
}

/// Least-squares setup failure. Non-convergence is not an error; it is
/// reported through the result's `converged` flag.
#[derive(Error, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitError {
    #[error("need at least {needed} data points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("residual count {m} does not exceed parameter count {n}")]
    Underdetermined { m: usize, n: usize },
    #[error("group ids must be consecutive from 0; missing group {0}")]
    MissingGroup(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
