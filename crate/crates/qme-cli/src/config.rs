//! Run configuration: flat TOML sections, every frequency in linear hertz
//! (the value one quotes "per 2 pi"), times in the unit their key name
//! carries. Loading converts to the core's angular frequencies and seconds
//! and validates through the core constructors, so a config that resolves
//! is a config that runs.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use qme_core::{
    CycleSchedule, DriveConfig, Mode, QubitConfig, ReadoutConfig, SamplingConfig, Spontaneous,
    TlsEnsemble, TlsSpec,
};

use crate::CliError;

/// Which protocol the feedback step follows in averaged runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Feedback,
    OpenLoop,
}

impl Protocol {
    pub fn as_mode(self) -> Mode {
        match self {
            Protocol::Feedback => Mode::Feedback,
            Protocol::OpenLoop => Mode::OpenLoop,
        }
    }
}

/// How a run is evaluated. `feedback` and `open_loop` sample trajectories
/// under that protocol; `averaged` computes the exact ensemble mean under
/// the protocol named in `[run] protocol`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum RunMode {
    Feedback,
    OpenLoop,
    Averaged,
}

impl RunMode {
    pub fn label(self) -> &'static str {
        match self {
            RunMode::Feedback => "feedback",
            RunMode::OpenLoop => "open_loop",
            RunMode::Averaged => "averaged",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpontaneousChoice {
    Keep,
    Drop,
}

impl SpontaneousChoice {
    fn as_core(self) -> Spontaneous {
        match self {
            SpontaneousChoice::Keep => Spontaneous::Keep,
            SpontaneousChoice::Drop => Spontaneous::Drop,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QubitSection {
    pub f_q_hz: f64,
    pub gamma_c_hz: f64,
    /// Energy relaxation time; omit for a relaxation-free qubit.
    #[serde(default)]
    pub t1_us: Option<f64>,
    /// Total dephasing time; omit for the relaxation-limited value 2*t1
    /// (or no dephasing at all when t1 is also absent).
    #[serde(default)]
    pub t2_us: Option<f64>,
    #[serde(default)]
    pub delta_hz: f64,
    #[serde(default)]
    pub p_th: f64,
    #[serde(default)]
    pub gate_error: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub omega_hz: f64,
    #[serde(default)]
    pub phi_rad: f64,
    pub t_r_us: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSection {
    pub t_meas_ns: f64,
    pub t_int_ns: f64,
    pub assignment_error: f64,
    pub reset_max_iter: u32,
}

impl Default for ReadoutSection {
    /// Instantaneous error-free readout.
    fn default() -> Self {
        ReadoutSection {
            t_meas_ns: 0.0,
            t_int_ns: 0.0,
            assignment_error: 0.0,
            reset_max_iter: 10,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: RunMode,
    pub protocol: Protocol,
    pub n_cycles: u32,
    pub trajectories: u64,
    pub seed: u64,
    pub samples_per_stroke: u32,
    pub samples_per_dead_segment: u32,
    pub spontaneous: SpontaneousChoice,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: RunMode::Averaged,
            protocol: Protocol::Feedback,
            n_cycles: 3,
            trajectories: 10_000,
            seed: 1,
            samples_per_stroke: 100,
            samples_per_dead_segment: 1,
            spontaneous: SpontaneousChoice::Keep,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TlsSection {
    pub freq_shift_hz: f64,
    pub t2_excited_us: f64,
    pub p_excited: f64,
}

/// Grid for the gain/work sweep: the cross product of drive amplitudes and
/// stroke lengths.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub omega_hz: Vec<f64>,
    pub t_r_us: Vec<f64>,
}

/// Grid for the open-loop decay map: stroke angles by cycle count.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    pub theta_rad: Vec<f64>,
    pub n_cycles: u32,
}

/// The on-disk config, echoed verbatim (after CLI overrides) into the run
/// manifest.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub qubit: QubitSection,
    pub drive: DriveSection,
    #[serde(default)]
    pub readout: ReadoutSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tls: Vec<TlsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSection>,
}

/// Core-typed view of a [`Config`], ready to run.
pub struct Resolved {
    pub qubit: QubitConfig,
    pub drive: DriveConfig,
    pub readout: ReadoutConfig,
    pub ensemble: TlsEnsemble,
    pub sampling: SamplingConfig,
    pub spontaneous: Spontaneous,
}

fn section_err(section: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("[{section}] {e}"))
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let qs = &self.qubit;
        let gamma_c = TAU * qs.gamma_c_hz;
        let delta = TAU * qs.delta_hz;
        let qubit = match qs.t1_us {
            Some(t1_us) => {
                let t1 = t1_us * 1e-6;
                let t2 = qs.t2_us.map_or(2.0 * t1, |us| us * 1e-6);
                QubitConfig::new(delta, t1, t2, gamma_c, qs.p_th, qs.f_q_hz)
                    .map_err(|e| section_err("qubit", e))?
            }
            None => {
                if qs.p_th != 0.0 {
                    return Err(CliError::Config(
                        "[qubit] p_th > 0 requires a finite t1_us".into(),
                    ));
                }
                let q = QubitConfig::idealized(gamma_c, qs.f_q_hz)
                    .and_then(|q| q.with_delta(delta))
                    .map_err(|e| section_err("qubit", e))?;
                match qs.t2_us {
                    Some(us) => q.with_t2(us * 1e-6).map_err(|e| section_err("qubit", e))?,
                    None => q,
                }
            }
        };
        let qubit = qubit
            .with_gate_error(qs.gate_error)
            .map_err(|e| section_err("qubit", e))?;

        let drive = DriveConfig::new(
            TAU * self.drive.omega_hz,
            self.drive.phi_rad,
            self.drive.t_r_us * 1e-6,
        )
        .map_err(|e| section_err("drive", e))?;

        let rs = &self.readout;
        let readout = ReadoutConfig::new(
            rs.t_int_ns * 1e-9,
            rs.assignment_error,
            rs.t_meas_ns * 1e-9,
            rs.reset_max_iter,
        )
        .map_err(|e| section_err("readout", e))?;

        let mut tls = Vec::with_capacity(self.tls.len());
        for (i, t) in self.tls.iter().enumerate() {
            tls.push(
                TlsSpec::with_t2_excited(t.freq_shift_hz, t.t2_excited_us * 1e-6, t.p_excited)
                    .map_err(|e| section_err(&format!("tls #{}", i + 1), e))?,
            );
        }
        let ensemble = TlsEnsemble::new(qubit, tls).map_err(|e| section_err("tls", e))?;

        Ok(Resolved {
            qubit,
            drive,
            readout,
            ensemble,
            sampling: SamplingConfig {
                samples_per_stroke: self.run.samples_per_stroke,
                samples_per_dead_segment: self.run.samples_per_dead_segment,
            },
            spontaneous: self.run.spontaneous.as_core(),
        })
    }

    /// Schedule for a run under `mode`, with this config's drive replaced
    /// by `drive` (sweeps substitute grid points) and `protocol` already
    /// decided between the mode and the `[run]` section.
    pub fn schedule(
        &self,
        resolved: &Resolved,
        drive: DriveConfig,
        n_cycles: u32,
        protocol: Mode,
        sampling: SamplingConfig,
    ) -> Result<CycleSchedule, CliError> {
        Ok(CycleSchedule::new(n_cycles, protocol, drive, resolved.readout)
            .map_err(|e| section_err("run", e))?
            .with_sampling(sampling)
            .with_spontaneous(resolved.spontaneous))
    }

    /// The protocol a run in `mode` follows.
    pub fn protocol_for(&self, mode: RunMode) -> Mode {
        match mode {
            RunMode::Feedback => Mode::Feedback,
            RunMode::OpenLoop => Mode::OpenLoop,
            RunMode::Averaged => self.run.protocol.as_mode(),
        }
    }
}
