//! Resonator-side calibration models and fitters.
//!
//! Two experiments pin down the device rates used elsewhere in this crate:
//!
//! * **Reflection spectroscopy**: a weak probe reflects off the qubit port;
//!   the complex reflection coefficient versus probe detuning carries the
//!   emission rate `gamma_c` and the drive amplitude `omega`.
//! * **Measurement-induced dephasing**: the readout resonator's two pointer
//!   states Stark-shift and dephase the qubit; the shift and dephasing rate
//!   versus resonator drive detuning carry the dispersive shift `chi`, the
//!   resonator linewidth `kappa`, and the per-setting drive amplitude.
//!
//! Both fitters are damped Gauss-Newton runs (see [`crate::fit`]) in log
//! parameter space, multi-started across decades so a caller does not need a
//! good initial guess. Synthetic-data generators live here too, so round-trip
//! checks are self-contained.
//!
//! Data files for these fits are delimiter-separated text with a header row;
//! reflection columns are `detuning_hz, re_r, im_r` and Stark columns are
//! `detuning_hz, gamma_ac_hz, omega_ac_hz, group_id` (parsing lives in the
//! CLI crate; this module works on already-assembled points).

use alloc::vec::Vec;

use num_complex::Complex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ConfigError, FitError};
use crate::fit::{multi_start, FitOptions};
use crate::num;

/// Dispersive readout parameters: a resonator of linewidth `kappa` whose
/// frequency sits `chi` apart between the two qubit states, driven with
/// amplitude `epsilon` (units sqrt(photons/s)) at detuning `delta_omega`
/// from the bare resonator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersiveConfig {
    chi: f64,
    kappa: f64,
    epsilon: f64,
    delta_omega: f64,
}

impl DispersiveConfig {
    pub fn new(chi: f64, kappa: f64, epsilon: f64, delta_omega: f64) -> Result<Self, ConfigError> {
        if !(chi.is_finite() && kappa.is_finite() && epsilon.is_finite() && delta_omega.is_finite())
        {
            return Err(ConfigError::NonFinite("dispersive parameter"));
        }
        if kappa <= 0.0 {
            return Err(ConfigError::NonPositive("kappa"));
        }
        Ok(DispersiveConfig {
            chi,
            kappa,
            epsilon,
            delta_omega,
        })
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta_omega(&self) -> f64 {
        self.delta_omega
    }

    /// Same resonator, different drive amplitude.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self, ConfigError> {
        if !epsilon.is_finite() {
            return Err(ConfigError::NonFinite("epsilon"));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Same resonator, different drive detuning.
    pub fn at_detuning(mut self, delta_omega: f64) -> Result<Self, ConfigError> {
        if !delta_omega.is_finite() {
            return Err(ConfigError::NonFinite("delta_omega"));
        }
        self.delta_omega = delta_omega;
        Ok(self)
    }
}

/// One point of a reflection scan: probe detuning (rad/s) and the measured
/// complex reflection coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionPoint {
    pub delta: f64,
    pub r: Complex<f64>,
}

/// One point of a dephasing scan: resonator drive detuning (rad/s), the
/// measured dephasing rate and frequency shift (both rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarkPoint {
    pub delta_omega: f64,
    pub gamma_ac: f64,
    pub omega_ac: f64,
}

/// Complex reflection coefficient of a weakly driven qubit port.
///
/// `R(delta) = 1 - p_pol gamma_c gamma_1 (gamma_2 - i delta) /
/// [gamma_1 (gamma_2^2 + delta^2) + gamma_2 omega^2]`, with `p_pol` the
/// ground-minus-excited population difference. All rates are angular
/// (rad/s). The dip bottoms out at `1 - gamma_c/gamma_2` for a polarized
/// qubit under vanishing drive and closes toward 1 as the drive saturates
/// the transition or the probe moves off resonance.
pub fn reflection_model(
    delta: f64,
    gamma_c: f64,
    gamma_1: f64,
    gamma_2: f64,
    omega: f64,
    p_pol: f64,
) -> Complex<f64> {
    let denom = gamma_1 * (gamma_2 * gamma_2 + delta * delta) + gamma_2 * omega * omega;
    let scale = p_pol * gamma_c * gamma_1 / denom;
    Complex::new(1.0 - scale * gamma_2, scale * delta)
}

/// Steady-state resonator amplitudes for the two qubit poles:
/// `alpha_{-z} = epsilon / (kappa/2 - i (delta_omega - chi/2))` and the
/// `+ chi/2` partner. Returned as `(alpha_minus, alpha_plus)`.
pub fn pointer_states(c: &DispersiveConfig) -> (Complex<f64>, Complex<f64>) {
    let eps = Complex::new(c.epsilon, 0.0);
    let minus = eps / Complex::new(0.5 * c.kappa, -(c.delta_omega - 0.5 * c.chi));
    let plus = eps / Complex::new(0.5 * c.kappa, -(c.delta_omega + 0.5 * c.chi));
    (minus, plus)
}

fn stark_raw(chi: f64, kappa: f64, epsilon: f64, delta_omega: f64) -> (f64, f64) {
    let eps = Complex::new(epsilon, 0.0);
    let minus = eps / Complex::new(0.5 * kappa, -(delta_omega - 0.5 * chi));
    let plus = eps / Complex::new(0.5 * kappa, -(delta_omega + 0.5 * chi));
    let overlap = minus.conj() * plus;
    (chi * overlap.re, chi * overlap.im)
}

/// Qubit frequency shift and dephasing rate induced by the populated
/// resonator: `omega_ac = chi Re(conj(alpha_minus) alpha_plus)` and
/// `gamma_ac = chi Im(conj(alpha_minus) alpha_plus)`. The imaginary part
/// carries a factor `chi kappa / 2` from the pointer-state splitting, so
/// `gamma_ac >= 0` for every detuning and either sign of `chi`: measurement
/// can only destroy qubit coherence, never create it.
pub fn stark_and_dephasing(c: &DispersiveConfig) -> (f64, f64) {
    stark_raw(c.chi, c.kappa, c.epsilon, c.delta_omega)
}

/// Reflection-fit estimates: emission rate and drive amplitude with their
/// one-sigma uncertainties, plus the quality report from the minimizer.
/// `condition` is the 1-norm condition estimate of the normal equations in
/// log-parameter space; large values mean the scan did not constrain some
/// parameter combination.
#[derive(Debug, Clone)]
pub struct ReflectionFit {
    pub gamma_c: f64,
    pub omega: f64,
    pub sigma_gamma_c: f64,
    pub sigma_omega: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub condition: f64,
}

/// Fit `gamma_c` and `omega` to a reflection scan with `gamma_1`, `gamma_2`,
/// and the polarization held fixed. Real and imaginary residuals are stacked,
/// matching additive complex noise of equal weight per quadrature.
///
/// Needs at least 8 points spanning detunings up to several `gamma_2`;
/// the fit runs from a grid of starting guesses covering five decades of
/// drive amplitude, so no initial estimate is required. Non-convergence is
/// reported through the `converged` flag, never silently.
pub fn fit_reflection(
    points: &[ReflectionPoint],
    gamma_1: f64,
    gamma_2: f64,
    p_pol: f64,
) -> Result<ReflectionFit, FitError> {
    if points.len() < 8 {
        return Err(FitError::TooFewPoints {
            needed: 8,
            got: points.len(),
        });
    }
    if !gamma_1.is_finite() || gamma_1 <= 0.0 {
        return Err(FitError::Config(ConfigError::NonPositive("gamma_1")));
    }
    if !gamma_2.is_finite() || gamma_2 <= 0.0 {
        return Err(FitError::Config(ConfigError::NonPositive("gamma_2")));
    }
    if !(0.0..=1.0).contains(&p_pol) {
        return Err(FitError::Config(ConfigError::UnitInterval("p_pol")));
    }
    for p in points {
        if !(p.delta.is_finite() && p.r.re.is_finite() && p.r.im.is_finite()) {
            return Err(FitError::Config(ConfigError::NonFinite("reflection point")));
        }
    }

    let m = 2 * points.len();
    let mut resid = |x: &[f64], r: &mut [f64]| {
        let gc = num::exp(x[0]);
        let om = num::exp(x[1]);
        for (i, pt) in points.iter().enumerate() {
            let model = reflection_model(pt.delta, gc, gamma_1, gamma_2, om, p_pol);
            r[2 * i] = model.re - pt.r.re;
            r[2 * i + 1] = model.im - pt.r.im;
        }
    };

    // Seed gamma_c from the dip depth at the most-resonant point. Under a
    // strong drive the dip is shallower than gamma_c/gamma_2, so an
    // upscaled variant joins the start grid alongside the amplitude decades.
    let mut near = &points[0];
    for p in points.iter().skip(1) {
        if p.delta.abs() < near.delta.abs() {
            near = p;
        }
    }
    let dip = (1.0 - near.r.re).max(1e-6);
    let gc_est = (dip * gamma_2 / p_pol.max(1e-3)).max(1e-9 * gamma_2);
    let mut starts = Vec::new();
    for decade in 1..=6 {
        let om0 = num::powi(10.0, decade);
        for gc0 in [gc_est, 30.0 * gc_est] {
            starts.push(alloc::vec![num::ln(gc0), num::ln(om0)]);
        }
    }

    let out = multi_start(&mut resid, m, &starts, &FitOptions::default())?;
    let gamma_c = num::exp(out.params[0]);
    let omega = num::exp(out.params[1]);
    Ok(ReflectionFit {
        gamma_c,
        omega,
        // First-order transport of the log-space uncertainty.
        sigma_gamma_c: gamma_c * out.sigma[0],
        sigma_omega: omega * out.sigma[1],
        residual_norm: out.residual_norm,
        converged: out.converged,
        condition: out.condition,
    })
}

/// Stark-fit estimates: dispersive shift, resonator linewidth, and one drive
/// amplitude per group, each with a one-sigma uncertainty. `condition` is
/// the log-space normal-equation condition estimate; a single-amplitude scan
/// leaves a soft (chi, amplitude) trade-off that shows up here, in the
/// uncertainties, and in `correlation` rather than being hidden.
#[derive(Debug, Clone)]
pub struct StarkFit {
    pub chi: f64,
    pub kappa: f64,
    pub amplitudes: Vec<f64>,
    pub sigma_chi: f64,
    pub sigma_kappa: f64,
    pub sigma_amplitudes: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub condition: f64,
    /// Correlation matrix of the fitted parameters in the order
    /// `[chi, kappa, amplitudes...]` (row-major), from the linearized
    /// covariance in log space. `correlation[0 * n + 2 + g]` near one means
    /// the scan cannot separate `chi` from group `g`'s amplitude.
    pub correlation: Vec<f64>,
}

impl StarkFit {
    /// Correlation between `chi` and group `g`'s fitted amplitude
    /// (row 0, column `2 + g` of the matrix).
    pub fn chi_amplitude_correlation(&self, g: usize) -> f64 {
        self.correlation[2 + g]
    }
}

/// Joint fit of `(chi, kappa)` plus one amplitude per group to
/// measurement-induced dephasing scans. Each group is one drive-amplitude
/// setting scanned over resonator detuning; all groups share the resonator
/// parameters. Residuals are relative, matching multiplicative rate noise.
///
/// Needs at least 8 points per group. Two or more amplitude groups pin the
/// amplitude calibration; a single group is accepted but its report will
/// show the weakly constrained direction.
pub fn fit_stark(groups: &[Vec<StarkPoint>]) -> Result<StarkFit, FitError> {
    if groups.is_empty() {
        return Err(FitError::TooFewPoints { needed: 8, got: 0 });
    }
    let mut m = 0;
    for g in groups {
        if g.len() < 8 {
            return Err(FitError::TooFewPoints {
                needed: 8,
                got: g.len(),
            });
        }
        for p in g {
            if !(p.delta_omega.is_finite() && p.gamma_ac.is_finite() && p.omega_ac.is_finite()) {
                return Err(FitError::Config(ConfigError::NonFinite("stark point")));
            }
        }
        m += 2 * g.len();
    }

    // Fixed per-group scales keep the relative residuals defined through
    // zero crossings of the shift without reweighting between iterations.
    let scales: Vec<(f64, f64)> = groups
        .iter()
        .map(|g| {
            let sw = g.iter().fold(0.0_f64, |a, p| a.max(p.omega_ac.abs()));
            let sg = g.iter().fold(0.0_f64, |a, p| a.max(p.gamma_ac.abs()));
            (sw.max(f64::MIN_POSITIVE), sg.max(f64::MIN_POSITIVE))
        })
        .collect();

    let n_groups = groups.len();
    let mut resid = |x: &[f64], r: &mut [f64]| {
        let chi = num::exp(x[0]);
        let kappa = num::exp(x[1]);
        let mut k = 0;
        for (g, group) in groups.iter().enumerate() {
            let eps = num::exp(x[2 + g]);
            let (sw, sg) = scales[g];
            for pt in group {
                let (w, gm) = stark_raw(chi, kappa, eps, pt.delta_omega);
                r[k] = (w - pt.omega_ac) / (pt.omega_ac.abs() + 1e-9 * sw);
                r[k + 1] = (gm - pt.gamma_ac) / (pt.gamma_ac.abs() + 1e-9 * sg);
                k += 2;
            }
        }
    };

    // Seed each amplitude from the strongest dephasing point of its group:
    // gamma_ac = chi^2 kappa eps^2 / (2 |D|^2) inverts to an eps estimate
    // once a trial (chi, kappa) is chosen.
    let mut starts = Vec::new();
    for (chi0, kappa0) in [(3e6, 1e7), (3e7, 1e8), (3e6, 1e8), (3e7, 1e7)] {
        let mut start = alloc::vec![num::ln(chi0), num::ln(kappa0)];
        for group in groups {
            let mut best = &group[0];
            for p in group.iter().skip(1) {
                if p.gamma_ac.abs() > best.gamma_ac.abs() {
                    best = p;
                }
            }
            let c = 0.25 * (kappa0 * kappa0 - chi0 * chi0) + best.delta_omega * best.delta_omega;
            let d2 = c * c + 0.25 * kappa0 * kappa0 * chi0 * chi0;
            let eps2 = (best.gamma_ac.abs() * d2 / (0.5 * chi0 * chi0 * kappa0)).max(1e-12);
            start.push(0.5 * num::ln(eps2));
        }
        starts.push(start);
    }

    let out = multi_start(&mut resid, m, &starts, &FitOptions::default())?;
    let chi = num::exp(out.params[0]);
    let kappa = num::exp(out.params[1]);
    let amplitudes: Vec<f64> = (0..n_groups).map(|g| num::exp(out.params[2 + g])).collect();
    let sigma_amplitudes: Vec<f64> = amplitudes
        .iter()
        .enumerate()
        .map(|(g, a)| a * out.sigma[2 + g])
        .collect();
    Ok(StarkFit {
        chi,
        kappa,
        sigma_chi: chi * out.sigma[0],
        sigma_kappa: kappa * out.sigma[1],
        amplitudes,
        sigma_amplitudes,
        residual_norm: out.residual_norm,
        converged: out.converged,
        condition: out.condition,
        correlation: out.correlation,
    })
}

/// One standard normal draw (Box-Muller on the crate's seeded generator).
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    num::sqrt(-2.0 * num::ln(u1)) * num::cos(core::f64::consts::TAU * u2)
}

/// Synthetic reflection scan: the model evaluated on `deltas` with additive
/// complex Gaussian noise of standard deviation `noise_sigma` per quadrature
/// (zero sigma gives noiseless data and draws nothing from `rng`).
pub fn synthetic_reflection(
    gamma_c: f64,
    gamma_1: f64,
    gamma_2: f64,
    omega: f64,
    p_pol: f64,
    deltas: &[f64],
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<ReflectionPoint> {
    deltas
        .iter()
        .map(|&delta| {
            let mut r = reflection_model(delta, gamma_c, gamma_1, gamma_2, omega, p_pol);
            if noise_sigma > 0.0 {
                r.re += noise_sigma * gaussian(rng);
                r.im += noise_sigma * gaussian(rng);
            }
            ReflectionPoint { delta, r }
        })
        .collect()
}

/// Synthetic dephasing scans, one group per amplitude in `epsilons`, each
/// scanned over `delta_omegas`. `relative_noise` multiplies both rates by
/// independent `1 + sigma * N(0,1)` factors (zero draws nothing).
pub fn synthetic_stark(
    chi: f64,
    kappa: f64,
    epsilons: &[f64],
    delta_omegas: &[f64],
    relative_noise: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<StarkPoint>> {
    epsilons
        .iter()
        .map(|&eps| {
            delta_omegas
                .iter()
                .map(|&dw| {
                    let (mut w, mut g) = stark_raw(chi, kappa, eps, dw);
                    if relative_noise > 0.0 {
                        w *= 1.0 + relative_noise * gaussian(rng);
                        g *= 1.0 + relative_noise * gaussian(rng);
                    }
                    StarkPoint {
                        delta_omega: dw,
                        gamma_ac: g,
                        omega_ac: w,
                    }
                })
                .collect()
        })
        .collect()
}
