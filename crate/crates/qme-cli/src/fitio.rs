//! Fit data ingestion and report assembly. Data files are comma-separated
//! with a fixed header; frequencies and rates are linear hertz, converted
//! to angular units at the parse boundary. Malformed rows fail with their
//! line number and nothing is written until the whole fit succeeds.

use std::f64::consts::TAU;

use num_complex::Complex;

use qme_core::{fit_reflection, fit_stark, ReflectionPoint, StarkPoint};

use crate::csvout::{fmt, NamedOutput};
use crate::CliError;

pub const REFLECTION_HEADER: &str = "detuning_hz,re_r,im_r";
pub const STARK_HEADER: &str = "detuning_hz,gamma_ac_hz,omega_ac_hz,group_id";

fn data_err(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("line {line}: {msg}"))
}

/// Split one CSV row into exactly `n` trimmed fields.
fn fields(line: &str, n: usize, lineno: usize) -> Result<Vec<&str>, CliError> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(data_err(lineno, format!("expected {n} comma-separated fields, got {}", parts.len())));
    }
    Ok(parts)
}

fn parse_f64(tok: &str, lineno: usize) -> Result<f64, CliError> {
    tok.parse::<f64>().map_err(|_| data_err(lineno, format!("not a number: {tok:?}")))
}

/// Non-empty lines with their 1-based line numbers, header checked off.
fn body<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, &'a str)>, CliError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    match lines.next() {
        None => return Err(CliError::Data(format!("empty file; expected header {header:?}"))),
        Some((n, l)) if l != header => {
            return Err(data_err(n, format!("expected header {header:?}, got {l:?}")))
        }
        Some(_) => {}
    }
    let rows: Vec<_> = lines.collect();
    if rows.is_empty() {
        return Err(CliError::Data("no data rows after the header".into()));
    }
    Ok(rows)
}

pub fn parse_reflection(text: &str) -> Result<Vec<ReflectionPoint>, CliError> {
    let mut points = Vec::new();
    for (lineno, line) in body(text, REFLECTION_HEADER)? {
        let f = fields(line, 3, lineno)?;
        points.push(ReflectionPoint {
            delta: TAU * parse_f64(f[0], lineno)?,
            r: Complex::new(parse_f64(f[1], lineno)?, parse_f64(f[2], lineno)?),
        });
    }
    Ok(points)
}

/// Parses and groups by the trailing id column; ids must cover 0..=max.
pub fn parse_stark(text: &str) -> Result<Vec<Vec<StarkPoint>>, CliError> {
    let mut groups: Vec<Vec<StarkPoint>> = Vec::new();
    for (lineno, line) in body(text, STARK_HEADER)? {
        let f = fields(line, 4, lineno)?;
        let id: usize = f[3]
            .parse()
            .map_err(|_| data_err(lineno, format!("group_id must be a small integer, got {:?}", f[3])))?;
        if id >= 64 {
            return Err(data_err(lineno, format!("group_id {id} out of range")));
        }
        if groups.len() <= id {
            groups.resize_with(id + 1, Vec::new);
        }
        groups[id].push(StarkPoint {
            delta_omega: TAU * parse_f64(f[0], lineno)?,
            gamma_ac: TAU * parse_f64(f[1], lineno)?,
            omega_ac: TAU * parse_f64(f[2], lineno)?,
        });
    }
    if let Some(missing) = groups.iter().position(Vec::is_empty) {
        return Err(CliError::Data(format!(
            "group ids must be consecutive from 0; missing group {missing}"
        )));
    }
    Ok(groups)
}

fn result_csv(rows: &[(String, f64, f64)]) -> NamedOutput {
    let mut data = String::from("parameter,estimate,sigma\n");
    for (name, value, sigma) in rows {
        data.push_str(&format!("{name},{},{}\n", fmt(*value), fmt(*sigma)));
    }
    NamedOutput { name: "fit_result.csv".into(), data }
}

pub struct FixedReflectionParams {
    pub t1_us: f64,
    pub t2_us: f64,
    pub p_pol: f64,
}

pub fn run_reflection_fit(
    text: &str,
    fixed: &FixedReflectionParams,
) -> Result<Vec<NamedOutput>, CliError> {
    if !(fixed.t1_us > 0.0) || !(fixed.t2_us > 0.0) {
        return Err(CliError::Config("--t1-us and --t2-us must be positive".into()));
    }
    let points = parse_reflection(text)?;
    let gamma_1 = 1.0 / (fixed.t1_us * 1e-6);
    let gamma_2 = 1.0 / (fixed.t2_us * 1e-6);
    let fit = fit_reflection(&points, gamma_1, gamma_2, fixed.p_pol)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let report = format!(
        "reflection fit\n\
         points: {}\n\
         fixed: t1 = {} us, t2 = {} us, p_pol = {}\n\
         gamma_c / 2pi = {} Hz  (sigma {} Hz)\n\
         omega / 2pi = {} Hz  (sigma {} Hz)\n\
         emission lifetime 1 / gamma_c = {} us\n\
         residual norm: {}\n\
         converged: {}\n\
         condition: {}\n",
        points.len(),
        fixed.t1_us,
        fixed.t2_us,
        fixed.p_pol,
        fmt(fit.gamma_c / TAU),
        fmt(fit.sigma_gamma_c / TAU),
        fmt(fit.omega / TAU),
        fmt(fit.sigma_omega / TAU),
        fmt(1e6 / fit.gamma_c),
        fmt(fit.residual_norm),
        fit.converged,
        fmt(fit.condition),
    );
    let rows = vec![
        ("gamma_c_hz".to_string(), fit.gamma_c / TAU, fit.sigma_gamma_c / TAU),
        ("omega_hz".to_string(), fit.omega / TAU, fit.sigma_omega / TAU),
    ];
    Ok(vec![
        NamedOutput { name: "fit_report.txt".into(), data: report },
        result_csv(&rows),
    ])
}

pub fn run_stark_fit(text: &str) -> Result<Vec<NamedOutput>, CliError> {
    let groups = parse_stark(text)?;
    let fit = fit_stark(&groups).map_err(|e| CliError::Data(e.to_string()))?;

    let mut report = format!(
        "ac-Stark / dephasing fit\n\
         groups: {}  (points: {})\n\
         chi / 2pi = {} Hz  (sigma {} Hz)\n\
         kappa / 2pi = {} Hz  (sigma {} Hz)\n",
        groups.len(),
        groups.iter().map(Vec::len).sum::<usize>(),
        fmt(fit.chi / TAU),
        fmt(fit.sigma_chi / TAU),
        fmt(fit.kappa / TAU),
        fmt(fit.sigma_kappa / TAU),
    );
    let mut rows = vec![
        ("chi_hz".to_string(), fit.chi / TAU, fit.sigma_chi / TAU),
        ("kappa_hz".to_string(), fit.kappa / TAU, fit.sigma_kappa / TAU),
    ];
    let mut worst_corr: f64 = 0.0;
    for (g, (&eps, &sigma)) in fit.amplitudes.iter().zip(&fit.sigma_amplitudes).enumerate() {
        // On-resonance intracavity photon number implied by this amplitude.
        let nbar = eps * eps
            / (fit.kappa * fit.kappa / 4.0 + fit.chi * fit.chi / 4.0);
        let corr = fit.chi_amplitude_correlation(g);
        worst_corr = if corr.abs() > worst_corr.abs() { corr } else { worst_corr };
        report.push_str(&format!(
            "group {g}: epsilon / 2pi = {} Hz  (sigma {} Hz), nbar = {}, corr(chi, epsilon) = {}\n",
            fmt(eps / TAU),
            fmt(sigma / TAU),
            fmt(nbar),
            fmt(corr),
        ));
        rows.push((format!("epsilon_hz_{g}"), eps / TAU, sigma / TAU));
    }
    report.push_str(&format!(
        "residual norm: {}\nconverged: {}\ncondition: {}\n",
        fmt(fit.residual_norm),
        fit.converged,
        fmt(fit.condition),
    ));
    if worst_corr.abs() > 0.9 {
        report.push_str(
            "note: chi and a drive amplitude are strongly correlated; scans at a second \
             drive power would separate them\n",
        );
    }
    Ok(vec![
        NamedOutput { name: "fit_report.txt".into(), data: report },
        result_csv(&rows),
    ])
}
