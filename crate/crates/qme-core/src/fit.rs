//! Damped Gauss-Newton least squares.
//!
//! A small dense solver sized for the calibration problems in this crate:
//! a handful of parameters, a few hundred residuals. The loop is classic
//! Levenberg-Marquardt with a multiplicative trust parameter on the normal
//! equations, a central-difference Jacobian, and a hand-rolled Cholesky
//! factorization for the (tiny) linear solves. Pulling in a full optimization
//! crate would buy nothing here and would cost no_std compatibility.
//!
//! Non-convergence is not an error. The outcome carries an honest flag and a
//! condition estimate; callers decide what to do with a fit that stalled or
//! sits on a degenerate ridge.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::FitError;
use crate::num;

/// Knobs for [`least_squares`]. The defaults suit smooth models with
/// parameters scaled to order one (fit in log space when they are not).
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Outer iteration budget.
    pub max_iter: usize,
    /// Declare convergence when the accepted step satisfies
    /// |dp_j| <= rel_step_tol * (1 + |p_j|) for every parameter.
    pub rel_step_tol: f64,
    /// Starting value of the damping parameter lambda.
    pub initial_damping: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 200,
            rel_step_tol: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

/// Result of a [`least_squares`] run.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameter estimates at the best point found.
    pub params: Vec<f64>,
    /// One-sigma parameter uncertainties from the linearized covariance
    /// (J^T J)^-1 * rss / (m - n). Infinite when the Jacobian is singular
    /// at the solution, zero when there are no degrees of freedom (m = n).
    pub sigma: Vec<f64>,
    /// Euclidean norm of the residual vector at the solution.
    pub residual_norm: f64,
    /// True when the relative step-size criterion was met. A false flag means
    /// the loop stalled or ran out of iterations; the parameters are still
    /// the best point visited.
    pub converged: bool,
    /// 1-norm condition estimate of J^T J at the solution. Large values
    /// flag directions the data does not constrain.
    pub condition: f64,
    /// Parameter correlation matrix (n x n, row-major, unit diagonal) from
    /// the same linearized covariance as `sigma`. Entries near +-1 expose
    /// parameter pairs the data only constrains jointly. All NaN when the
    /// Jacobian is singular at the solution.
    pub correlation: Vec<f64>,
    /// Outer iterations consumed.
    pub iterations: usize,
}

/// Cholesky-factorize the symmetric positive-definite matrix `a` (row-major,
/// n x n) and solve `a x = b`. Returns `None` when a pivot is not positive,
/// which is how a singular or indefinite system announces itself.
fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = num::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    Some(x)
}

fn norm1(a: &[f64], n: usize) -> f64 {
    let mut best = 0.0_f64;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += a[i * n + j].abs();
        }
        best = best.max(col);
    }
    best
}

fn rss_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Fill `jac` (m x n, row-major) with the central-difference Jacobian of the
/// residual map at `p`. Steps are relative with an absolute floor so
/// parameters passing through zero still get a sensible stencil.
fn jacobian<F>(f: &mut F, p: &[f64], m: usize, jac: &mut [f64])
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = p.len();
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    let mut pt = p.to_vec();
    for j in 0..n {
        let h = 1e-6 * p[j].abs().max(1e-8);
        pt[j] = p[j] + h;
        f(&pt, &mut rp);
        pt[j] = p[j] - h;
        f(&pt, &mut rm);
        pt[j] = p[j];
        let inv = 1.0 / (2.0 * h);
        for t in 0..m {
            jac[t * n + j] = (rp[t] - rm[t]) * inv;
        }
    }
}

/// Minimize the sum of squared residuals of `f` starting from `p0`.
///
/// `f(p, r)` must write exactly `m` residuals into `r` for any parameter
/// vector it is handed; `m` is fixed for the life of the fit. Requires
/// `m >= n`; uncertainties need `m > n` and are reported as zero otherwise.
pub fn least_squares<F>(
    mut f: F,
    m: usize,
    p0: &[f64],
    opts: &FitOptions,
) -> Result<FitOutcome, FitError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = p0.len();
    if n == 0 || m < n {
        return Err(FitError::Underdetermined { m, n });
    }

    let mut p = p0.to_vec();
    let mut r = vec![0.0; m];
    f(&p, &mut r);
    let mut rss = rss_of(&r);

    let mut jac = vec![0.0; m * n];
    let mut jtj = vec![0.0; n * n];
    let mut jtr = vec![0.0; n];
    let mut trial_r = vec![0.0; m];

    let mut lambda = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        jacobian(&mut f, &p, m, &mut jac);
        for a in jtj.iter_mut() {
            *a = 0.0;
        }
        for b in jtr.iter_mut() {
            *b = 0.0;
        }
        for t in 0..m {
            let row = &jac[t * n..(t + 1) * n];
            for i in 0..n {
                jtr[i] -= row[i] * r[t];
                for j in 0..=i {
                    jtj[i * n + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                jtj[i * n + j] = jtj[j * n + i];
            }
        }

        // Inner damping loop: escalate lambda until a step lowers the rss
        // or the damping budget is exhausted.
        let mut accepted = false;
        for attempt in 0..40 {
            let mut a = jtj.clone();
            for d in 0..n {
                // Marquardt scaling keeps the damping meaningful when the
                // columns of J have wildly different magnitudes.
                a[d * n + d] += lambda * jtj[d * n + d].max(1e-300);
            }
            if let Some(step) = solve_spd(&a, &jtr, n) {
                let rel = step
                    .iter()
                    .zip(&p)
                    .map(|(s, pi)| s.abs() / (1.0 + pi.abs()))
                    .fold(0.0_f64, f64::max);
                if attempt == 0 && rel < opts.rel_step_tol {
                    // The proposal at the current (small, post-acceptance)
                    // damping is already below the step tolerance: the
                    // iterate is stationary whether or not the step would
                    // shave another ulp off the rss.
                    converged = true;
                    break;
                }
                let trial: Vec<f64> = p.iter().zip(&step).map(|(pi, si)| pi + si).collect();
                f(&trial, &mut trial_r);
                let trial_rss = rss_of(&trial_r);
                if trial_rss.is_finite() && trial_rss < rss {
                    p = trial;
                    r.copy_from_slice(&trial_r);
                    rss = trial_rss;
                    lambda = (lambda / 3.0).max(1e-14);
                    accepted = true;
                    if rel < opts.rel_step_tol {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }

        if !accepted || converged || rss == 0.0 {
            // A zero-residual point is exact; call it converged even if the
            // step that landed there was large.
            converged = converged || rss == 0.0;
            break;
        }
    }

    // Curvature at the solution for the uncertainty and condition report.
    jacobian(&mut f, &p, m, &mut jac);
    for a in jtj.iter_mut() {
        *a = 0.0;
    }
    for t in 0..m {
        let row = &jac[t * n..(t + 1) * n];
        for i in 0..n {
            for j in 0..=i {
                jtj[i * n + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            jtj[i * n + j] = jtj[j * n + i];
        }
    }

    let mut sigma = vec![f64::INFINITY; n];
    let mut condition = f64::INFINITY;
    let mut inv = vec![0.0; n * n];
    let mut invertible = true;
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        match solve_spd(&jtj, &e, n) {
            Some(col) => {
                for i in 0..n {
                    inv[i * n + j] = col[i];
                }
            }
            None => {
                invertible = false;
                break;
            }
        }
    }
    let mut correlation = vec![f64::NAN; n * n];
    if invertible {
        condition = norm1(&jtj, n) * norm1(&inv, n);
        let dof = m - n;
        let scale = if dof > 0 { rss / dof as f64 } else { 0.0 };
        for j in 0..n {
            sigma[j] = num::sqrt((inv[j * n + j] * scale).max(0.0));
        }
        for i in 0..n {
            for j in 0..n {
                let denom = num::sqrt((inv[i * n + i] * inv[j * n + j]).max(0.0));
                correlation[i * n + j] = if denom > 0.0 {
                    (inv[i * n + j] / denom).clamp(-1.0, 1.0)
                } else if i == j {
                    1.0
                } else {
                    0.0
                };
            }
        }
    }

    Ok(FitOutcome {
        params: p,
        sigma,
        residual_norm: num::sqrt(rss),
        converged,
        condition,
        correlation,
        iterations,
    })
}

/// Run [`least_squares`] from every start and keep the best outcome:
/// converged beats not converged, then lower residual norm wins.
pub fn multi_start<F>(
    f: &mut F,
    m: usize,
    starts: &[Vec<f64>],
    opts: &FitOptions,
) -> Result<FitOutcome, FitError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut best: Option<FitOutcome> = None;
    for p0 in starts {
        let out = least_squares(&mut *f, m, p0, opts)?;
        let better = match &best {
            None => true,
            Some(b) => {
                (out.converged, -out.residual_norm) > (b.converged, -b.residual_norm)
            }
        };
        if better {
            best = Some(out);
        }
    }
    best.ok_or(FitError::TooFewPoints { needed: 1, got: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(p: &[f64], r: &mut [f64]) {
        // Linear model a + b t through noiseless data; exact minimum at
        // (1.5, -0.25) with zero residual.
        let ts = [0.0, 1.0, 2.0, 3.0, 4.0];
        for (i, &t) in ts.iter().enumerate() {
            r[i] = p[0] + p[1] * t - (1.5 - 0.25 * t);
        }
    }

    #[test]
    fn recovers_a_linear_model_exactly() {
        let out = least_squares(quadratic, 5, &[0.0, 0.0], &FitOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 1.5).abs() < 1e-9);
        assert!((out.params[1] + 0.25).abs() < 1e-9);
        assert!(out.residual_norm < 1e-9);
        // Noiseless data: the covariance scale rss/(m-n) collapses.
        assert!(out.sigma[0] < 1e-9);
        assert!(out.condition.is_finite());
    }

    #[test]
    fn rosenbrock_valley_converges_from_a_poor_start() {
        // Classic bent valley, residual form r = (1 - x, 10 (y - x^2)).
        // m = n here, so sigma degenerates to zero by the dof rule.
        let f = |p: &[f64], r: &mut [f64]| {
            r[0] = 1.0 - p[0];
            r[1] = 10.0 * (p[1] - p[0] * p[0]);
        };
        let out = least_squares(f, 2, &[-1.2, 1.0], &FitOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 1.0).abs() < 1e-8);
        assert!((out.params[1] - 1.0).abs() < 1e-8);
        assert_eq!(out.sigma, alloc::vec![0.0, 0.0]);
    }

    #[test]
    fn exponential_decay_with_noise_reports_sane_uncertainties() {
        // y = 2 exp(-0.5 t) plus a fixed deterministic perturbation; the
        // recovered rate must sit within a few sigma of the truth.
        let ts: Vec<f64> = (0..40).map(|i| 0.1 * i as f64).collect();
        let wobble = |i: usize| 0.01 * num::sin(2.7 * i as f64);
        let ys: Vec<f64> = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| 2.0 * num::exp(-0.5 * t) + wobble(i))
            .collect();
        let f = |p: &[f64], r: &mut [f64]| {
            for i in 0..ts.len() {
                r[i] = p[0] * num::exp(-p[1] * ts[i]) - ys[i];
            }
        };
        let out = least_squares(f, ts.len(), &[1.0, 1.0], &FitOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 2.0).abs() < 4.0 * out.sigma[0].max(1e-3));
        assert!((out.params[1] - 0.5).abs() < 4.0 * out.sigma[1].max(1e-3));
        assert!(out.sigma[1] > 0.0 && out.sigma[1] < 0.05);
    }

    #[test]
    fn a_degenerate_direction_shows_up_as_huge_condition_and_sigma() {
        // Model depends only on p0 + p1, so the difference is unconstrained.
        let f = |p: &[f64], r: &mut [f64]| {
            for (i, slot) in r.iter_mut().enumerate() {
                *slot = (p[0] + p[1]) * i as f64 - 3.0 * i as f64;
            }
        };
        let out = least_squares(f, 6, &[1.0, 1.0], &FitOptions::default()).unwrap();
        assert!((out.params[0] + out.params[1] - 3.0).abs() < 1e-6);
        assert!(out.condition > 1e12 || out.sigma[0] > 1e3);
    }

    #[test]
    fn underdetermined_systems_are_rejected() {
        let f = |_: &[f64], r: &mut [f64]| r.fill(0.0);
        let err = least_squares(f, 1, &[0.0, 0.0], &FitOptions::default()).unwrap_err();
        assert_eq!(err, FitError::Underdetermined { m: 1, n: 2 });
    }

    #[test]
    fn multi_start_escapes_a_local_basin() {
        // r = sin(p) + 0.3 p has a global minimum near p = -2.03 and a
        // shallow local one near 1.8; a start at 2.5 alone falls into the
        // wrong basin (checked by the single-start run below).
        let mut f = |p: &[f64], r: &mut [f64]| {
            r[0] = num::sin(p[0]) + 0.3 * p[0];
            r[1] = 0.0;
        };
        let single = least_squares(&mut f, 2, &[2.5], &FitOptions::default()).unwrap();
        assert!(single.params[0] > 0.0);
        let multi = multi_start(
            &mut f,
            2,
            &[alloc::vec![2.5], alloc::vec![-1.0]],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(multi.params[0] < 0.0);
        assert!(multi.residual_norm < single.residual_norm);
    }
}
