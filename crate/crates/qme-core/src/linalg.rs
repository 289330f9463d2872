//! Small fixed-size real matrices and a matrix exponential.
//!
//! Everything the propagators need fits in stack arrays: the Bloch generator
//! is 3x3, its affine embedding 4x4, and the moment-augmented generator that
//! carries running integrals is 14x14. No dimension is ever large enough to
//! justify a linear-algebra dependency in a no_std crate.

use crate::num;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SqMat<const N: usize>(pub [[f64; N]; N]);

impl<const N: usize> SqMat<N> {
    pub fn zeros() -> Self {
        SqMat([[0.0; N]; N])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = 1.0;
        }
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..N {
                    out.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64; N]) -> [f64; N] {
        let mut out = [0.0; N];
        for i in 0..N {
            let mut acc = 0.0;
            for j in 0..N {
                acc += self.0[i][j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Maximum absolute row sum (the induced infinity norm).
    pub fn inf_norm(&self) -> f64 {
        let mut best = 0.0;
        for row in self.0.iter() {
            let mut s = 0.0;
            for v in row.iter() {
                s += v.abs();
            }
            if s > best {
                best = s;
            }
        }
        best
    }

    /// exp(self) by scaling and squaring with a Taylor kernel.
    ///
    /// The argument is scaled until its norm is below 1, summed to full f64
    /// precision, then squared back up. Squaring count stays small for every
    /// generator this crate builds (stroke norms are a few rad at most), which
    /// keeps the rounding growth of repeated squaring well under 1e-13.
    pub fn expm(&self) -> Self {
        let norm = self.inf_norm();
        let s = if norm <= 1.0 {
            0
        } else {
            let lg = num::ln(norm) / core::f64::consts::LN_2;
            let mut s = lg as u32 + 1;
            if s > 64 {
                s = 64;
            }
            s
        };
        let a = self.scaled(1.0 / num::powi(2.0, s as i32));

        let mut sum = Self::identity();
        let mut term = Self::identity();
        for k in 1..=30u32 {
            term = term.mul(&a).scaled(1.0 / k as f64);
            let mut done = true;
            for i in 0..N {
                for j in 0..N {
                    sum.0[i][j] += term.0[i][j];
                }
            }
            let t = term.inf_norm();
            if t > 1e-20 * sum.inf_norm().max(1.0) {
                done = false;
            }
            if done {
                break;
            }
        }
        let mut out = sum;
        for _ in 0..s {
            out = out.mul(&out);
        }
        out
    }
}
