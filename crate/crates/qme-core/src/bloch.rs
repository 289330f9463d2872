//! Qubit state and its driven-dissipative evolution.
//!
//! State is the Bloch vector (x, y, z) = (<sx>, <sy>, <sz>) with z = +1 the
//! excited state. The drive Hamiltonian is
//!
//!   H = (hbar/2) * [ delta * sz + omega * (cos(phi) * sy - sin(phi) * sx) ]
//!
//! whose sign convention is pinned by the resonant case: from |+x> at phi = 0
//! the state evolves as x(t) = cos(omega t), z(t) = -sin(omega t), i.e. the
//! drive rotates the vector about +y by the right-hand rule. Decay channels
//! are emission at (1 - p_th)/t1, absorption at p_th/t1, and pure dephasing at
//! 1/t2 - 1/(2 t1).
//!
//! A constant-coefficient stroke is propagated by the exact matrix exponential
//! of the affine generator rather than a stepper. [`DrivenPropagator`]
//! additionally exponentiates a moment-augmented generator that carries the
//! running integrals of x, y, z and of x^2 + y^2 through the stroke, so cycle
//! work and gain integrals come out propagator-exact instead of
//! quadrature-limited.

use crate::error::{BlochError, ConfigError};
use crate::linalg::SqMat;
use crate::num;
use num_complex::Complex;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

const TAU: f64 = core::f64::consts::TAU;

/// Slack allowed on the unit-ball invariant and on rotation-axis norms.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochState {
    x: f64,
    y: f64,
    z: f64,
}

impl BlochState {
    /// Ground state |-z>.
    pub const GROUND: Self = BlochState { x: 0.0, y: 0.0, z: -1.0 };
    /// Excited state |+z>.
    pub const EXCITED: Self = BlochState { x: 0.0, y: 0.0, z: 1.0 };
    /// |+x>, the state the work stroke starts from.
    pub const PLUS_X: Self = BlochState { x: 1.0, y: 0.0, z: 0.0 };
    /// |-x>.
    pub const MINUS_X: Self = BlochState { x: -1.0, y: 0.0, z: 0.0 };
    /// Fully mixed state.
    pub const MIXED: Self = BlochState { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, BlochError> {
        let norm = num::sqrt(x * x + y * y + z * z);
        if !(norm <= 1.0 + NORM_TOL) {
            return Err(BlochError::NormExceeded(norm));
        }
        Ok(BlochState { x, y, z })
    }

    /// Skips the ball check. For internal maps that preserve it by
    /// construction up to rounding.
    pub(crate) fn new_unchecked(x: f64, y: f64, z: f64) -> Self {
        debug_assert!(x * x + y * y + z * z <= (1.0 + 1e-9) * (1.0 + 1e-9));
        BlochState { x, y, z }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn norm(&self) -> f64 {
        num::sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
    }

    /// <sigma_-> = (x - i y) / 2 for sigma_- = |-z><+z|.
    pub fn sigma_minus(&self) -> Complex<f64> {
        Complex::new(self.x / 2.0, -self.y / 2.0)
    }

    pub fn expectation(&self, obs: Observable) -> Complex<f64> {
        match obs {
            Observable::SigmaX => Complex::new(self.x, 0.0),
            Observable::SigmaY => Complex::new(self.y, 0.0),
            Observable::SigmaZ => Complex::new(self.z, 0.0),
            Observable::SigmaMinus => self.sigma_minus(),
        }
    }

    /// Convex mixture (1 - w) * self + w * other. Both inputs being inside
    /// the ball keeps the result inside.
    pub fn mix(&self, other: &BlochState, w: f64) -> BlochState {
        debug_assert!((0.0..=1.0).contains(&w));
        BlochState {
            x: (1.0 - w) * self.x + w * other.x,
            y: (1.0 - w) * self.y + w * other.y,
            z: (1.0 - w) * self.z + w * other.z,
        }
    }

    /// Uniform contraction toward the center, the depolarizing channel acting
    /// on the Bloch vector. Used for gate error.
    pub(crate) fn contracted(&self, factor: f64) -> BlochState {
        BlochState { x: self.x * factor, y: self.y * factor, z: self.z * factor }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    SigmaX,
    SigmaY,
    SigmaZ,
    SigmaMinus,
}

/// Device parameters. Rates are angular (rad/s); times are seconds and may be
/// `f64::INFINITY` to switch a channel off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitConfig {
    delta: f64,
    t1: f64,
    t2: f64,
    gamma_c: f64,
    p_th: f64,
    f_q: f64,
    gate_error: f64,
}

impl QubitConfig {
    /// Full invariant set: positive times, 1/t2 >= 1/(2 t1), line coupling
    /// bounded by the total decay rate, p_th in [0, 0.5).
    pub fn new(
        delta: f64,
        t1: f64,
        t2: f64,
        gamma_c: f64,
        p_th: f64,
        f_q: f64,
    ) -> Result<Self, ConfigError> {
        if !delta.is_finite() {
            return Err(ConfigError::NonFinite("delta"));
        }
        if !(t1 > 0.0) {
            return Err(ConfigError::NonPositive("t1"));
        }
        if !(t2 > 0.0) {
            return Err(ConfigError::NonPositive("t2"));
        }
        if 1.0 / t2 < 0.5 / t1 {
            return Err(ConfigError::CoherenceBound);
        }
        if !(gamma_c >= 0.0) || !gamma_c.is_finite() {
            return Err(ConfigError::NonFinite("gamma_c"));
        }
        if gamma_c > 1.0 / t1 {
            return Err(ConfigError::CouplingExceedsDecay);
        }
        if !(0.0..0.5).contains(&p_th) {
            return Err(ConfigError::ThermalOccupation);
        }
        if !(f_q > 0.0) || !f_q.is_finite() {
            return Err(ConfigError::NonPositive("f_q"));
        }
        Ok(QubitConfig { delta, t1, t2, gamma_c, p_th, f_q, gate_error: 0.0 })
    }

    /// Zero-dissipation limit that keeps a nonzero line coupling for the
    /// field formulas. This deliberately suspends the gamma_c <= 1/t1 check:
    /// closed-form benchmarks treat emission into the line as a probe that
    /// does not react back on the qubit.
    pub fn idealized(gamma_c: f64, f_q: f64) -> Result<Self, ConfigError> {
        if !(gamma_c >= 0.0) || !gamma_c.is_finite() {
            return Err(ConfigError::NonFinite("gamma_c"));
        }
        if !(f_q > 0.0) || !f_q.is_finite() {
            return Err(ConfigError::NonPositive("f_q"));
        }
        Ok(QubitConfig {
            delta: 0.0,
            t1: f64::INFINITY,
            t2: f64::INFINITY,
            gamma_c,
            p_th: 0.0,
            f_q,
            gate_error: 0.0,
        })
    }

    pub fn with_gate_error(mut self, gate_error: f64) -> Result<Self, ConfigError> {
        if !(0.0..1.0).contains(&gate_error) {
            return Err(ConfigError::UnitInterval("gate_error"));
        }
        self.gate_error = gate_error;
        Ok(self)
    }

    /// Same device with a different detuning. Used by ensemble expansion.
    pub fn with_delta(mut self, delta: f64) -> Result<Self, ConfigError> {
        if !delta.is_finite() {
            return Err(ConfigError::NonFinite("delta"));
        }
        self.delta = delta;
        Ok(self)
    }

    /// Same device with a different dephasing time. Used by ensemble
    /// expansion; re-checks the coherence bound.
    pub fn with_t2(mut self, t2: f64) -> Result<Self, ConfigError> {
        if !(t2 > 0.0) {
            return Err(ConfigError::NonPositive("t2"));
        }
        if 1.0 / t2 < 0.5 / self.t1 {
            return Err(ConfigError::CoherenceBound);
        }
        self.t2 = t2;
        Ok(self)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn t2(&self) -> f64 {
        self.t2
    }

    pub fn gamma_c(&self) -> f64 {
        self.gamma_c
    }

    pub fn p_th(&self) -> f64 {
        self.p_th
    }

    pub fn f_q(&self) -> f64 {
        self.f_q
    }

    pub fn gate_error(&self) -> f64 {
        self.gate_error
    }

    /// Total longitudinal rate 1/t1 (zero when t1 is infinite).
    pub fn gamma_1(&self) -> f64 {
        if self.t1.is_finite() {
            1.0 / self.t1
        } else {
            0.0
        }
    }

    /// Transverse rate 1/t2.
    pub fn gamma_2(&self) -> f64 {
        if self.t2.is_finite() {
            1.0 / self.t2
        } else {
            0.0
        }
    }

    pub fn gamma_down(&self) -> f64 {
        (1.0 - self.p_th) * self.gamma_1()
    }

    pub fn gamma_up(&self) -> f64 {
        self.p_th * self.gamma_1()
    }

    /// Thermal equilibrium polarization, -1 + 2 p_th.
    pub fn z_eq(&self) -> f64 {
        -1.0 + 2.0 * self.p_th
    }

    pub fn omega_q(&self) -> f64 {
        TAU * self.f_q
    }

    /// Photon energy hbar * omega_q in J.
    pub fn hbar_omega_q(&self) -> f64 {
        HBAR * TAU * self.f_q
    }
}

/// Work-stroke drive: Rabi rate omega (rad/s), phase phi, duration t_r (s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveConfig {
    omega: f64,
    phi: f64,
    t_r: f64,
}

impl DriveConfig {
    pub fn new(omega: f64, phi: f64, t_r: f64) -> Result<Self, ConfigError> {
        if !(omega >= 0.0) || !omega.is_finite() {
            return Err(ConfigError::NegativeDrive);
        }
        if !phi.is_finite() {
            return Err(ConfigError::NonFinite("phi"));
        }
        if !(t_r > 0.0) || !t_r.is_finite() {
            return Err(ConfigError::NonPositive("t_r"));
        }
        Ok(DriveConfig { omega, phi, t_r })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn t_r(&self) -> f64 {
        self.t_r
    }

    /// Rotation angle accumulated over the full stroke, theta = omega * t_r.
    pub fn theta(&self) -> f64 {
        self.omega * self.t_r
    }
}

/// Rotate by `angle` about a unit `axis`, right-hand rule (Rodrigues).
///
/// (1,0,0) about y by +pi/2 goes to (0,0,-1): a +pi/2 y-rotation takes |+x>
/// to the ground state.
pub fn rotate(s: BlochState, axis: [f64; 3], angle: f64) -> Result<BlochState, BlochError> {
    let a2 = axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2];
    let err = num::sqrt(a2) - 1.0;
    if err.abs() > NORM_TOL {
        return Err(BlochError::NonUnitAxis(err));
    }
    let (c, sn) = (num::cos(angle), num::sin(angle));
    let v = [s.x, s.y, s.z];
    let kxv = [
        axis[1] * v[2] - axis[2] * v[1],
        axis[2] * v[0] - axis[0] * v[2],
        axis[0] * v[1] - axis[1] * v[0],
    ];
    let kdv = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
    let w = 1.0 - c;
    Ok(BlochState::new_unchecked(
        v[0] * c + kxv[0] * sn + axis[0] * kdv * w,
        v[1] * c + kxv[1] * sn + axis[1] * kdv * w,
        v[2] * c + kxv[2] * sn + axis[2] * kdv * w,
    ))
}

/// Free (undriven) evolution for dt >= 0, exact closed form: the transverse
/// part precesses by delta * dt and decays as exp(-dt/t2); z relaxes toward
/// z_eq with time constant t1. Positive delta rotates x toward y.
pub fn evolve_free(s: BlochState, q: &QubitConfig, dt: f64) -> BlochState {
    assert!(dt >= 0.0, "negative evolution time");
    if dt == 0.0 {
        return s;
    }
    let e2 = num::exp(-dt * q.gamma_2());
    let e1 = num::exp(-dt * q.gamma_1());
    let (c, sn) = (num::cos(q.delta * dt), num::sin(q.delta * dt));
    let z_eq = q.z_eq();
    BlochState::new_unchecked(
        e2 * (s.x * c - s.y * sn),
        e2 * (s.x * sn + s.y * c),
        z_eq + (s.z - z_eq) * e1,
    )
}

/// Bloch generator of the driven stroke: dv/dt = m * v + c.
///
/// Built from the torque vector n = (omega sin phi, omega cos phi, delta)
/// via dv/dt = n x v plus the decay terms. The sign of the x component pairs
/// the rotation plane with the field phase: the drive with phase phi rotates
/// the amplifying axis (cos phi, -sin phi, 0), so the emitted-power integrand
/// cos(phi) x - sin(phi) y obeys d/dt <sz> bookkeeping at every phase, not
/// just at phi = 0.
pub(crate) fn driven_generator(q: &QubitConfig, d: &DriveConfig) -> (SqMat<3>, [f64; 3]) {
    let nx = d.omega * num::sin(d.phi);
    let ny = d.omega * num::cos(d.phi);
    let nz = q.delta;
    let g1 = q.gamma_1();
    let g2 = q.gamma_2();
    let m = SqMat([[-g2, -nz, ny], [nz, -g2, -nx], [-ny, nx, -g1]]);
    let c = [0.0, 0.0, q.z_eq() * g1];
    (m, c)
}

/// Driven evolution for an arbitrary dt >= 0 via the exact exponential of the
/// affine generator. For repeated strokes of fixed length prefer
/// [`DrivenPropagator`], which also carries the stroke integrals.
pub fn evolve_driven(s: BlochState, q: &QubitConfig, d: &DriveConfig, dt: f64) -> BlochState {
    assert!(dt >= 0.0, "negative evolution time");
    if dt == 0.0 {
        return s;
    }
    let e = affine_step(q, d, dt);
    apply_affine(&e, s)
}

/// exp of the 4x4 affine embedding [[m, c], [0, 0]] * dt.
fn affine_step(q: &QubitConfig, d: &DriveConfig, dt: f64) -> SqMat<4> {
    let (m, c) = driven_generator(q, d);
    let mut g = SqMat::<4>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            g.0[i][j] = m.0[i][j] * dt;
        }
        g.0[i][3] = c[i] * dt;
    }
    g.expm()
}

fn apply_affine(e: &SqMat<4>, s: BlochState) -> BlochState {
    let v = e.mul_vec(&[s.x, s.y, s.z, 1.0]);
    BlochState::new_unchecked(v[0], v[1], v[2])
}

/// End state and running integrals of one full drive stroke.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrokeIntegrals {
    pub end: BlochState,
    /// Integral of <sx> dt over the stroke, seconds.
    pub int_x: f64,
    pub int_y: f64,
    pub int_z: f64,
    /// Integral of (<sx>^2 + <sy>^2) dt; 4 * integral of |<sigma_->|^2.
    pub int_xx_plus_yy: f64,
}

/// Exact propagator of one drive stroke, cached for reuse across cycles and
/// trajectories.
///
/// Internally this exponentiates a 14-dimensional generator acting on
/// (v, 1, second moments v_i v_j, integral of v, integral of x^2 + y^2). The
/// quadratic monomials of an affine flow close linearly, so one matrix
/// exponential yields the stroke-end state together with the exact time
/// integrals entering work and gain. The only residual error is the
/// exponential's own rounding, ~1e-14.
#[derive(Clone, Debug)]
pub struct DrivenPropagator {
    aug: SqMat<14>,
    step: Option<SqMat<4>>,
    n_steps: u32,
    dt: f64,
    t_r: f64,
}

/// Augmented-vector index of the symmetric moment v_a v_b.
fn midx(a: usize, b: usize) -> usize {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    match (lo, hi) {
        (0, 0) => 4,
        (0, 1) => 5,
        (0, 2) => 6,
        (1, 1) => 7,
        (1, 2) => 8,
        (2, 2) => 9,
        _ => unreachable!(),
    }
}

impl DrivenPropagator {
    /// `grid_steps` is the number of equal sub-intervals for series sampling
    /// (a stroke emits grid_steps + 1 samples including both endpoints);
    /// pass 0 when no sampling grid is needed.
    pub fn new(q: &QubitConfig, d: &DriveConfig, grid_steps: u32) -> Self {
        let (m, c) = driven_generator(q, d);
        let t_r = d.t_r;

        let mut g = SqMat::<14>::zeros();
        for a in 0..3 {
            for b in 0..3 {
                g.0[a][b] = m.0[a][b];
            }
            g.0[a][3] = c[a];
        }
        // d(v_a v_b)/dt = sum_k m[a][k] v_k v_b + m[b][k] v_a v_k + c_a v_b + c_b v_a
        for a in 0..3 {
            for b in a..3 {
                let row = midx(a, b);
                for k in 0..3 {
                    g.0[row][midx(k, b)] += m.0[a][k];
                    g.0[row][midx(a, k)] += m.0[b][k];
                }
                g.0[row][b] += c[a];
                g.0[row][a] += c[b];
            }
        }
        for i in 0..3 {
            g.0[10 + i][i] = 1.0;
        }
        g.0[13][midx(0, 0)] = 1.0;
        g.0[13][midx(1, 1)] = 1.0;

        let aug = g.scaled(t_r).expm();
        let (step, dt) = if grid_steps > 0 {
            let dt = t_r / grid_steps as f64;
            (Some(affine_step(q, d, dt)), dt)
        } else {
            (None, 0.0)
        };
        DrivenPropagator { aug, step, n_steps: grid_steps, dt, t_r }
    }

    pub fn t_r(&self) -> f64 {
        self.t_r
    }

    pub fn grid_steps(&self) -> u32 {
        self.n_steps
    }

    pub fn grid_dt(&self) -> f64 {
        self.dt
    }

    /// Propagate through the whole stroke, returning the end state and the
    /// stroke integrals.
    pub fn stroke(&self, s: BlochState) -> StrokeIntegrals {
        let v = [
            s.x,
            s.y,
            s.z,
            1.0,
            s.x * s.x,
            s.x * s.y,
            s.x * s.z,
            s.y * s.y,
            s.y * s.z,
            s.z * s.z,
            0.0,
            0.0,
            0.0,
            0.0,
        ];
        let out = self.aug.mul_vec(&v);
        StrokeIntegrals {
            end: BlochState::new_unchecked(out[0], out[1], out[2]),
            int_x: out[10],
            int_y: out[11],
            int_z: out[12],
            int_xx_plus_yy: out[13],
        }
    }

    /// Advance one grid step. Panics if the propagator was built without a
    /// grid.
    pub fn step_state(&self, s: BlochState) -> BlochState {
        let step = self.step.as_ref().expect("propagator built with grid_steps = 0");
        apply_affine(step, s)
    }
}
