//! Complex 2×2 algebra, qubit states and density-matrix predicates.
//!
//! Everything in the crate that acts on the qubit is a [`Mat2`]: propagators,
//! Kraus operators, rate matrices and density matrices. The type is `Copy`
//! and all operations are pure.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};


use crate::error::{Error, Result};
use crate::tol;

/// Complex scalar used throughout the crate.
pub type Complex = num_complex::Complex64;

pub(crate) const ZERO: Complex = Complex::new(0.0, 0.0);
pub(crate) const ONE: Complex = Complex::new(1.0, 0.0);
pub(crate) const I: Complex = Complex::new(0.0, 1.0);

/// A 2×2 complex matrix in the qubit energy eigenbasis `{|0⟩, |1⟩}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub a00: Complex,
    pub a01: Complex,
    pub a10: Complex,
    pub a11: Complex,
}

impl Mat2 {
    pub const fn new(a00: Complex, a01: Complex, a10: Complex, a11: Complex) -> Self {
        Mat2 { a00, a01, a10, a11 }
    }

    pub fn from_real(a00: f64, a01: f64, a10: f64, a11: f64) -> Self {
        Mat2::new(a00.into(), a01.into(), a10.into(), a11.into())
    }

    pub const fn zero() -> Self {
        Mat2::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub const fn identity() -> Self {
        Mat2::new(ONE, ZERO, ZERO, ONE)
    }

    pub fn diag(d0: Complex, d1: Complex) -> Self {
        Mat2::new(d0, ZERO, ZERO, d1)
    }

    pub fn pauli_x() -> Self {
        Mat2::from_real(0.0, 1.0, 1.0, 0.0)
    }

    pub fn pauli_y() -> Self {
        Mat2::new(ZERO, -I, I, ZERO)
    }

    pub fn pauli_z() -> Self {
        Mat2::from_real(1.0, 0.0, 0.0, -1.0)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Mat2::new(
            self.a00.conj(),
            self.a10.conj(),
            self.a01.conj(),
            self.a11.conj(),
        )
    }

    pub fn trace(&self) -> Complex {
        self.a00 + self.a11
    }

    pub fn det(&self) -> Complex {
        self.a00 * self.a11 - self.a01 * self.a10
    }

    pub fn scale(&self, s: Complex) -> Self {
        Mat2::new(self.a00 * s, self.a01 * s, self.a10 * s, self.a11 * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Mat2::new(self.a00 * s, self.a01 * s, self.a10 * s, self.a11 * s)
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        let inv = det.inv();
        Some(Mat2::new(
            self.a11 * inv,
            -self.a01 * inv,
            -self.a10 * inv,
            self.a00 * inv,
        ))
    }

    /// Matrix-vector product on a pair of amplitudes.
    pub fn apply(&self, v: (Complex, Complex)) -> (Complex, Complex) {
        (
            self.a00 * v.0 + self.a01 * v.1,
            self.a10 * v.0 + self.a11 * v.1,
        )
    }

    /// `self · rho · self†`.
    pub fn sandwich(&self, rho: &Mat2) -> Mat2 {
        *self * *rho * self.adjoint()
    }

    /// Largest entry-wise modulus.
    pub fn max_abs(&self) -> f64 {
        self.a00
            .norm()
            .max(self.a01.norm())
            .max(self.a10.norm())
            .max(self.a11.norm())
    }

    /// Squared Frobenius norm, `Tr{A†A}`.
    pub fn frobenius_sqr(&self) -> f64 {
        self.a00.norm_sqr() + self.a01.norm_sqr() + self.a10.norm_sqr() + self.a11.norm_sqr()
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.frobenius_sqr().sqrt()
    }

    /// Spectral (operator 2-) norm.
    pub fn norm2(&self) -> f64 {
        let h = self.adjoint() * *self;
        let a = h.a00.re;
        let d = h.a11.re;
        let half = 0.5 * (a - d);
        let top = 0.5 * (a + d) + (half * half + h.a01.norm_sqr()).sqrt();
        top.max(0.0).sqrt()
    }

    /// Largest entry-wise distance to `other`.
    pub fn dist(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.a00.is_finite() && self.a01.is_finite() && self.a10.is_finite() && self.a11.is_finite()
    }

    /// Entry-wise deviation from Hermiticity.
    pub fn hermitian_defect(&self) -> f64 {
        (self.a00.im.abs())
            .max(self.a11.im.abs())
            .max((self.a01 - self.a10.conj()).norm())
    }

    /// Pauli coefficients `(w0, wx, wy, wz)` with `M = w0 I + wx σx + wy σy + wz σz`.
    pub fn pauli_coefficients(&self) -> [Complex; 4] {
        [
            0.5 * (self.a00 + self.a11),
            0.5 * (self.a01 + self.a10),
            0.5 * I * (self.a01 - self.a10),
            0.5 * (self.a00 - self.a11),
        ]
    }
}

impl Default for Mat2 {
    fn default() -> Self {
        Mat2::zero()
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.a00, self.a01, self.a10, self.a11
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a00 + o.a00,
            self.a01 + o.a01,
            self.a10 + o.a10,
            self.a11 + o.a11,
        )
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Mat2) {
        *self = *self + o;
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a00 - o.a00,
            self.a01 - o.a01,
            self.a10 - o.a10,
            self.a11 - o.a11,
        )
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale_re(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a00 * o.a00 + self.a01 * o.a10,
            self.a00 * o.a01 + self.a01 * o.a11,
            self.a10 * o.a00 + self.a11 * o.a10,
            self.a10 * o.a01 + self.a11 * o.a11,
        )
    }
}

impl Mul<Complex> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: Complex) -> Mat2 {
        self.scale(s)
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        self.scale_re(s)
    }
}

/// A normalized qubit state `c0|0⟩ + c1|1⟩`.
///
/// The global phase is fixed so that the first amplitude with modulus above
/// [`tol::PHASE_ZERO`] is real and non-negative; two states describing the
/// same ray therefore compare equal component-wise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureState {
    c0: Complex,
    c1: Complex,
}

impl PureState {
    /// Builds a state from amplitudes that must already be normalized.
    pub fn new(c0: Complex, c1: Complex) -> Result<Self> {
        let n2 = c0.norm_sqr() + c1.norm_sqr();
        if !n2.is_finite() || (n2 - 1.0).abs() > tol::NORMALIZATION {
            return Err(Error::NotNormalized(n2));
        }
        Ok(Self::phase_fixed(c0, c1))
    }

    /// Builds a state from any nonzero amplitude pair.
    pub fn from_unnormalized(c0: Complex, c1: Complex) -> Result<Self> {
        let n = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NotNormalized(n * n));
        }
        Ok(Self::phase_fixed(c0 / n, c1 / n))
    }

    /// Real amplitudes; convenient for the basis states of the detector model.
    pub fn from_real(c0: f64, c1: f64) -> Result<Self> {
        Self::new(c0.into(), c1.into())
    }

    fn phase_fixed(c0: Complex, c1: Complex) -> Self {
        let lead = if c0.norm() > tol::PHASE_ZERO { c0 } else { c1 };
        let phase = lead.conj() / lead.norm();
        PureState {
            c0: c0 * phase,
            c1: c1 * phase,
        }
    }

    pub fn ket0() -> Self {
        PureState { c0: ONE, c1: ZERO }
    }

    pub fn ket1() -> Self {
        PureState { c0: ZERO, c1: ONE }
    }

    pub fn c0(&self) -> Complex {
        self.c0
    }

    pub fn c1(&self) -> Complex {
        self.c1
    }

    pub fn amplitudes(&self) -> (Complex, Complex) {
        (self.c0, self.c1)
    }

    /// The state orthogonal to `self` (phase-fixed).
    pub fn orthogonal(&self) -> Self {
        Self::phase_fixed(-self.c1.conj(), self.c0.conj())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Complex {
        self.c0.conj() * other.c0 + self.c1.conj() * other.c1
    }

    /// Squared overlap `|⟨self|other⟩|²`, i.e. equality up to global phase when 1.
    pub fn overlap(&self, other: &PureState) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn projector(&self) -> Mat2 {
        projector(self)
    }

    /// Polar angle on the Bloch sphere measured from `|0⟩`.
    pub fn polar(&self) -> f64 {
        2.0 * self.c0.norm().clamp(0.0, 1.0).acos()
    }

    /// Azimuth `arg(c1) - arg(c0)` in `(-π, π]`.
    pub fn azimuth(&self) -> f64 {
        (self.c1 * self.c0.conj()).arg()
    }
}

/// `|s⟩⟨s|`.
pub fn projector(s: &PureState) -> Mat2 {
    Mat2::new(
        s.c0 * s.c0.conj(),
        s.c0 * s.c1.conj(),
        s.c1 * s.c0.conj(),
        s.c1 * s.c1.conj(),
    )
}

/// Spectral decomposition of a Hermitian 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianEig {
    pub eval_hi: f64,
    pub eval_lo: f64,
    pub evec_hi: PureState,
    pub evec_lo: PureState,
    /// Eigenvalues coincide; the eigenvectors are the canonical basis.
    pub degenerate: bool,
}

impl HermitianEig {
    pub fn reconstruct(&self) -> Mat2 {
        self.evec_hi.projector() * self.eval_hi + self.evec_lo.projector() * self.eval_lo
    }
}

/// Closed-form eigendecomposition of a Hermitian 2×2 matrix.
pub fn hermitian_eig(m: &Mat2) -> Result<HermitianEig> {
    let defect = m.hermitian_defect();
    let scale = m.max_abs();
    if !m.is_finite() || defect > tol::HERMITIAN * scale.max(1.0) {
        return Err(Error::NonHermitian(defect));
    }
    let a = m.a00.re;
    let d = m.a11.re;
    // average the off-diagonal pair so tiny asymmetries do not bias the vectors
    let b = 0.5 * (m.a01 + m.a10.conj());
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = half.hypot(b.norm());

    if scale == 0.0 || r <= tol::EIG_DEGENERATE * scale {
        return Ok(HermitianEig {
            eval_hi: mean + r,
            eval_lo: mean - r,
            evec_hi: PureState::ket0(),
            evec_lo: PureState::ket1(),
            degenerate: true,
        });
    }

    let (v0, v1) = if half >= 0.0 {
        (Complex::from(r + half), b.conj())
    } else {
        (b, Complex::from(r - half))
    };
    let hi = PureState::from_unnormalized(v0, v1)?;
    Ok(HermitianEig {
        eval_hi: mean + r,
        eval_lo: mean - r,
        evec_hi: hi,
        evec_lo: hi.orthogonal(),
        degenerate: false,
    })
}

/// A possibly sub-normalized qubit density matrix.
///
/// Hermitian, positive semidefinite and with trace in `[0, 1]`; a trace
/// below one is the probability that the conditioning record occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    m: Mat2,
}

impl DensityMatrix {
    pub fn new(m: Mat2) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NonHermitian(f64::NAN));
        }
        let defect = m.hermitian_defect();
        if defect > tol::DENSITY_HERMITIAN {
            return Err(Error::NonHermitian(defect));
        }
        let tr = m.trace().re;
        if !(-tol::TRACE..=1.0 + tol::TRACE).contains(&tr) {
            return Err(Error::InvalidTrace(tr));
        }
        let half = 0.5 * (m.a00.re - m.a11.re);
        let lo = 0.5 * tr - half.hypot(m.a01.norm());
        if lo < -tol::PSD {
            return Err(Error::NotPositive(lo));
        }
        Ok(DensityMatrix { m })
    }

    /// Normalizes a positive operator to unit trace.
    pub fn from_unnormalized(m: &Mat2) -> Result<Self> {
        let tr = m.trace().re;
        if !(tr > tol::ZERO_TRACE) {
            return Err(Error::ZeroTrace);
        }
        let mut n = m.scale_re(1.0 / tr);
        // restore exact Hermiticity lost to rounding in the caller's products
        n.a00.im = 0.0;
        n.a11.im = 0.0;
        let off = 0.5 * (n.a01 + n.a10.conj());
        n.a01 = off;
        n.a10 = off.conj();
        Self::new(n)
    }

    pub fn from_pure(s: &PureState) -> Self {
        DensityMatrix { m: s.projector() }
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix {
            m: Mat2::from_real(0.5, 0.0, 0.0, 0.5),
        }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    /// Trace-normalized copy.
    pub fn normalized(&self) -> Result<Self> {
        Self::from_unnormalized(&self.m)
    }

    /// `Tr{A ρ}` (real part; exact for Hermitian `A`).
    pub fn expect(&self, a: &Mat2) -> f64 {
        (*a * self.m).trace().re
    }
}

/// Purity of the trace-normalized state, `sqrt(2 Tr{ρ²} - 1)`.
///
/// For a 2×2 operator of unit trace `2 Tr{ρ²} - 1 = (λ1 - λ2)²`, which is
/// evaluated directly to avoid the cancellation near the maximally mixed state.
pub fn purity(rho: &DensityMatrix) -> Result<f64> {
    purity_of(rho.matrix())
}

pub(crate) fn purity_of(m: &Mat2) -> Result<f64> {
    let tr = m.trace().re;
    if !(tr > tol::ZERO_TRACE) {
        return Err(Error::ZeroTrace);
    }
    let a = m.a00.re;
    let d = m.a11.re;
    let b = 0.5 * (m.a01 + m.a10.conj());
    let gap = (a - d).hypot(2.0 * b.norm());
    Ok((gap / tr).clamp(0.0, 1.0))
}
