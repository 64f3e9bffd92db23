//! Measurement bases, outcome fidelities and the closed-form special cases.
//!
//! Any conditional propagator `U` factors as `U = R · M` with `R` unitary and
//! `M = sqrt(U†U) = √p1 |ψ1⟩⟨ψ1| + √p2 |ψ2⟩⟨ψ2|` positive. The eigenbasis of
//! `M` is the basis the record measured, `p1 ≥ p2` are the probabilities of
//! the record given each basis state, and the fidelity of the record is
//! `(p1 - p2) / (p1 + p2)`.

use serde::Serialize;

use crate::detector::{self, DetectorParams};
use crate::error::{Error, Result};
use crate::qmatrix::{self, hermitian_eig, Complex, Mat2, PureState, ONE};
use crate::quad;
use crate::tol;

/// Angles closer to zero than this count as `β = 0`.
const BETA_ZERO: f64 = 1e-12;

/// Polar factorization of a conditional propagator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementDecomposition {
    /// Eigenvector of `U†U` with the larger eigenvalue.
    pub psi1: PureState,
    pub psi2: PureState,
    pub p1: f64,
    pub p2: f64,
    /// Unitary with `U = rotation · measurement()`.
    pub rotation: Mat2,
    /// `p1 ≈ p2`: the record carries no information and `psi1, psi2` are `|0⟩, |1⟩`.
    pub degenerate: bool,
}

impl MeasurementDecomposition {
    /// `√p1 |ψ1⟩⟨ψ1| + √p2 |ψ2⟩⟨ψ2|`.
    pub fn measurement(&self) -> Mat2 {
        self.psi1.projector() * self.p1.sqrt() + self.psi2.projector() * self.p2.sqrt()
    }

    pub fn reconstruct(&self) -> Mat2 {
        self.rotation * self.measurement()
    }
}

fn eig_gap(m: &Mat2) -> f64 {
    let b = 0.5 * (m.a01 + m.a10.conj());
    (m.a00.re - m.a11.re).hypot(2.0 * b.norm())
}

/// Unitary polar factor of a 2×2 matrix.
///
/// For `A = V M` with `M ≥ 0`, `A + e^{iα} adj(A)† = V (M + adj M) = tr(M) V`
/// where `e^{iα} = det A / |det A|`; any phase works when `det A = 0`.
fn polar_unitary(a: &Mat2) -> Mat2 {
    let det = a.det();
    let abs_det = det.norm();
    let phase = if abs_det > 0.0 { det / abs_det } else { ONE };
    let adj_dag = Mat2::new(a.a11.conj(), -a.a10.conj(), -a.a01.conj(), a.a00.conj());
    let s = (a.frobenius_sqr() + 2.0 * abs_det).sqrt();
    if !(s > 0.0) {
        return Mat2::identity();
    }
    (*a + adj_dag * phase) * (1.0 / s)
}

/// Splits `u` into a rotation and a positive measurement operator.
pub fn decompose(u: &Mat2) -> Result<MeasurementDecomposition> {
    if !u.is_finite() {
        return Err(Error::InvalidParameter("propagator has non-finite entries".into()));
    }
    let gram = detector::hermitize(&(u.adjoint() * *u));
    let sum = u.frobenius_sqr();
    let gap = eig_gap(&gram).min(sum);
    let p1 = 0.5 * (sum + gap);
    let p2 = if p1 > 0.0 {
        (u.det().norm_sqr() / p1).min(p1)
    } else {
        0.0
    };
    let rotation = polar_unitary(u);
    let degenerate = p1 - p2 <= tol::DECOMPOSE_DEGENERATE * p1;
    let (psi1, psi2) = if degenerate {
        (PureState::ket0(), PureState::ket1())
    } else {
        let e = hermitian_eig(&gram)?;
        (e.evec_hi, e.evec_lo)
    };
    Ok(MeasurementDecomposition {
        psi1,
        psi2,
        p1,
        p2,
        rotation,
        degenerate,
    })
}

/// `(p1 - p2) / (p1 + p2)`; zero for a degenerate decomposition.
pub fn outcome_fidelity(d: &MeasurementDecomposition) -> Result<f64> {
    let total = d.p1 + d.p2;
    if !(total > tol::ZERO_PROBABILITY) {
        return Err(Error::ZeroOutcomeProbability);
    }
    if d.degenerate {
        return Ok(0.0);
    }
    Ok(((d.p1 - d.p2) / total).clamp(0.0, 1.0))
}

/// Outcome fidelity of `u` next to the purity of `u ρ u†` for a maximally mixed `ρ`.
pub fn purity_equals_fidelity_check(u: &Mat2) -> Result<(f64, f64)> {
    let d = decompose(u)?;
    let fidelity = outcome_fidelity(&d)?;
    let rho = (*u * u.adjoint()) * 0.5;
    let purity = qmatrix::purity_of(&rho).map_err(|_| Error::ZeroOutcomeProbability)?;
    Ok((fidelity, purity))
}

/// Overall fidelity of a pulse of duration `tau` on a maximally mixed qubit.
///
/// With `resolve_switch_time` the record is the switching time (or no
/// switch), and the fidelity is `∫ gap(U_ns† K U_ns)/2 dt + gap(U_ns†U_ns(τ))/2`
/// where `gap` is the eigenvalue difference. Without it the record is only
/// "switched before τ or not", whose two effect operators share an eigenbasis,
/// giving `gap(U_ns†U_ns(τ))`.
pub fn overall_fidelity_numeric(p: &DetectorParams, tau: f64, resolve_switch_time: bool) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let tail = eig_gap(&detector::no_switch_effect(p, tau));
    if !resolve_switch_time {
        return Ok(tail.clamp(0.0, 1.0));
    }
    let mut points = vec![0.0];
    if p.beta() <= BETA_ZERO {
        if let Ok(t0) = case1_tau0(p) {
            if t0 < tau {
                points.push(t0);
            }
        }
    }
    points.push(tau);
    let mut integrand = |t: f64| 0.5 * eig_gap(&detector::switch_density_operator(p, t));
    let switched: f64 = quad::integrate_with_breaks(&mut integrand, &points, tol::QUADRATURE)?;
    Ok((switched + 0.5 * tail).clamp(0.0, 1.0))
}

fn require_probe_aligned(p: &DetectorParams) -> Result<()> {
    if p.beta() > BETA_ZERO {
        return Err(Error::WrongRegime(format!(
            "closed form needs beta = 0, got {}",
            p.beta()
        )));
    }
    Ok(())
}

/// Switching time at which the record carries no information, `ln(γR/γL)/(γR - γL)`.
pub fn case1_tau0(p: &DetectorParams) -> Result<f64> {
    rates_tau0(p.gamma_l(), p.gamma_r())
}

fn rates_tau0(a: f64, b: f64) -> Result<f64> {
    if a == 0.0 || b == 0.0 {
        return Err(Error::ZeroRate);
    }
    if a == b {
        return Err(Error::DegenerateRates);
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    Ok(((hi - lo) / lo).ln_1p() / (hi - lo))
}

/// Fidelity of a switch at time `t` for `β = 0`.
pub fn case1_switch_fidelity(p: &DetectorParams, t: f64) -> Result<f64> {
    require_probe_aligned(p)?;
    let (gl, gr) = (p.gamma_l(), p.gamma_r());
    if gl == 0.0 || gr == 0.0 {
        return Ok(if gl == gr { 0.0 } else { 1.0 });
    }
    // ratio of the two switch probabilities, γR e^{-γR t} / γL e^{-γL t}
    let r = ((gr / gl).ln() - (gr - gl) * t).exp();
    if r.is_infinite() {
        return Ok(1.0);
    }
    Ok(((1.0 - r).abs() / (1.0 + r)).clamp(0.0, 1.0))
}

/// Fidelity of a pulse of length `tau` without switching-time resolution, `β = 0`.
pub fn case1_pulse_fidelity(p: &DetectorParams, tau: f64) -> Result<f64> {
    require_probe_aligned(p)?;
    Ok(((-p.gamma_l() * tau).exp() - (-p.gamma_r() * tau).exp())
        .abs()
        .clamp(0.0, 1.0))
}

/// Best overall fidelity for two switching rates in either order:
/// `r^{-γ</(γ>-γ<)} - r^{-γ>/(γ>-γ<)}` with `r = γ>/γ<`.
pub fn case1_overall_fidelity(rate_a: f64, rate_b: f64) -> Result<f64> {
    let (lo, hi) = if rate_a <= rate_b { (rate_a, rate_b) } else { (rate_b, rate_a) };
    if !(lo >= 0.0 && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "rates must be finite and non-negative, got {rate_a}, {rate_b}"
        )));
    }
    if lo == hi {
        return Err(Error::DegenerateRates);
    }
    if lo == 0.0 {
        return Ok(1.0);
    }
    let t0 = rates_tau0(lo, hi)?;
    Ok(((-lo * t0).exp() * -(-(hi - lo) * t0).exp_m1()).clamp(0.0, 1.0))
}

/// Whether the slow-measurement closed forms check their validity regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegimeGuard {
    #[default]
    Enforce,
    Override,
}

fn check_slow(p: &DetectorParams, guard: RegimeGuard) -> Result<()> {
    if guard == RegimeGuard::Enforce && p.energy() < tol::SLOW_REGIME_RATIO * p.gamma_plus() {
        return Err(Error::WrongRegime(format!(
            "slow-measurement forms need E >= {} gamma_plus (E = {}, gamma_plus = {})",
            tol::SLOW_REGIME_RATIO,
            p.energy(),
            p.gamma_plus()
        )));
    }
    Ok(())
}

/// Precession frequency of the record-dependent basis, `E - γ-²/(2E)`.
pub fn effective_precession(p: &DetectorParams) -> f64 {
    let gm = p.gamma_minus();
    if gm == 0.0 {
        return p.energy();
    }
    p.energy() - gm * gm / (2.0 * p.energy())
}

/// Record-dependent measurement basis for a switch at time `t`, slow measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpiralBasis {
    /// Polar angle of the basis state that starts as `|L⟩`; `β` at `t = 0`,
    /// moving continuously towards the pole as the record ages.
    pub theta: f64,
    /// Azimuth of that state, `Ẽ t` (not reduced mod 2π).
    pub phi: f64,
    /// `(p1 + p2) / dt`.
    pub p_sum_rate: f64,
    /// `|p1 - p2| / dt`.
    pub p_diff_rate: f64,
    /// Signed denominator of `tan θ` in its textbook form; changes sign when
    /// the basis crosses the equator.
    pub tan_denominator: f64,
}

impl SpiralBasis {
    pub fn fidelity(&self) -> f64 {
        if self.p_sum_rate > 0.0 {
            (self.p_diff_rate / self.p_sum_rate).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// Basis state with polar angle `theta` and azimuth `phi`.
    pub fn state(&self) -> PureState {
        let (s, c) = (0.5 * self.theta).sin_cos();
        PureState::from_unnormalized(c.into(), Complex::from_polar(s, self.phi)).expect("unit vector")
    }
}

/// Asymptotic basis and outcome probabilities for `E ≫ γ-`.
pub fn case3_basis(p: &DetectorParams, t: f64, guard: RegimeGuard) -> Result<SpiralBasis> {
    check_slow(p, guard)?;
    if !(p.energy() > 0.0) {
        return Err(Error::WrongRegime("slow-measurement forms need E > 0".into()));
    }
    let (gl, gr, gp, gm) = (p.gamma_l(), p.gamma_r(), p.gamma_plus(), p.gamma_minus());
    let (sb, cb) = p.beta().sin_cos();
    let c2 = (0.5 * p.beta()).cos().powi(2);
    let s2 = (0.5 * p.beta()).sin().powi(2);
    // e^{-γ+ t ± γ- t cosβ}, never overflowing since |γ-| ≤ γ+
    let up = (-(gp - gm * cb) * t).exp();
    let down = (-(gp + gm * cb) * t).exp();
    let decay = (-gp * t).exp();
    let num = (gl - gr) * sb * decay;
    let den = gl * (up * c2 - down * s2) + gr * (up * s2 - down * c2);
    let sum = gl * (up * c2 + down * s2) + gr * (up * s2 + down * c2);
    let sign = if gl > gr { 1.0 } else { -1.0 };
    let theta = if num == 0.0 && den == 0.0 {
        p.beta()
    } else {
        num.abs().atan2(sign * den)
    };
    Ok(SpiralBasis {
        theta,
        phi: effective_precession(p) * t,
        p_sum_rate: sum,
        p_diff_rate: num.hypot(den),
        tan_denominator: if decay > 0.0 { den / decay } else { den },
    })
}

fn slow_contrast(p: &DetectorParams) -> f64 {
    (p.gamma_minus() * p.beta().cos()).abs()
}

/// Overall fidelity of a pulse of length `tau` without switching-time resolution, `E ≫ γ+`.
pub fn case3_pulse_fidelity(p: &DetectorParams, tau: f64, guard: RegimeGuard) -> Result<f64> {
    check_slow(p, guard)?;
    let (gp, c) = (p.gamma_plus(), slow_contrast(p));
    Ok(((-(gp - c) * tau).exp() - (-(gp + c) * tau).exp()).clamp(0.0, 1.0))
}

/// Optimal pulse length and the fidelity it reaches, `E ≫ γ+`.
///
/// Returns `(∞, 1)` when one probe state never switches and the basis is the
/// energy basis (`γL = 0`, `β = 0`).
pub fn case3_max_fidelity(p: &DetectorParams, guard: RegimeGuard) -> Result<(f64, f64)> {
    check_slow(p, guard)?;
    let (gp, c) = (p.gamma_plus(), slow_contrast(p));
    if !(gp > 0.0) || c <= 1e-12 * gp {
        return Err(Error::FlatObjective);
    }
    let slow = gp - c;
    if slow <= 0.0 {
        return Ok((f64::INFINITY, 1.0));
    }
    let tau = (2.0 * c / slow).ln_1p() / (2.0 * c);
    let q = slow / (gp + c);
    let f = q.powf(slow / (2.0 * c)) * (1.0 - q);
    Ok((tau, f.clamp(0.0, 1.0)))
}

/// `tan(β/2)^{secβ-1} - tan(β/2)^{secβ+1}`: the optimum for `γL = 0`.
pub fn dark_state_max_fidelity(beta: f64) -> f64 {
    let t = (0.5 * beta).tan();
    if beta <= 0.0 {
        return 1.0;
    }
    let sec = 1.0 / beta.cos();
    (t.powf(sec - 1.0) - t.powf(sec + 1.0)).clamp(0.0, 1.0)
}

/// Numerical maximization of [`case3_pulse_fidelity`] over the pulse length.
pub fn case3_max_fidelity_numeric(p: &DetectorParams, guard: RegimeGuard) -> Result<(f64, f64)> {
    check_slow(p, guard)?;
    let (gp, c) = (p.gamma_plus(), slow_contrast(p));
    if !(gp > 0.0) || c <= 1e-12 * gp {
        return Err(Error::FlatObjective);
    }
    let hi = 50.0 / (gp - c).max(1e-3 * gp);
    Ok(quad::grid_golden_max(
        |tau| (-(gp - c) * tau).exp() - (-(gp + c) * tau).exp(),
        0.0,
        hi,
        2000,
        tol::GOLDEN,
    ))
}

/// Ordered `(abscissa, fidelity)` samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityCurve {
    pub label: String,
    points: Vec<(f64, f64)>,
}

impl FidelityCurve {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Result<Self> {
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidParameter(format!(
                    "abscissae must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(x, f)) = points.iter().find(|(_, f)| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidParameter(format!("fidelity {f} at {x} outside [0, 1]")));
        }
        Ok(FidelityCurve {
            label: label.into(),
            points,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Switching-time fidelity for `β = 0` against `t/τ0`, over `[0, t_max]` in units of `τ0`.
pub fn switch_fidelity_curve(rate_ratio: f64, t_max: f64, n: usize) -> Result<FidelityCurve> {
    let p = DetectorParams::new(1.0, rate_ratio, 0.0, 0.0)?;
    let t0 = case1_tau0(&p)?;
    let n = n.max(2);
    let pts = (0..n)
        .map(|i| {
            let x = t_max * i as f64 / (n - 1) as f64;
            case1_switch_fidelity(&p, x * t0).map(|f| (x, f))
        })
        .collect::<Result<Vec<_>>>()?;
    FidelityCurve::new("t_over_tau0", pts)
}

/// Best overall fidelity for `β = 0` against `γR/γL`.
pub fn overall_fidelity_curve(ratios: &[f64]) -> Result<FidelityCurve> {
    let pts = ratios
        .iter()
        .map(|&r| match case1_overall_fidelity(1.0, r) {
            Ok(f) => Ok((r, f)),
            Err(Error::DegenerateRates) => Ok((r, 0.0)),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    FidelityCurve::new("gamma_ratio", pts)
}

/// Best pulse fidelity for `γL = 0`, slow measurement, against `β`.
pub fn dark_state_fidelity_curve(betas: &[f64]) -> Result<FidelityCurve> {
    let pts = betas
        .iter()
        .map(|&b| {
            let p = DetectorParams::new(0.0, 1.0, b, 10.0)?;
            match case3_max_fidelity(&p, RegimeGuard::Enforce) {
                Ok((_, f)) => Ok((b, f)),
                Err(Error::FlatObjective) => Ok((b, 0.0)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    FidelityCurve::new("beta", pts)
}

/// Switching speed relative to qubit precession.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SwitchingSpeed {
    /// `γ+ ≥ 10 E`.
    Fast,
    /// `E ≥ 10 γ+`.
    Slow,
    Intermediate,
}

/// Basis a detector record refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BasisKind {
    /// `{|L⟩, |R⟩}`.
    Probe,
    /// Fixed only once the switching time is known.
    RecordDependent,
    /// `{|0⟩, |1⟩}`.
    Energy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegimeSummary {
    pub speed: SwitchingSpeed,
    pub basis: BasisKind,
    /// Fidelity limited by the rate ratio alone, or also by the angle `β`.
    pub limited_by_angle: bool,
}

/// Measurement basis and fidelity limits for a detector in a given regime.
pub fn classify_regime(p: &DetectorParams, coherent: bool, switch_time_resolved: bool) -> RegimeSummary {
    let speed = if p.gamma_plus() >= tol::FAST_SWITCHING_RATIO * p.energy() {
        SwitchingSpeed::Fast
    } else if p.energy() >= tol::SLOW_REGIME_RATIO * p.gamma_plus() {
        SwitchingSpeed::Slow
    } else {
        SwitchingSpeed::Intermediate
    };
    let (basis, limited_by_angle) = match speed {
        SwitchingSpeed::Fast => (BasisKind::Probe, false),
        _ if coherent => (BasisKind::Energy, true),
        _ if switch_time_resolved => (BasisKind::RecordDependent, speed != SwitchingSpeed::Slow),
        _ => (BasisKind::Energy, true),
    };
    RegimeSummary {
        speed,
        basis,
        limited_by_angle,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};

    fn params(gl: f64, gr: f64, beta: f64, e: f64) -> DetectorParams {
        DetectorParams::new(gl, gr, beta, e).unwrap()
    }

    #[test]
    fn decompose_identity() {
        let d = decompose(&Mat2::identity()).unwrap();
        assert_eq!((d.p1, d.p2), (1.0, 1.0));
        assert!(d.degenerate);
        assert!(d.rotation.dist(&Mat2::identity()) < 1e-15);
        assert_eq!(outcome_fidelity(&d).unwrap(), 0.0);
    }

    #[test]
    fn decompose_rotated_diagonal() {
        let theta: f64 = 0.8;
        let v = Mat2::new(
            Complex::new(theta.cos(), 0.0),
            Complex::new(0.0, theta.sin()),
            Complex::new(0.0, theta.sin()),
            Complex::new(theta.cos(), 0.0),
        );
        let u = v * Mat2::from_real(2.0, 0.0, 0.0, 1.0);
        let d = decompose(&u).unwrap();
        assert!((d.p1 - 4.0).abs() < 1e-14 && (d.p2 - 1.0).abs() < 1e-14);
        assert!(d.rotation.dist(&v) < 1e-14);
        assert_eq!(d.psi1, PureState::ket0());
        assert!(d.reconstruct().dist(&u) < 1e-14);
    }

    #[test]
    fn decompose_case1_switch() {
        let p = params(1.0, 10.0, 0.0, 3.0);
        let d = decompose(&detector::u_s(&p, 0.05, 0.01).unwrap()).unwrap();
        assert_eq!(d.psi1, PureState::ket1());
        assert_eq!(d.psi2, PureState::ket0());
        assert!((d.p1 - 0.1 * (-0.5f64).exp()).abs() < 1e-15);
        assert!((d.p2 - 0.01 * (-0.05f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn fidelity_examples() {
        let mk = |p1: f64, p2: f64| MeasurementDecomposition {
            psi1: PureState::ket0(),
            psi2: PureState::ket1(),
            p1,
            p2,
            rotation: Mat2::identity(),
            degenerate: false,
        };
        assert_eq!(outcome_fidelity(&mk(0.3, 0.3)).unwrap(), 0.0);
        assert_eq!(outcome_fidelity(&mk(0.3, 0.0)).unwrap(), 1.0);
        let f = outcome_fidelity(&mk(10.0 / 11.0 * 0.2, 1.0 / 11.0 * 0.2)).unwrap();
        assert!((f - 9.0 / 11.0).abs() < 1e-15);
        assert_eq!(outcome_fidelity(&mk(0.0, 0.0)), Err(Error::ZeroOutcomeProbability));
    }

    #[test]
    fn purity_check_examples() {
        assert_eq!(purity_equals_fidelity_check(&Mat2::identity()).unwrap(), (0.0, 0.0));
        let (f, pu) = purity_equals_fidelity_check(&PureState::ket0().projector()).unwrap();
        assert_eq!((f, pu), (1.0, 1.0));
    }

    #[test]
    fn tau0_examples() {
        let t0 = case1_tau0(&params(1.0, 10.0, 0.0, 0.0)).unwrap();
        assert!((t0 - 10f64.ln() / 9.0).abs() < 1e-15);
        assert!((t0 - 0.25584).abs() < 1e-5);
        let e = std::f64::consts::E;
        let t0 = case1_tau0(&params(2.0, 2.0 * e, 0.0, 0.0)).unwrap();
        assert!((t0 - 1.0 / (2.0 * e - 2.0)).abs() < 1e-15);
        assert_eq!(case1_tau0(&params(2.0, 2.0, 0.0, 0.0)), Err(Error::DegenerateRates));
        assert_eq!(case1_tau0(&params(0.0, 2.0, 0.0, 0.0)), Err(Error::ZeroRate));
    }

    #[test]
    fn switch_fidelity_examples() {
        let p = params(1.0, 10.0, 0.0, 0.0);
        assert!((case1_switch_fidelity(&p, 0.0).unwrap() - 9.0 / 11.0).abs() < 1e-15);
        let t0 = case1_tau0(&p).unwrap();
        assert!(case1_switch_fidelity(&p, t0).unwrap() < 1e-14);
        assert!(case1_switch_fidelity(&p, 5.0).unwrap() > 1.0 - 1e-15);
        assert!(matches!(
            case1_switch_fidelity(&params(1.0, 10.0, 0.1, 0.0), 0.0),
            Err(Error::WrongRegime(_))
        ));
    }

    #[test]
    fn pulse_fidelity_examples() {
        let p = params(1.0, 10.0, 0.0, 0.0);
        assert_eq!(case1_pulse_fidelity(&p, 0.0).unwrap(), 0.0);
        let t0 = case1_tau0(&p).unwrap();
        let expect = 10f64.powf(-1.0 / 9.0) - 10f64.powf(-10.0 / 9.0);
        assert!((case1_pulse_fidelity(&p, t0).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.69684).abs() < 1e-5);
        assert!((case1_overall_fidelity(10.0, 1.0).unwrap() - expect).abs() < 1e-15);
        assert!(case1_pulse_fidelity(&p, 100.0).unwrap() < 1e-40);
    }

    #[test]
    fn overall_numeric_examples() {
        let p = params(1.0, 10.0, 0.0, 2.0);
        let expect = 10f64.powf(-1.0 / 9.0) - 10f64.powf(-10.0 / 9.0);
        let f = overall_fidelity_numeric(&p, 60.0, true).unwrap();
        assert!((f - expect).abs() < 1e-7);

        let p = params(3.0, 3.0, 0.6, 2.0);
        assert!(overall_fidelity_numeric(&p, 2.0, true).unwrap() < 1e-12);
        assert!(overall_fidelity_numeric(&p, 2.0, false).unwrap() < 1e-12);

        let p = params(1.0, 10.0, FRAC_PI_2, 550.0);
        assert!(overall_fidelity_numeric(&p, 5.0 / 5.5, false).unwrap() < 1e-3);
    }

    #[test]
    fn case3_basis_examples() {
        let p = params(1.0, 3.0, 0.7, 100.0);
        let b = case3_basis(&p, 0.0, RegimeGuard::Enforce).unwrap();
        assert!((b.theta - 0.7).abs() < 1e-15);
        assert!((b.p_sum_rate - 4.0).abs() < 1e-14);
        assert!((b.p_diff_rate - 2.0).abs() < 1e-14);

        let p = params(0.0, 3.0, 0.7, 100.0);
        for t in [0.0, 0.3, 1.0, 4.0] {
            let b = case3_basis(&p, t, RegimeGuard::Enforce).unwrap();
            assert!((b.fidelity() - 1.0).abs() < 1e-12);
        }

        let p = params(1.0, 3.0, FRAC_PI_2, 100.0);
        for t in [0.0, 0.3, 1.0, 4.0] {
            let b = case3_basis(&p, t, RegimeGuard::Enforce).unwrap();
            assert!((b.theta - FRAC_PI_2).abs() < 1e-12);
            assert!((b.fidelity() - 0.5).abs() < 1e-12);
        }

        let p = params(1.0, 3.0, 0.7, 10.0);
        assert!(matches!(case3_basis(&p, 0.0, RegimeGuard::Enforce), Err(Error::WrongRegime(_))));
        assert!(case3_basis(&p, 0.0, RegimeGuard::Override).is_ok());
    }

    #[test]
    fn case3_pulse_examples() {
        let p = params(1.0, 10.0, 0.0, 200.0);
        for tau in [0.0, 0.1, 0.5, 2.0] {
            let a = case3_pulse_fidelity(&p, tau, RegimeGuard::Enforce).unwrap();
            let b = case1_pulse_fidelity(&p, tau).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
        let p = params(1.0, 10.0, FRAC_PI_2, 200.0);
        assert!(case3_pulse_fidelity(&p, 0.7, RegimeGuard::Enforce).unwrap() < 1e-15);

        let p = params(0.0, 1.0, FRAC_PI_3, 100.0);
        let f = case3_pulse_fidelity(&p, 9f64.ln() / 1.0, RegimeGuard::Enforce).unwrap();
        assert!((f - 0.38490).abs() < 1e-5);
    }

    #[test]
    fn case3_max_examples() {
        let p = params(0.0, 1.0, FRAC_PI_3, 100.0);
        let (tau, f) = case3_max_fidelity(&p, RegimeGuard::Enforce).unwrap();
        let t = (FRAC_PI_3 / 2.0).tan();
        assert!((f - (t - t.powi(3))).abs() < 1e-14);
        assert!((tau - 9f64.ln()).abs() < 1e-12);
        assert!((dark_state_max_fidelity(FRAC_PI_3) - f).abs() < 1e-14);

        let p = params(0.0, 1.0, 1e-4, 100.0);
        assert!(case3_max_fidelity(&p, RegimeGuard::Enforce).unwrap().1 > 0.999);
        let p = params(0.0, 1.0, FRAC_PI_2, 100.0);
        assert_eq!(case3_max_fidelity(&p, RegimeGuard::Enforce), Err(Error::FlatObjective));
        assert!(dark_state_max_fidelity(FRAC_PI_2) < 1e-15);
        let p = params(2.0, 2.0, 0.3, 100.0);
        assert_eq!(case3_max_fidelity(&p, RegimeGuard::Enforce), Err(Error::FlatObjective));
    }

    #[test]
    fn case3_general_optimum() {
        let p = params(0.7, 4.0, FRAC_PI_4, 100.0);
        let (tau, f) = case3_max_fidelity(&p, RegimeGuard::Enforce).unwrap();
        let (tn, fnum) = case3_max_fidelity_numeric(&p, RegimeGuard::Enforce).unwrap();
        assert!((tau - tn).abs() < 1e-6);
        assert!((f - fnum).abs() < 1e-12);
        let h = 1e-5;
        let fp = case3_pulse_fidelity(&p, tau + h, RegimeGuard::Enforce).unwrap();
        let fm = case3_pulse_fidelity(&p, tau - h, RegimeGuard::Enforce).unwrap();
        assert!(((fp - fm) / (2.0 * h)).abs() < 1e-8);
    }

    #[test]
    fn curves() {
        let c = switch_fidelity_curve(10.0, 5.0, 101).unwrap();
        assert_eq!(c.len(), 101);
        assert!(c.points().iter().any(|&(x, f)| (x - 1.0).abs() < 1e-12 && f < 1e-12));
        let c = overall_fidelity_curve(&[1.0, 10.0, 1e6]).unwrap();
        assert_eq!(c.points()[0].1, 0.0);
        assert!(c.points()[2].1 > 0.99);
        let c = dark_state_fidelity_curve(&[0.0, FRAC_PI_3, FRAC_PI_2]).unwrap();
        assert_eq!(c.points()[0].1, 1.0);
        assert_eq!(c.points()[2].1, 0.0);
        assert!(FidelityCurve::new("x", vec![(1.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(FidelityCurve::new("x", vec![(1.0, 1.5)]).is_err());
    }

    #[test]
    fn regimes() {
        let fast = params(10.0, 100.0, 0.5, 1.0);
        let r = classify_regime(&fast, false, true);
        assert_eq!((r.speed, r.basis, r.limited_by_angle), (SwitchingSpeed::Fast, BasisKind::Probe, false));
        let slow = params(1.0, 10.0, 0.5, 100.0);
        assert_eq!(classify_regime(&slow, false, true).basis, BasisKind::RecordDependent);
        assert!(!classify_regime(&slow, false, true).limited_by_angle);
        assert_eq!(classify_regime(&slow, false, false).basis, BasisKind::Energy);
        assert_eq!(classify_regime(&slow, true, true).basis, BasisKind::Energy);
        assert!(classify_regime(&slow, true, true).limited_by_angle);
    }
}
