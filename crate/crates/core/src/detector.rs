//! The incoherent two-state switching detector and its conditional propagators.
//!
//! The detector probes `σn = cosβ σz + sinβ σx` and switches irreversibly at
//! rate `γL` when the qubit is in `|L⟩` and `γR` when it is in `|R⟩`. The
//! qubit Hamiltonian is `-E/2 σz`. Conditioned on the detector record, the
//! qubit evolves under non-unitary propagators:
//!
//! * no switch up to `t`: `U_ns(t) = exp(G t)`,
//! * switch in `[t, t + dt]`: `U_s(t, dt) = P_s(dt) U_ns(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmatrix::{Complex, DensityMatrix, Mat2, PureState, I};
use crate::tol;

/// Parameters of the incoherent detector model.
///
/// Times and rates share one arbitrary unit; `energy` is an angular frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct DetectorParams {
    gamma_l: f64,
    gamma_r: f64,
    beta: f64,
    energy: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(rename = "gamma_L")]
    gamma_l: f64,
    #[serde(rename = "gamma_R")]
    gamma_r: f64,
    beta: f64,
    #[serde(rename = "E")]
    energy: f64,
}

impl TryFrom<RawParams> for DetectorParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        DetectorParams::new(r.gamma_l, r.gamma_r, r.beta, r.energy)
    }
}

impl From<DetectorParams> for RawParams {
    fn from(p: DetectorParams) -> Self {
        RawParams {
            gamma_l: p.gamma_l,
            gamma_r: p.gamma_r,
            beta: p.beta,
            energy: p.energy,
        }
    }
}

impl DetectorParams {
    pub fn new(gamma_l: f64, gamma_r: f64, beta: f64, energy: f64) -> Result<Self> {
        for (name, v) in [("gamma_L", gamma_l), ("gamma_R", gamma_r), ("E", energy)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(0.0..=std::f64::consts::PI).contains(&beta) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in [0, pi], got {beta}"
            )));
        }
        Ok(DetectorParams {
            gamma_l,
            gamma_r,
            beta,
            energy,
        })
    }

    pub fn gamma_l(&self) -> f64 {
        self.gamma_l
    }

    pub fn gamma_r(&self) -> f64 {
        self.gamma_r
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `(γR + γL) / 2`.
    pub fn gamma_plus(&self) -> f64 {
        0.5 * (self.gamma_r + self.gamma_l)
    }

    /// `(γR - γL) / 2`.
    pub fn gamma_minus(&self) -> f64 {
        0.5 * (self.gamma_r - self.gamma_l)
    }

    /// Larger of the two switching rates.
    pub fn max_rate(&self) -> f64 {
        self.gamma_l.max(self.gamma_r)
    }
}

/// Eigenstates of the probed operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeBasis {
    pub l: PureState,
    pub r: PureState,
}

pub fn probe_basis(p: &DetectorParams) -> ProbeBasis {
    let (s, c) = (0.5 * p.beta).sin_cos();
    ProbeBasis {
        l: PureState::from_unnormalized(c.into(), s.into()).expect("unit vector"),
        r: PureState::from_unnormalized(s.into(), (-c).into()).expect("unit vector"),
    }
}

/// The switching-rate operator `γL |L⟩⟨L| + γR |R⟩⟨R|`.
pub fn rate_matrix(p: &DetectorParams) -> Mat2 {
    let (sb, cb) = p.beta.sin_cos();
    let gp = p.gamma_plus();
    let gm = p.gamma_minus();
    Mat2::from_real(gp - gm * cb, -gm * sb, -gm * sb, gp + gm * cb)
}

fn check_step(p: &DetectorParams, dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let load = p.max_rate() * dt;
    if load > 1.0 {
        return Err(Error::StepTooLarge(load));
    }
    Ok(())
}

fn probe_combination(p: &DetectorParams, wl: f64, wr: f64) -> Mat2 {
    let b = probe_basis(p);
    b.l.projector() * wl + b.r.projector() * wr
}

/// Kraus operator for a switch within `dt`.
pub fn p_switch(p: &DetectorParams, dt: f64) -> Result<Mat2> {
    check_step(p, dt)?;
    Ok(probe_combination(
        p,
        (p.gamma_l * dt).sqrt(),
        (p.gamma_r * dt).sqrt(),
    ))
}

/// Kraus operator for no switch within `dt`.
pub fn p_no_switch(p: &DetectorParams, dt: f64) -> Result<Mat2> {
    check_step(p, dt)?;
    Ok(probe_combination(
        p,
        (1.0 - p.gamma_l * dt).sqrt(),
        (1.0 - p.gamma_r * dt).sqrt(),
    ))
}

/// Free precession `diag(e^{iE dt/2}, e^{-iE dt/2})`.
pub fn u_ham(p: &DetectorParams, dt: f64) -> Mat2 {
    let phase = 0.5 * p.energy * dt;
    Mat2::diag(Complex::from_polar(1.0, phase), Complex::from_polar(1.0, -phase))
}

/// Generator of the no-switch propagator, `iE/2 σz - K/2`.
pub fn generator(p: &DetectorParams) -> Mat2 {
    let half_e = I * (0.5 * p.energy);
    let g = Mat2::diag(half_e, -half_e) - rate_matrix(p) * 0.5;
    // pin the symmetric off-diagonal exactly
    Mat2::new(g.a00, g.a01, g.a01, g.a11)
}

/// `exp(G t)` for any 2×2 `G`.
///
/// With `N = G - tr(G)/2` traceless, `N² = μ² I`, so
/// `exp(Gt) = e^{tr t/2} [cosh(μt) I + sinh(μt)/μ N]`. The expression is even in
/// `μ`, which removes any square-root branch choice.
pub fn expm(g: &Mat2, t: f64) -> Mat2 {
    let half_tr = 0.5 * g.trace();
    let n = *g - Mat2::identity() * half_tr;
    let mu2 = n.a00 * n.a00 + n.a01 * n.a10;
    let mu = mu2.sqrt();
    let z = mu * t;
    let (even, odd) = if z.norm() < tol::PROPAGATOR_SERIES {
        let z2 = mu2 * (t * t);
        let e0 = (half_tr * t).exp();
        (
            e0 * (1.0 + z2 * 0.5 + z2 * z2 / 24.0),
            e0 * t * (1.0 + z2 / 6.0 + z2 * z2 / 120.0),
        )
    } else {
        let ep = ((half_tr + mu) * t).exp();
        let em = ((half_tr - mu) * t).exp();
        (0.5 * (ep + em), (ep - em) / (2.0 * mu))
    };
    Mat2::identity() * even + n * odd
}

/// No-switch propagator `U_ns(t) = exp(G t)`, `t ≥ 0`.
pub fn u_ns(p: &DetectorParams, t: f64) -> Mat2 {
    expm(&generator(p), t)
}

/// Switch propagator `U_s(t, dt) = P_s(dt) U_ns(t)`.
pub fn u_s(p: &DetectorParams, t: f64, dt: f64) -> Result<Mat2> {
    Ok(p_switch(p, dt)? * u_ns(p, t))
}

/// `U_ns†(t) U_ns(t)`: the no-switch effect operator.
pub fn no_switch_effect(p: &DetectorParams, t: f64) -> Mat2 {
    let u = u_ns(p, t);
    hermitize(&(u.adjoint() * u))
}

/// `U_ns†(t) K U_ns(t)`: switching-time density operator, `U_s†U_s / dt` as `dt → 0`.
pub fn switch_density_operator(p: &DetectorParams, t: f64) -> Mat2 {
    let u = u_ns(p, t);
    hermitize(&(u.adjoint() * rate_matrix(p) * u))
}

/// Effect operator for a switch anywhere in `[a, b]`: `Q(a) - Q(b)` with `Q = U_ns†U_ns`.
pub fn switch_effect_between(p: &DetectorParams, a: f64, b: f64) -> Mat2 {
    no_switch_effect(p, a) - no_switch_effect(p, b)
}

pub(crate) fn hermitize(m: &Mat2) -> Mat2 {
    let off = 0.5 * (m.a01 + m.a10.conj());
    Mat2::new(m.a00.re.into(), off, off.conj(), m.a11.re.into())
}

/// Probability that the detector has not switched by `t`.
pub fn survival_probability(p: &DetectorParams, rho0: &DensityMatrix, t: f64) -> f64 {
    rho0.expect(&no_switch_effect(p, t)).clamp(0.0, 1.0)
}

/// Switching-time probability density at `t`.
pub fn switch_density(p: &DetectorParams, rho0: &DensityMatrix, t: f64) -> f64 {
    rho0.expect(&switch_density_operator(p, t)).max(0.0)
}

/// Probability of a switch in `[a, b]`, from the exact effect operator.
pub fn switch_probability_between(p: &DetectorParams, rho0: &DensityMatrix, a: f64, b: f64) -> f64 {
    rho0.expect(&switch_effect_between(p, a, b)).max(0.0)
}

/// Largest step the discretized evolution accepts.
pub fn max_euler_step(p: &DetectorParams) -> f64 {
    let scale = p.gamma_plus().max(p.energy);
    if scale > 0.0 {
        tol::EULER_STEP_FRACTION / scale
    } else {
        f64::INFINITY
    }
}

pub(crate) fn check_euler_step(p: &DetectorParams, dt: f64) -> Result<()> {
    check_step(p, dt)?;
    let limit = max_euler_step(p);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "Euler step {dt} exceeds {limit}"
        )));
    }
    Ok(())
}

/// One discretized no-switch step `P_ns(dt) U_Ham(dt)`.
pub fn euler_no_switch_step(p: &DetectorParams, dt: f64) -> Result<Mat2> {
    check_euler_step(p, dt)?;
    Ok(p_no_switch(p, dt)? * u_ham(p, dt))
}

/// Discretized no-switch propagator from `n` equal steps over `[0, t]`.
pub fn euler_no_switch(p: &DetectorParams, t: f64, n: usize) -> Result<Mat2> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let step = euler_no_switch_step(p, t / n as f64)?;
    let mut u = Mat2::identity();
    for _ in 0..n {
        u = step * u;
    }
    Ok(u)
}
