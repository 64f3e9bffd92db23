//! Detector whose internal coherence outlives the qubit precession period.
//!
//! Such a detector sees one effective Hamiltonian per qubit energy eigenstate,
//! with couplings and biases averaged over the probe basis. It therefore
//! measures in the energy eigenbasis `{|0⟩, |1⟩}` only, and every quantity
//! here refers to that basis.

use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{Error, Result};

/// Default saturation cap, in units of `rate_scale`.
pub const DEFAULT_CAP_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoherent", into = "RawCoherent")]
pub struct CoherentDetectorParams {
    g_l: f64,
    g_r: f64,
    eps_l: f64,
    eps_r: f64,
    beta: f64,
    rate_scale: f64,
    gamma1_cap: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoherent {
    #[serde(rename = "g_L")]
    g_l: f64,
    #[serde(rename = "g_R")]
    g_r: f64,
    #[serde(rename = "eps_L")]
    eps_l: f64,
    #[serde(rename = "eps_R")]
    eps_r: f64,
    beta: f64,
    rate_scale: f64,
    #[serde(default)]
    gamma1_cap: Option<f64>,
}

impl TryFrom<RawCoherent> for CoherentDetectorParams {
    type Error = Error;
    fn try_from(r: RawCoherent) -> Result<Self> {
        let cap = r.gamma1_cap.unwrap_or(DEFAULT_CAP_FACTOR * r.rate_scale);
        CoherentDetectorParams::new(r.g_l, r.g_r, r.eps_l, r.eps_r, r.beta, r.rate_scale, cap)
    }
}

impl From<CoherentDetectorParams> for RawCoherent {
    fn from(p: CoherentDetectorParams) -> Self {
        RawCoherent {
            g_l: p.g_l,
            g_r: p.g_r,
            eps_l: p.eps_l,
            eps_r: p.eps_r,
            beta: p.beta,
            rate_scale: p.rate_scale,
            gamma1_cap: Some(p.gamma1_cap),
        }
    }
}

impl CoherentDetectorParams {
    pub fn new(
        g_l: f64,
        g_r: f64,
        eps_l: f64,
        eps_r: f64,
        beta: f64,
        rate_scale: f64,
        gamma1_cap: f64,
    ) -> Result<Self> {
        for (name, v) in [("g_L", g_l), ("g_R", g_r), ("eps_L", eps_l), ("eps_R", eps_r)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
            }
        }
        if !(0.0..=std::f64::consts::PI).contains(&beta) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in [0, pi], got {beta}"
            )));
        }
        for (name, v) in [("rate_scale", rate_scale), ("gamma1_cap", gamma1_cap)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(CoherentDetectorParams {
            g_l,
            g_r,
            eps_l,
            eps_r,
            beta,
            rate_scale,
            gamma1_cap,
        })
    }

    /// Parameters that only fix the angle and the rate scale, with the default cap.
    pub fn with_angle(beta: f64, rate_scale: f64) -> Result<Self> {
        Self::new(1.0, 1.0, 1.0, 0.0, beta, rate_scale, DEFAULT_CAP_FACTOR * rate_scale)
    }

    /// Same detector at another probe angle.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.g_l, self.g_r, self.eps_l, self.eps_r, beta, self.rate_scale, self.gamma1_cap)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rate_scale(&self) -> f64 {
        self.rate_scale
    }

    pub fn gamma1_cap(&self) -> f64 {
        self.gamma1_cap
    }
}

/// Switching rates of the energy eigenstates `|0⟩` and `|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveRates {
    pub gamma_0: f64,
    pub gamma_1: f64,
}

/// Effective couplings and biases seen by each energy eigenstate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveCouplings {
    pub g0: f64,
    pub g1: f64,
    pub eps0: f64,
    pub eps1: f64,
}

fn half_angle_weights(beta: f64) -> (f64, f64) {
    let (s, c) = (0.5 * beta).sin_cos();
    (c * c, s * s)
}

pub fn effective_couplings(p: &CoherentDetectorParams) -> EffectiveCouplings {
    let (c2, s2) = half_angle_weights(p.beta);
    EffectiveCouplings {
        g0: p.g_l * c2 + p.g_r * s2,
        g1: p.g_l * s2 + p.g_r * c2,
        eps0: p.eps_l * c2 + p.eps_r * s2,
        eps1: p.eps_l * s2 + p.eps_r * c2,
    }
}

/// Rates when the `R` coupling dominates: `ΓR (sin⁴, cos⁴)(β/2)`.
pub fn rates_dominant_coupling(p: &CoherentDetectorParams) -> EffectiveRates {
    let (c2, s2) = half_angle_weights(p.beta);
    EffectiveRates {
        gamma_0: p.rate_scale * s2 * s2,
        gamma_1: p.rate_scale * c2 * c2,
    }
}

fn capped(rate: f64, cap: f64) -> f64 {
    if rate.is_finite() {
        rate.min(cap)
    } else {
        cap
    }
}

/// Rates when the bias dominates and the couplings are equal: `ΓR (sec², csc²)(β/2)`,
/// each capped at `gamma1_cap`.
pub fn rates_large_bias(p: &CoherentDetectorParams) -> EffectiveRates {
    let (c2, s2) = half_angle_weights(p.beta);
    EffectiveRates {
        gamma_0: capped(p.rate_scale / c2, p.gamma1_cap),
        gamma_1: capped(p.rate_scale / s2, p.gamma1_cap),
    }
}

/// `Γj = C ḡj² / |ε̄j|` with `C` chosen so that both rates equal `2 ΓR` at `β = π/2`.
pub fn rates_scaling_law(p: &CoherentDetectorParams) -> Result<EffectiveRates> {
    let g_mid = 0.5 * (p.g_l + p.g_r);
    let eps_mid = (0.5 * (p.eps_l + p.eps_r)).abs();
    if g_mid == 0.0 || eps_mid == 0.0 {
        return Err(Error::InvalidParameter(
            "scaling law needs nonzero mean coupling and mean bias".into(),
        ));
    }
    let scale = 2.0 * p.rate_scale * eps_mid / (g_mid * g_mid);
    let e = effective_couplings(p);
    let rate = |g: f64, eps: f64| capped(scale * g * g / eps.abs(), p.gamma1_cap);
    Ok(EffectiveRates {
        gamma_0: rate(e.g0, e.eps0),
        gamma_1: rate(e.g1, e.eps1),
    })
}

/// Energy-basis readout fidelity; `degenerate_rates` marks `Γ0 = Γ1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherentFidelity {
    pub fidelity: f64,
    pub degenerate_rates: bool,
}

/// Best overall fidelity of the energy-basis measurement with rates `(Γ0, Γ1)`.
pub fn coherent_fidelity(r: &EffectiveRates) -> Result<CoherentFidelity> {
    match analysis::case1_overall_fidelity(r.gamma_0, r.gamma_1) {
        Ok(fidelity) => Ok(CoherentFidelity {
            fidelity,
            degenerate_rates: false,
        }),
        Err(Error::DegenerateRates) => Ok(CoherentFidelity {
            fidelity: 0.0,
            degenerate_rates: true,
        }),
        Err(e) => Err(e),
    }
}
