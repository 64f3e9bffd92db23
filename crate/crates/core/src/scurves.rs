//! Switching-probability S-curves for three kinds of detector, and the best
//! readout fidelity each kind reaches as a function of the probe angle.
//!
//! The bare detector switches within a fixed pulse with `γL t = e^{s(x-2)}`
//! and `γR t = e^{s x}` at readout bias `x` and steepness `s`. A qubit state
//! with weight `m` on `|L⟩` combines the two bare curves:
//!
//! * strong coupling: the probabilities are averaged,
//! * weak incoherent coupling: the rates are averaged,
//! * weak coherent coupling: the bias offsets are averaged.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::FidelityCurve;
use crate::error::{Error, Result};
use crate::quad;
use crate::tol;

pub const DEFAULT_STEEPNESS: f64 = 5.0;

/// Bias offset between the `L` and `R` curves.
const OFFSET: f64 = 2.0;

/// Bias window searched for the largest separation.
pub const DEFAULT_X_RANGE: (f64, f64) = (-1.0, 3.0);

const GRID_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Strong,
    WeakIncoherent,
    WeakCoherent,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [
        DetectorKind::Strong,
        DetectorKind::WeakIncoherent,
        DetectorKind::WeakCoherent,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Strong => "strong",
            DetectorKind::WeakIncoherent => "weak_incoherent",
            DetectorKind::WeakCoherent => "weak_coherent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SCurveSpec {
    pub detector_kind: DetectorKind,
    /// `|⟨L|0⟩|²`.
    pub mixing_p: f64,
    /// `(lo, hi, n_points)`.
    pub x_range: (f64, f64, usize),
    /// Multiplies both bare `γ t`.
    #[serde(default = "one")]
    pub pulse: f64,
    #[serde(default = "default_steepness")]
    pub steepness: f64,
}

fn one() -> f64 {
    1.0
}

fn default_steepness() -> f64 {
    DEFAULT_STEEPNESS
}

impl SCurveSpec {
    pub fn new(detector_kind: DetectorKind, mixing_p: f64) -> Self {
        SCurveSpec {
            detector_kind,
            mixing_p,
            x_range: (DEFAULT_X_RANGE.0, DEFAULT_X_RANGE.1, 401),
            pulse: 1.0,
            steepness: DEFAULT_STEEPNESS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mixing_p) {
            return Err(Error::InvalidParameter(format!(
                "mixing_p must lie in [0, 1], got {}",
                self.mixing_p
            )));
        }
        let (lo, hi, n) = self.x_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || n < 2 {
            return Err(Error::InvalidParameter(format!(
                "x_range needs lo < hi and at least 2 points, got ({lo}, {hi}, {n})"
            )));
        }
        for (name, v) in [("pulse", self.pulse), ("steepness", self.steepness)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SCurvePoint {
    pub x: f64,
    #[serde(rename = "pL")]
    pub p_l: f64,
    #[serde(rename = "pR")]
    pub p_r: f64,
    pub p0: f64,
    pub p1: f64,
}

/// `(γL t, γR t)` at bias `x`.
pub fn bare_rates(x: f64, steepness: f64) -> (f64, f64) {
    ((steepness * (x - OFFSET)).exp(), (steepness * x).exp())
}

fn switch_prob(rate_t: f64) -> f64 {
    -(-rate_t).exp_m1()
}

/// `(p0, p1)` for one detector kind at bias `x`.
fn state_probabilities(kind: DetectorKind, m: f64, x: f64, pulse: f64, steepness: f64) -> (f64, f64) {
    let (gl, gr) = bare_rates(x, steepness);
    let (gl, gr) = (gl * pulse, gr * pulse);
    match kind {
        DetectorKind::Strong => {
            let (pl, pr) = (switch_prob(gl), switch_prob(gr));
            (m * pl + (1.0 - m) * pr, (1.0 - m) * pl + m * pr)
        }
        DetectorKind::WeakIncoherent => (
            switch_prob(m * gl + (1.0 - m) * gr),
            switch_prob((1.0 - m) * gl + m * gr),
        ),
        DetectorKind::WeakCoherent => {
            let rate = |shift: f64| pulse * (steepness * (x - OFFSET * shift)).exp();
            (switch_prob(rate(m)), switch_prob(rate(1.0 - m)))
        }
    }
}

pub fn scurve_point(spec: &SCurveSpec, x: f64) -> SCurvePoint {
    let (gl, gr) = bare_rates(x, spec.steepness);
    let (p0, p1) = state_probabilities(spec.detector_kind, spec.mixing_p, x, spec.pulse, spec.steepness);
    SCurvePoint {
        x,
        p_l: switch_prob(gl * spec.pulse),
        p_r: switch_prob(gr * spec.pulse),
        p0,
        p1,
    }
}

pub fn scurve(spec: &SCurveSpec) -> Result<Vec<SCurvePoint>> {
    spec.validate()?;
    let (lo, hi, n) = spec.x_range;
    Ok((0..n)
        .map(|i| {
            let x = if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
            scurve_point(spec, x)
        })
        .collect())
}

/// Largest `|p1 - p0|` over bias and the bias where it occurs.
pub fn max_separation(spec: &SCurveSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let (lo, hi, _) = spec.x_range;
    let (m, kind, pulse, s) = (spec.mixing_p, spec.detector_kind, spec.pulse, spec.steepness);
    Ok(quad::grid_golden_max(
        |x| {
            let (p0, p1) = state_probabilities(kind, m, x, pulse, s);
            (p1 - p0).abs()
        },
        lo,
        hi,
        GRID_POINTS,
        tol::GOLDEN,
    ))
}

/// Best fidelity against the probe angle, with `mixing_p = cos²(β/2)`.
pub fn max_fidelity_vs_beta(kind: DetectorKind, betas: &[f64], steepness: f64) -> Result<FidelityCurve> {
    if let Some(b) = betas.iter().find(|b| !(0.0..=std::f64::consts::FRAC_PI_2).contains(*b)) {
        return Err(Error::InvalidParameter(format!("beta must lie in [0, pi/2], got {b}")));
    }
    let pts = betas
        .par_iter()
        .map(|&beta| {
            let mut spec = SCurveSpec::new(kind, (0.5 * beta).cos().powi(2));
            spec.steepness = steepness;
            max_separation(&spec).map(|(_, f)| (beta, f.clamp(0.0, 1.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    FidelityCurve::new(kind.name(), pts)
}

/// Writes `x,pL,pR,p0,p1` rows.
pub fn write_scurve_csv<W: Write>(mut w: W, points: &[SCurvePoint]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidParameter(format!("write failed: {e}"));
    writeln!(w, "x,pL,pR,p0,p1").map_err(io)?;
    for p in points {
        writeln!(w, "{},{},{},{},{}", p.x, p.p_l, p.p_r, p.p0, p.p1).map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::dark_state_max_fidelity;
    use std::f64::consts::FRAC_PI_3;

    #[test]
    fn bare_rate_examples() {
        let (l, r) = bare_rates(0.0, 5.0);
        assert!((l - (-10f64).exp()).abs() < 1e-18 && r == 1.0);
        let (l, r) = bare_rates(2.0, 5.0);
        assert!(l == 1.0 && (r - 10f64.exp()).abs() < 1e-9);
        for x in [-1.0, 0.3, 1.7, 3.0] {
            let (l, r) = bare_rates(x, 5.0);
            assert!((r / l / 10f64.exp() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_mixing_gives_bare_curves() {
        for kind in DetectorKind::ALL {
            let mut spec = SCurveSpec::new(kind, 1.0);
            spec.x_range = (-1.0, 3.0, 41);
            for p in scurve(&spec).unwrap() {
                assert!((p.p0 - p.p_l).abs() < 1e-12, "{kind:?} at {}", p.x);
                assert!((p.p1 - p.p_r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_mixing_gives_no_separation() {
        for kind in DetectorKind::ALL {
            let spec = SCurveSpec::new(kind, 0.5);
            for p in scurve(&spec).unwrap() {
                assert!((p.p0 - p.p1).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn strong_mixing_at_saturated_bias() {
        let mut spec = SCurveSpec::new(DetectorKind::Strong, 0.7);
        spec.steepness = 20.0;
        let p = scurve_point(&spec, 1.0);
        assert!(p.p_l < 1e-8 && p.p_r == 1.0);
        let (q0, q1) = (0.7 * p.p_l + 0.3 * p.p_r, 0.3 * p.p_l + 0.7 * p.p_r);
        assert!((p.p0 - q0).abs() < 1e-15 && (p.p1 - q1).abs() < 1e-15);
        assert!((p.p0 - 0.3).abs() < 1e-8 && (p.p1 - 0.7).abs() < 1e-8);
    }

    #[test]
    fn strong_separation_bounded_by_mixing() {
        let spec = SCurveSpec::new(DetectorKind::Strong, 0.7);
        for p in scurve(&spec).unwrap() {
            assert!((p.p1 - p.p0).abs() <= 0.4 + 1e-12);
        }
    }

    #[test]
    fn weak_incoherent_matches_closed_form() {
        let curve = max_fidelity_vs_beta(DetectorKind::WeakIncoherent, &[FRAC_PI_3], 5.0).unwrap();
        let f = curve.points()[0].1;
        assert!((f - 0.38490).abs() < 1e-3, "{f}");
        assert!((f - dark_state_max_fidelity(FRAC_PI_3)).abs() < 1e-3);
    }

    #[test]
    fn steeper_coherent_detector_reads_better() {
        let a = max_fidelity_vs_beta(DetectorKind::WeakCoherent, &[FRAC_PI_3], 5.0).unwrap();
        let b = max_fidelity_vs_beta(DetectorKind::WeakCoherent, &[FRAC_PI_3], 10.0).unwrap();
        let w = max_fidelity_vs_beta(DetectorKind::WeakIncoherent, &[FRAC_PI_3], 5.0).unwrap();
        assert!(a.points()[0].1 > w.points()[0].1);
        assert!(b.points()[0].1 > a.points()[0].1);
        let c = max_fidelity_vs_beta(DetectorKind::WeakCoherent, &[FRAC_PI_3], 200.0).unwrap();
        assert!(c.points()[0].1 > 0.999);
    }

    #[test]
    fn rejects_bad_spec() {
        let mut spec = SCurveSpec::new(DetectorKind::Strong, 1.2);
        assert!(scurve(&spec).is_err());
        spec.mixing_p = 0.5;
        spec.x_range = (0.0, 1.0, 1);
        assert!(scurve(&spec).is_err());
        assert!(max_fidelity_vs_beta(DetectorKind::Strong, &[2.0], 5.0).is_err());
    }
}
