//! End-to-end reproduction checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any of them fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qswitch::analysis::{self, decompose, outcome_fidelity, RegimeGuard};
use qswitch::coherent::{self, CoherentDetectorParams, EffectiveRates};
use qswitch::detector::{self, DetectorParams};
use qswitch::qmatrix::purity;
use qswitch::scurves::{self, DetectorKind, SCurveSpec};
use qswitch::tomography::{self, BlochComponents, FitBounds, FitInit, FreeMask};
use qswitch::trajectory::{self, expected_probabilities, run_trajectory, Histogram, SimConfig, SimMethod};
use qswitch::{quad, Complex, DensityMatrix, Mat2, PureState};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn params(gl: f64, gr: f64, beta: f64, e: f64) -> DetectorParams {
    DetectorParams::new(gl, gr, beta, e).unwrap()
}

/// Outcome fidelity of a switch at `t`, from the exact propagator.
fn switch_fidelity_exact(p: &DetectorParams, t: f64) -> f64 {
    let dt = 1e-6 / p.max_rate();
    outcome_fidelity(&decompose(&detector::u_s(p, t, dt).unwrap()).unwrap()).unwrap()
}

fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn azimuth(s: &PureState) -> f64 {
    let (a, b) = s.amplitudes();
    (b * a.conj()).arg()
}

fn switch_time_fidelity() -> Outcome {
    let start = Instant::now();
    let p = params(1.0, 10.0, 0.0, 30.0);
    let tau0 = analysis::case1_tau0(&p).unwrap();
    let tau0_ok = (tau0 - 10f64.ln() / 9.0).abs() < 1e-12;
    let f0 = analysis::case1_switch_fidelity(&p, 0.0).unwrap();
    let f_tau0 = analysis::case1_switch_fidelity(&p, tau0).unwrap();
    let late = (1..=400)
        .map(|i| 5.0 * tau0 * (1.0 + i as f64 / 40.0))
        .map(|t| analysis::case1_switch_fidelity(&p, t).unwrap())
        .fold(f64::INFINITY, f64::min);
    // closed form against the propagator
    let mismatch = (0..=60)
        .map(|i| 6.0 * tau0 * i as f64 / 60.0)
        .map(|t| (analysis::case1_switch_fidelity(&p, t).unwrap() - switch_fidelity_exact(&p, t)).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    check(
        tau0_ok && (f0 - 9.0 / 11.0).abs() < 1e-9 && f_tau0.abs() < 1e-9 && late > 0.999 && mismatch < 1e-9 && secs < 1.0,
        format!("F(0) = {f0:.12}, F(tau0) = {f_tau0:.2e}, min F(t > 5 tau0) = {late:.6}, propagator mismatch {mismatch:.1e}, {secs:.3} s"),
    )
}

fn overall_fidelity_vs_ratio() -> Outcome {
    let expected = 10f64.powf(-1.0 / 9.0) - 10f64.powf(-10.0 / 9.0);
    let curve = analysis::overall_fidelity_curve(&[1.0, 10.0, 1e6]).unwrap();
    let f = curve.points();
    let p = params(1.0, 10.0, 0.0, 30.0);
    let tau0 = analysis::case1_tau0(&p).unwrap();
    let pulse = analysis::case1_pulse_fidelity(&p, tau0).unwrap();
    let resolved = analysis::overall_fidelity_numeric(&p, 60.0, true).unwrap();
    let unresolved = analysis::overall_fidelity_numeric(&p, tau0, false).unwrap();
    check(
        (f[1].1 - expected).abs() < 1e-6
            && f[0].1 == 0.0
            && f[2].1 > 0.99
            && (resolved - pulse).abs() < 1e-6
            && (unresolved - pulse).abs() < 1e-6,
        format!(
            "F(1) = {}, F(10) = {:.8} (expected {expected:.8}), F(1e6) = {:.6}, time-resolved {resolved:.8} vs pulse at tau0 {pulse:.8}",
            f[0].1, f[1].1, f[2].1
        ),
    )
}

fn dark_state_fidelity() -> Outcome {
    let near_zero = analysis::dark_state_max_fidelity(1e-9);
    let at_third = analysis::dark_state_max_fidelity(FRAC_PI_3);
    let at_half = analysis::dark_state_max_fidelity(FRAC_PI_2);
    let expected = 2.0 / (3.0 * 3f64.sqrt());
    // numerical optimum of the pulse length for a slow detector with γL = 0
    let numeric = analysis::case3_max_fidelity_numeric(&params(0.0, 1.0, FRAC_PI_3, 1e4), RegimeGuard::Enforce)
        .unwrap()
        .1;
    check(
        (near_zero - 1.0).abs() < 1e-6
            && (at_third - expected).abs() < 1e-6
            && (at_third - 0.38490).abs() < 1e-5
            && at_half.abs() < 1e-6
            && (numeric - at_third).abs() < 1e-6,
        format!("F(1e-9) = {near_zero:.9}, F(pi/3) = {at_third:.8} (numeric {numeric:.8}), F(pi/2) = {at_half:.2e}"),
    )
}

fn degeneracy_point() -> Outcome {
    let (gl, gr) = (1.0, 10.0);
    let gp = 0.5 * (gl + gr);
    let p = params(gl, gr, FRAC_PI_2, 100.0 * gp);
    let expected = (gr - gl) / (gr + gl);
    let ts: Vec<f64> = (0..=500).map(|i| 5.0 / gp * i as f64 / 500.0).collect();
    let fs: Vec<f64> = ts.iter().map(|&t| switch_fidelity_exact(&p, t)).collect();
    let deviation = fs.iter().map(|f| (f - expected).abs()).fold(0.0, f64::max);
    let spread = fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - fs.iter().cloned().fold(f64::INFINITY, f64::min);
    let unresolved = (1..=100)
        .map(|i| analysis::overall_fidelity_numeric(&p, 0.05 * i as f64 / gp, false).unwrap())
        .fold(0.0, f64::max);
    let unresolved_late = analysis::overall_fidelity_numeric(&p, 5.0 / gp, false).unwrap();
    check(
        deviation < 1e-3 && spread < 1e-3 && unresolved < 1e-3,
        format!(
            "per-switch |F - 9/11| max {deviation:.2e}, spread {spread:.2e}; unresolved max over pulses {unresolved:.2e} ({unresolved_late:.2e} at 5/gamma_plus)"
        ),
    )
}

fn unit_fidelity_spiral() -> Outcome {
    let p = params(0.0, 1.0, FRAC_PI_4, 100.0);
    let precession = analysis::effective_precession(&p);
    let dt = 1e-6;
    let mut worst_fidelity = 1.0f64;
    let mut worst_phase = 0.0f64;
    for k in 1..=50 {
        let t = 0.1 * k as f64;
        let d = decompose(&detector::u_s(&p, t, dt).unwrap()).unwrap();
        worst_fidelity = worst_fidelity.min(outcome_fidelity(&d).unwrap());
        // ψ1 is the state that switches; the other one starts as |L⟩
        worst_phase = worst_phase.max(wrap_angle(azimuth(&d.psi2) - precession * t).abs());
    }
    check(
        worst_fidelity >= 1.0 - 1e-6 && worst_phase < 1e-4,
        format!("min fidelity {worst_fidelity:.10}, max azimuth error {worst_phase:.2e} rad"),
    )
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let p = params(1.0, 10.0, PI / 5.0, 30.0);
    let rho = BlochComponents::new(0.3, -0.4, 0.5).density_matrix().unwrap();
    let cfg = SimConfig::exact(100_000, 1.0, 0, 50);
    let h = trajectory::run_ensemble(&p, &rho, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let chi2 = trajectory::chi2_vs_analytic(&h, &p, &rho).unwrap();
    let s = detector::survival_probability(&p, &rho, 1.0);
    let n = h.total as f64;
    let frac = h.no_switch_count as f64 / n;
    let sigma = (s * (1.0 - s) / n).sqrt();
    check(
        chi2.p_value > 0.001 && (frac - s).abs() <= 4.0 * sigma && secs < 10.0,
        format!(
            "chi2 = {:.1} / {} dof, p = {:.3}; no-switch {frac:.5} vs S = {s:.5} ({:.2} sigma); {secs:.2} s",
            chi2.statistic,
            chi2.dof,
            chi2.p_value,
            (frac - s).abs() / sigma
        ),
    )
}

fn completeness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = params(
            rng.random_range(0.0..20.0),
            rng.random_range(0.0..20.0),
            rng.random_range(0.0..=PI),
            rng.random_range(0.0..50.0),
        );
        let t = rng.random_range(0.0..10.0) / p.gamma_plus().max(p.energy()).max(1.0);
        let switched: Mat2 = quad::integrate(|s| detector::switch_density_operator(&p, s), 0.0, t, 1e-10).unwrap();
        let total = detector::no_switch_effect(&p, t) + switched;
        worst = worst.max(total.dist(&Mat2::identity()));
    }
    check(worst < 1e-8, format!("max deviation from identity {worst:.2e} over 100 parameter sets"))
}

/// Multinomial draw of `n` records from the exact cell probabilities.
fn synthetic(p: &DetectorParams, b: &BlochComponents, tau: f64, n_bins: usize, n: u64, seed: u64) -> Histogram {
    let mut h = Histogram::uniform(tau, n_bins);
    let (bins, stay) = expected_probabilities(&h, p, &b.density_matrix().unwrap());
    let mut cdf = Vec::with_capacity(n_bins + 1);
    let mut acc = 0.0;
    for q in bins.iter().chain(std::iter::once(&stay)) {
        acc += q;
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let u = rng.random::<f64>() * acc;
        let cell = cdf.partition_point(|&c| c <= u).min(n_bins);
        if cell == n_bins {
            h.no_switch_count += 1;
        } else {
            h.counts[cell] += 1;
        }
    }
    h.total = n;
    h
}

fn tomography_round_trip() -> Outcome {
    let start = Instant::now();
    let p = params(1.0, 10.0, PI / 5.0, 30.0);
    let truth = BlochComponents::new(0.3, -0.4, 0.5);
    let h = synthetic(&p, &truth, 1.0, 100, 1_000_000, 11);
    let r = tomography::fit(&h, Some(&p), &FitInit::default(), &FitBounds::around(&p, 0.5)).unwrap();
    let mut within = true;
    let mut parts = Vec::new();
    for (name, want, got) in [("x", truth.x, r.bloch.x), ("y", truth.y, r.bloch.y), ("z", truth.z, r.bloch.z)] {
        let s = r.sigma(name).unwrap();
        within &= (got - want).abs() <= 0.02 && (got - want).abs() <= 3.0 * s;
        parts.push(format!("{name} = {got:.4} +- {s:.4}"));
    }
    let flagged = [
        params(1.0, 10.0, 0.0, 30.0),
        params(1.0, 10.0, FRAC_PI_2, 30.0),
        params(100.0, 100.0, 0.6, 1.0),
    ]
    .iter()
    .all(|q| !tomography::identifiability(q, &FreeMask::state_only()).unwrap().is_identifiable());
    let regular = tomography::identifiability(&p, &FreeMask::state_only()).unwrap().is_identifiable();
    let secs = start.elapsed().as_secs_f64();
    check(
        within && flagged && regular && secs < 60.0,
        format!("{}; special cases flagged: {flagged}; {secs:.2} s", parts.join(", ")),
    )
}

fn coherent_rates() -> Outcome {
    let fid = |r: &EffectiveRates| coherent::coherent_fidelity(r).unwrap();
    let at = |beta: f64| CoherentDetectorParams::with_angle(beta, 1.0).unwrap();
    let dom_half = fid(&coherent::rates_dominant_coupling(&at(FRAC_PI_2)));
    let big_half = fid(&coherent::rates_large_bias(&at(FRAC_PI_2)));
    let dom_zero = fid(&coherent::rates_dominant_coupling(&at(1e-6)));
    let dom_third = fid(&coherent::rates_dominant_coupling(&at(FRAC_PI_3)));
    let expected = 9f64.powf(-1.0 / 8.0) - 9f64.powf(-9.0 / 8.0);
    check(
        dom_half.fidelity < 1e-12
            && big_half.fidelity < 1e-12
            && dom_zero.fidelity > 1.0 - 1e-9
            && (dom_third.fidelity - expected).abs() < 1e-9
            && (dom_third.fidelity - 0.6754).abs() < 5e-5,
        format!(
            "pi/2: {:.1e} / {:.1e}; beta -> 0: {:.12}; pi/3: {:.6} (ratio-9 formula {expected:.6})",
            dom_half.fidelity, big_half.fidelity, dom_zero.fidelity, dom_third.fidelity
        ),
    )
}

fn scurve_fidelities() -> Outcome {
    let start = Instant::now();
    // strong kind: separation factorizes as cosβ times the bare S-curve separation
    let bare = |steep: f64| {
        let mut s = SCurveSpec::new(DetectorKind::Strong, 1.0);
        s.steepness = steep;
        scurves::max_separation(&s).unwrap().1
    };
    let mut strong_ok = true;
    let mut strong_dev = 0.0f64;
    for beta in [0.2f64, 0.6, 1.0, 1.3] {
        let m = (0.5 * beta).cos().powi(2);
        let mut spec = SCurveSpec::new(DetectorKind::Strong, m);
        let sep = scurves::max_separation(&spec).unwrap().1;
        strong_ok &= (sep - beta.cos() * bare(spec.steepness)).abs() < 1e-12;
        spec.steepness = 20.0;
        let sharp = scurves::max_separation(&spec).unwrap().1;
        strong_dev = strong_dev.max((sharp - beta.cos()).abs());
    }
    strong_ok &= strong_dev < 1e-12;

    let betas: Vec<f64> = (0..100).map(|i| (FRAC_PI_2 * i as f64 / 99.0).min(FRAC_PI_2)).collect();
    let weak = scurves::max_fidelity_vs_beta(DetectorKind::WeakIncoherent, &betas, 5.0).unwrap();
    let coh5 = scurves::max_fidelity_vs_beta(DetectorKind::WeakCoherent, &betas, 5.0).unwrap();
    let coh10 = scurves::max_fidelity_vs_beta(DetectorKind::WeakCoherent, &betas, 10.0).unwrap();
    // bare rates at steepness 5 have γL/γR = e^{-10}
    let weak_dev = weak
        .points()
        .iter()
        .map(|&(beta, f)| {
            let p = params((-10f64).exp(), 1.0, beta, 1e6);
            let closed = match analysis::case3_max_fidelity(&p, RegimeGuard::Override) {
                Ok((_, v)) => v,
                Err(_) => 0.0,
            };
            (f - closed).abs()
        })
        .fold(0.0, f64::max);
    let coh_over_weak = coh5.points().iter().zip(weak.points()).all(|(c, w)| c.1 >= w.1 - 1e-12);
    let interior = 1..betas.len() - 1;
    let steeper = interior.clone().all(|i| coh10.points()[i].1 > coh5.points()[i].1);
    let secs = start.elapsed().as_secs_f64();
    check(
        strong_ok && weak_dev < 1e-6 && coh_over_weak && steeper && secs < 5.0,
        format!(
            "strong |sep - cos b| {strong_dev:.1e} (sharp S-curves); weak vs closed form {weak_dev:.1e}; coherent >= weak: {coh_over_weak}; steeper better: {steeper}; {secs:.2} s"
        ),
    )
}

fn random_matrix(rng: &mut ChaCha8Rng) -> Mat2 {
    let mut c = || Complex::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    Mat2::new(c(), c(), c(), c())
}

fn purity_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_gap = 0.0f64;
    for _ in 0..1000 {
        let u = random_matrix(&mut rng);
        let (f, pur) = analysis::purity_equals_fidelity_check(&u).unwrap();
        worst_gap = worst_gap.max((f - pur).abs());
    }
    let mut worst_purity = 0.0f64;
    for i in 0..1000u64 {
        let p = params(
            rng.random_range(0.0..20.0),
            rng.random_range(0.0..20.0),
            rng.random_range(0.0..=PI),
            rng.random_range(0.0..50.0),
        );
        let (theta, phi) = (rng.random_range(0.0..PI), rng.random_range(0.0..2.0 * PI));
        let (s, c) = (0.5 * theta).sin_cos();
        let psi = PureState::from_unnormalized(c.into(), Complex::from_polar(s, phi)).unwrap();
        let scale = p.gamma_plus().max(p.energy()).max(1.0);
        let mut cfg = SimConfig::exact(1, 3.0 / scale, i, 4);
        if i % 2 == 1 {
            cfg.method = SimMethod::EulerStep { dt: 0.01 / scale };
        }
        let out = run_trajectory(&p, &DensityMatrix::from_pure(&psi), &cfg, 0).unwrap();
        worst_purity = worst_purity.max((purity(&out.final_state).unwrap() - 1.0).abs());
    }
    check(
        worst_gap < 1e-8 && worst_purity < 1e-8,
        format!("max |fidelity - purity| {worst_gap:.1e}; max purity loss {worst_purity:.1e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("switching-time fidelity, aligned probe", switch_time_fidelity),
        ("overall fidelity against rate ratio", overall_fidelity_vs_ratio),
        ("dark-state optimum against angle", dark_state_fidelity),
        ("degeneracy point, fast precession", degeneracy_point),
        ("unit fidelity and spiralling basis", unit_fidelity_spiral),
        ("Monte Carlo against analytic density", monte_carlo),
        ("operator completeness", completeness),
        ("tomography round trip", tomography_round_trip),
        ("coherent detector rates", coherent_rates),
        ("S-curve fidelities", scurve_fidelities),
        ("purity and fidelity properties", purity_properties),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} {:>2} {name}: {}", i + 1, out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
