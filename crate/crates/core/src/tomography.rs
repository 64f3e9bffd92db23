//! Single-setting state tomography from switching-time histograms.
//!
//! For a slow detector the record measures the qubit in a basis that depends
//! on when the switch happened, so the switching-time distribution alone
//! carries all three Bloch components. The probability of a switch in
//! `[a, b]` is `Tr{(Q(a) - Q(b)) ρ0}` with `Q = U_ns†U_ns`, linear in the
//! Bloch vector; the detector parameters enter nonlinearly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{effective_precession, RegimeGuard};
use crate::detector::{self, DetectorParams};
use crate::error::{Error, Result};
use crate::qmatrix::{Complex, DensityMatrix, Mat2};
use crate::tol;
use crate::trajectory::Histogram;

/// Bloch components with `z = ρ11 - ρ00`, `x = ρ10 + ρ01`, `y = (ρ10 - ρ01)/i`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlochComponents {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochComponents {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        BlochComponents { x, y, z }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn check(&self) -> Result<()> {
        let r2 = self.norm_sqr();
        if !(r2 <= 1.0 + tol::BLOCH) {
            return Err(Error::UnphysicalBloch(r2));
        }
        Ok(())
    }

    /// `(I + x σx + y σy - z σz) / 2` without positivity checks.
    pub fn matrix(&self) -> Mat2 {
        Mat2::new(
            (0.5 * (1.0 - self.z)).into(),
            Complex::new(0.5 * self.x, -0.5 * self.y),
            Complex::new(0.5 * self.x, 0.5 * self.y),
            (0.5 * (1.0 + self.z)).into(),
        )
    }

    pub fn density_matrix(&self) -> Result<DensityMatrix> {
        self.check()?;
        let r = self.norm_sqr().sqrt();
        let b = if r > 1.0 { self.scaled(1.0 / r) } else { *self };
        DensityMatrix::new(b.matrix())
    }

    pub fn from_density(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        BlochComponents {
            x: (m.a10 + m.a01).re,
            y: ((m.a10 - m.a01) / Complex::new(0.0, 1.0)).re,
            z: (m.a11 - m.a00).re,
        }
    }

    fn scaled(&self, s: f64) -> Self {
        BlochComponents::new(self.x * s, self.y * s, self.z * s)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Weights `(w0, wx, wy, wz)` with `Tr{A ρ} = w0 + wx x + wy y + wz z` for Hermitian `A`.
fn bloch_weights(a: &Mat2) -> [f64; 4] {
    let [w0, wx, wy, wz] = a.pauli_coefficients();
    [w0.re, wx.re, wy.re, -wz.re]
}

fn linear_form(w: &[f64; 4], b: &BlochComponents) -> f64 {
    w[0] + w[1] * b.x + w[2] * b.y + w[3] * b.z
}

/// Exact switching-time density for the state with Bloch components `b`.
pub fn model_density(p: &DetectorParams, b: &BlochComponents, t: f64) -> Result<f64> {
    b.check()?;
    let w = bloch_weights(&detector::switch_density_operator(p, t));
    Ok(linear_form(&w, b).max(0.0))
}

/// Slow-detector asymptotic form of [`model_density`]:
///
/// `e^{-γ+ t} [ρ00 e^{γ- t cosβ}(γ+ - γ- cosβ) + ρ11 e^{-γ- t cosβ}(γ+ + γ- cosβ)
///  - γ- sinβ (x cos Ẽt + y sin Ẽt)]`.
pub fn model_density_asymptotic(
    p: &DetectorParams,
    b: &BlochComponents,
    t: f64,
    guard: RegimeGuard,
) -> Result<f64> {
    b.check()?;
    if guard == RegimeGuard::Enforce && p.energy() < tol::SLOW_REGIME_RATIO * p.gamma_plus() {
        return Err(Error::WrongRegime(format!(
            "asymptotic density needs E >= {} gamma_plus",
            tol::SLOW_REGIME_RATIO
        )));
    }
    let (gp, gm) = (p.gamma_plus(), p.gamma_minus());
    let (sb, cb) = p.beta().sin_cos();
    let phase = effective_precession(p) * t;
    let rho00 = 0.5 * (1.0 - b.z);
    let rho11 = 0.5 * (1.0 + b.z);
    let up = (-(gp - gm * cb) * t).exp();
    let down = (-(gp + gm * cb) * t).exp();
    let coherent = gm * sb * (b.x * phase.cos() + b.y * phase.sin()) * (-gp * t).exp();
    Ok(rho00 * up * (gp - gm * cb) + rho11 * down * (gp + gm * cb) - coherent)
}

/// Names of the fit coordinates, in order.
pub const PARAMETER_NAMES: [&str; 7] = ["x", "y", "z", "gamma_L", "gamma_R", "beta", "E"];

/// Which coordinates are free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeMask {
    pub bloch: [bool; 3],
    pub params: [bool; 4],
}

impl FreeMask {
    /// Bloch components free, detector parameters fixed.
    pub fn state_only() -> Self {
        FreeMask {
            bloch: [true; 3],
            params: [false; 4],
        }
    }

    pub fn all() -> Self {
        FreeMask {
            bloch: [true; 3],
            params: [true; 4],
        }
    }

    fn flags(&self) -> [bool; 7] {
        let mut f = [false; 7];
        f[..3].copy_from_slice(&self.bloch);
        f[3..].copy_from_slice(&self.params);
        f
    }

    fn indices(&self) -> Vec<usize> {
        self.flags()
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect()
    }
}

/// Rank analysis of the switching-time model at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityReport {
    /// Singular values of the column-normalized sensitivity matrix, descending.
    pub singular_values: Vec<f64>,
    /// Coordinates with weight in a (near-)null direction.
    pub degenerate: Vec<String>,
    /// `γ+ ≥ 10 E`: coherences decay before they precess and are not recoverable
    /// in practice even where the exact model keeps full rank.
    pub fast_switching: bool,
}

impl IdentifiabilityReport {
    pub fn is_identifiable(&self) -> bool {
        self.degenerate.is_empty()
    }
}

fn param_vector(p: &DetectorParams) -> [f64; 4] {
    [p.gamma_l(), p.gamma_r(), p.beta(), p.energy()]
}

fn params_from(v: &[f64; 4]) -> Result<DetectorParams> {
    DetectorParams::new(v[0], v[1], v[2], v[3])
}

fn fd_step(value: f64, index: usize) -> f64 {
    if index == 2 {
        1e-6
    } else {
        1e-6 * value.abs().max(1e-3)
    }
}

/// Perturbs one detector parameter, staying inside its valid domain.
fn perturbed(p: &[f64; 4], k: usize, h: f64) -> Result<(DetectorParams, DetectorParams, f64)> {
    let upper = if k == 2 { std::f64::consts::PI } else { f64::INFINITY };
    let mut hi = *p;
    let mut lo = *p;
    hi[k] = (p[k] + h).min(upper);
    lo[k] = (p[k] - h).max(0.0);
    let span = hi[k] - lo[k];
    Ok((params_from(&hi)?, params_from(&lo)?, span))
}

fn sensitivity_grid(p: &DetectorParams) -> Vec<f64> {
    let rate = p.gamma_plus().max(1e-3 * p.energy()).max(1e-12);
    let horizon = 5.0 / rate;
    let oscillations = effective_precession(p).abs() * horizon / (2.0 * std::f64::consts::PI);
    let n = ((20.0 * oscillations).ceil() as usize).clamp(200, 5000);
    (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect()
}

/// Identifiability of the free coordinates at `p`, evaluated at a generic interior state.
pub fn identifiability(p: &DetectorParams, free: &FreeMask) -> Result<IdentifiabilityReport> {
    identifiability_at(p, &BlochComponents::new(0.3, -0.4, 0.5), free)
}

/// Identifiability of the free coordinates at `(p, b)`.
pub fn identifiability_at(p: &DetectorParams, b: &BlochComponents, free: &FreeMask) -> Result<IdentifiabilityReport> {
    b.check()?;
    let cols = free.indices();
    let grid = sensitivity_grid(p);
    let pv = param_vector(p);
    let mut jac = DMatrix::<f64>::zeros(grid.len(), cols.len());
    for (i, &t) in grid.iter().enumerate() {
        let w = bloch_weights(&detector::switch_density_operator(p, t));
        for (j, &c) in cols.iter().enumerate() {
            jac[(i, j)] = if c < 3 {
                w[c + 1]
            } else {
                let k = c - 3;
                let (hi, lo, span) = perturbed(&pv, k, fd_step(pv[k], k))?;
                let fh = linear_form(&bloch_weights(&detector::switch_density_operator(&hi, t)), b);
                let fl = linear_form(&bloch_weights(&detector::switch_density_operator(&lo, t)), b);
                (fh - fl) / span
            };
        }
    }
    let mut degenerate: Vec<usize> = Vec::new();
    let mut live = Vec::new();
    for (j, &c) in cols.iter().enumerate() {
        let norm = jac.column(j).norm();
        let scale = grid
            .iter()
            .map(|&t| detector::switch_density_operator(p, t).max_abs())
            .fold(0.0, f64::max)
            * (grid.len() as f64).sqrt();
        if norm <= tol::RANK * scale.max(f64::MIN_POSITIVE) {
            degenerate.push(c);
        } else {
            jac.column_mut(j).unscale_mut(norm);
            live.push(j);
        }
    }
    let reduced = jac.select_columns(&live);
    let mut singular_values = Vec::new();
    if !live.is_empty() {
        let svd = reduced.clone().svd(false, true);
        let mut sv: Vec<(f64, usize)> = svd.singular_values.iter().copied().zip(0..).collect();
        sv.sort_by(|a, b| b.0.total_cmp(&a.0));
        let smax = sv[0].0;
        let v_t = svd.v_t.expect("requested");
        for &(s, row) in &sv {
            if s < tol::RANK * smax {
                for (j, &col) in live.iter().enumerate() {
                    if v_t[(row, j)].abs() > 0.1 && !degenerate.contains(&cols[col]) {
                        degenerate.push(cols[col]);
                    }
                }
            }
        }
        singular_values = sv.iter().map(|s| s.0).collect();
    }
    let fast_switching = p.gamma_plus() >= tol::FAST_SWITCHING_RATIO * p.energy();
    if fast_switching {
        for c in [0, 1] {
            if cols.contains(&c) && !degenerate.contains(&c) {
                degenerate.push(c);
            }
        }
    }
    degenerate.sort_unstable();
    Ok(IdentifiabilityReport {
        singular_values,
        degenerate: degenerate.iter().map(|&c| PARAMETER_NAMES[c].to_string()).collect(),
        fast_switching,
    })
}

/// Box constraints on the detector parameters when they are fitted.
/// A bound with equal ends holds that parameter at the given value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBounds {
    #[serde(rename = "gamma_L")]
    pub gamma_l: [f64; 2],
    #[serde(rename = "gamma_R")]
    pub gamma_r: [f64; 2],
    pub beta: [f64; 2],
    #[serde(rename = "E")]
    pub energy: [f64; 2],
}

impl FitBounds {
    fn rows(&self) -> [[f64; 2]; 4] {
        [self.gamma_l, self.gamma_r, self.beta, self.energy]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in PARAMETER_NAMES[3..].iter().zip(self.rows()) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return Err(Error::InvalidParameter(format!("empty or invalid bounds for {name}: [{lo}, {hi}]")));
            }
        }
        if self.beta[1] > std::f64::consts::PI {
            return Err(Error::InvalidParameter("beta bound exceeds pi".into()));
        }
        Ok(())
    }

    /// Indices (into `gamma_L, gamma_R, beta, E`) of the parameters left free.
    pub fn free_parameters(&self) -> Vec<usize> {
        self.rows().iter().enumerate().filter_map(|(k, [lo, hi])| (lo < hi).then_some(k)).collect()
    }

    /// Bounds of ±`frac` around `p` (clipped to the valid domain).
    pub fn around(p: &DetectorParams, frac: f64) -> Self {
        let span = |v: f64, cap: f64| [(v * (1.0 - frac)).max(0.0), (v * (1.0 + frac)).min(cap).max(v * (1.0 - frac) + 1e-9)];
        FitBounds {
            gamma_l: span(p.gamma_l(), f64::MAX),
            gamma_r: span(p.gamma_r(), f64::MAX),
            beta: span(p.beta(), std::f64::consts::PI),
            energy: span(p.energy(), f64::MAX),
        }
    }
}

/// Starting point and multi-start settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitInit {
    pub bloch: BlochComponents,
    /// Initial detector parameters when they are free; the box centre otherwise.
    pub params: Option<DetectorParams>,
    pub seed: u64,
    pub n_starts: usize,
    pub max_iter: usize,
}

impl Default for FitInit {
    fn default() -> Self {
        FitInit {
            bloch: BlochComponents::default(),
            params: None,
            seed: 0,
            n_starts: 8,
            max_iter: 200,
        }
    }
}

/// Reconstructed state and parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TomographyResult {
    pub bloch: BlochComponents,
    pub params: DetectorParams,
    /// Names of the fitted coordinates, in covariance order.
    pub free: Vec<String>,
    /// Covariance of the fitted coordinates, row-major.
    pub covariance: Vec<f64>,
    pub converged: bool,
    /// Poisson deviance at the optimum.
    pub chi2: f64,
    pub dof: usize,
}

impl TomographyResult {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Standard error of a fitted coordinate by name.
    pub fn sigma(&self, name: &str) -> Option<f64> {
        let n = self.n_free();
        let i = self.free.iter().position(|f| f == name)?;
        Some(self.covariance[i * n + i].max(0.0).sqrt())
    }
}

/// Unconstrained Bloch coordinates mapped radially into the unit ball.
fn clamp_ball(v: [f64; 3]) -> [f64; 3] {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if r > 1.0 {
        [v[0] / r, v[1] / r, v[2] / r]
    } else {
        v
    }
}

struct Problem<'a> {
    hist: &'a Histogram,
    observed: Vec<f64>,
    /// Detector parameters, of which `free` are overwritten by the fit.
    base: DetectorParams,
    free: Vec<usize>,
    bounds: Option<FitBounds>,
    /// Bloch weights per cell when no detector parameter is free.
    fixed_weights: Option<Vec<[f64; 4]>>,
}

struct Eval {
    mu: Vec<f64>,
    jac: DMatrix<f64>,
    deviance: f64,
}

impl<'a> Problem<'a> {
    fn new(hist: &'a Histogram, base: DetectorParams, bounds: Option<FitBounds>) -> Self {
        let mut observed: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
        observed.push(hist.no_switch_count as f64);
        let free = bounds.map(|b| b.free_parameters()).unwrap_or_default();
        let fixed_weights = free.is_empty().then(|| cell_weights(hist, &base));
        Problem {
            hist,
            observed,
            base,
            free,
            bounds,
            fixed_weights,
        }
    }

    fn dim(&self) -> usize {
        3 + self.free.len()
    }

    fn split(&self, theta: &[f64]) -> Result<([f64; 3], DetectorParams)> {
        let v = [theta[0], theta[1], theta[2]];
        if self.free.is_empty() {
            return Ok((v, self.base));
        }
        let mut pv = param_vector(&self.base);
        for (j, &k) in self.free.iter().enumerate() {
            pv[k] = theta[3 + j];
        }
        Ok((v, params_from(&pv)?))
    }

    fn mean(&self, weights: &[[f64; 4]], b: &BlochComponents) -> Vec<f64> {
        let n = self.hist.total as f64;
        weights.iter().map(|w| (n * linear_form(w, b)).max(1e-300)).collect()
    }

    fn deviance(&self, mu: &[f64]) -> f64 {
        self.observed
            .iter()
            .zip(mu)
            .map(|(&o, &m)| {
                if o > 0.0 {
                    2.0 * (m - o + o * (o / m).ln())
                } else {
                    2.0 * m
                }
            })
            .sum()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Eval> {
        let (v, p) = self.split(theta)?;
        let b = {
            let c = clamp_ball(v);
            BlochComponents::new(c[0], c[1], c[2])
        };
        let owned;
        let weights = match &self.fixed_weights {
            Some(w) => w,
            None => {
                owned = cell_weights(self.hist, &p);
                &owned
            }
        };
        let mu = self.mean(weights, &b);
        let n = self.hist.total as f64;
        let cells = mu.len();
        let mut jac = DMatrix::<f64>::zeros(cells, self.dim());

        // radial clamp chain rule: d b / d v
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let db_dv = |i: usize, j: usize| -> f64 {
            if r <= 1.0 {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            } else {
                let bi = v[i] / r;
                let bj = v[j] / r;
                ((if i == j { 1.0 } else { 0.0 }) - bi * bj) / r
            }
        };
        for (c, w) in weights.iter().enumerate() {
            for j in 0..3 {
                jac[(c, j)] = n * (0..3).map(|i| w[i + 1] * db_dv(i, j)).sum::<f64>();
            }
        }
        let pv = param_vector(&p);
        for (j, &k) in self.free.iter().enumerate() {
            let (hi, lo, span) = perturbed(&pv, k, fd_step(pv[k], k))?;
            let wh = cell_weights(self.hist, &hi);
            let wl = cell_weights(self.hist, &lo);
            for c in 0..cells {
                jac[(c, 3 + j)] = n * (linear_form(&wh[c], &b) - linear_form(&wl[c], &b)) / span;
            }
        }
        let deviance = self.deviance(&mu);
        Ok(Eval { mu, jac, deviance })
    }

    fn deviance_at(&self, theta: &[f64]) -> Result<f64> {
        let (v, p) = self.split(theta)?;
        let c = clamp_ball(v);
        let b = BlochComponents::new(c[0], c[1], c[2]);
        let mu = match &self.fixed_weights {
            Some(w) => self.mean(w, &b),
            None => self.mean(&cell_weights(self.hist, &p), &b),
        };
        Ok(self.deviance(&mu))
    }

    fn project(&self, theta: &mut [f64]) {
        let c = clamp_ball([theta[0], theta[1], theta[2]]);
        theta[..3].copy_from_slice(&c);
        if let Some(bounds) = &self.bounds {
            let rows = bounds.rows();
            for (j, &k) in self.free.iter().enumerate() {
                theta[3 + j] = theta[3 + j].clamp(rows[k][0], rows[k][1]);
            }
        }
    }

    fn interior(&self, theta: &[f64]) -> bool {
        let Some(bounds) = &self.bounds else {
            return true;
        };
        let rows = bounds.rows();
        self.free.iter().enumerate().all(|(j, &k)| {
            let [lo, hi] = rows[k];
            let margin = 1e-9 * (hi - lo);
            theta[3 + j] > lo + margin && theta[3 + j] < hi - margin
        })
    }
}

/// Bloch weights of every cell: each switching bin, then the no-switch cell.
fn cell_weights(h: &Histogram, p: &DetectorParams) -> Vec<[f64; 4]> {
    let q: Vec<Mat2> = h.bin_edges.iter().map(|&t| detector::no_switch_effect(p, t)).collect();
    let mut w: Vec<[f64; 4]> = q.windows(2).map(|e| bloch_weights(&(e[0] - e[1]))).collect();
    w.push(bloch_weights(&q[q.len() - 1]));
    w
}

struct StartOutcome {
    theta: Vec<f64>,
    deviance: f64,
    decrement: f64,
    converged: bool,
}

/// Newton decrement `gᵀ H⁻¹ g / 2` below which a start has converged.
const DECREMENT_TOL: f64 = 1e-8;

fn fisher(e: &Eval) -> DMatrix<f64> {
    let mut h = DMatrix::<f64>::zeros(e.jac.ncols(), e.jac.ncols());
    for (c, &m) in e.mu.iter().enumerate() {
        let row = e.jac.row(c);
        h += row.transpose() * row / m;
    }
    h
}

fn gradient(e: &Eval, observed: &[f64]) -> DVector<f64> {
    let mut g = DVector::<f64>::zeros(e.jac.ncols());
    for (c, (&m, &o)) in e.mu.iter().zip(observed).enumerate() {
        g += e.jac.row(c).transpose() * (2.0 * (1.0 - o / m));
    }
    g
}

fn solve_damped(h: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut a = h * 2.0;
    for i in 0..a.nrows() {
        let d = a[(i, i)].max(1e-300);
        a[(i, i)] = d * (1.0 + lambda);
    }
    a.cholesky().map(|c| c.solve(&(-g)))
}

fn newton_decrement(h: &DMatrix<f64>, g: &DVector<f64>) -> f64 {
    match (h * 2.0).pseudo_inverse(1e-14) {
        Ok(inv) => 0.5 * (g.transpose() * inv * g)[(0, 0)],
        Err(_) => f64::INFINITY,
    }
}

fn run_start(prob: &Problem, mut theta: Vec<f64>, max_iter: usize) -> Result<StartOutcome> {
    prob.project(&mut theta);
    let mut lambda = 1e-3;
    let mut e = prob.evaluate(&theta)?;
    let mut decrement = f64::INFINITY;
    for _ in 0..max_iter {
        let h = fisher(&e);
        let g = gradient(&e, &prob.observed);
        decrement = newton_decrement(&h, &g);
        if decrement < DECREMENT_TOL {
            break;
        }
        let mut improved = false;
        while lambda < 1e12 {
            if let Some(step) = solve_damped(&h, &g, lambda) {
                let mut trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
                prob.project(&mut trial);
                if let Ok(d) = prob.deviance_at(&trial) {
                    if d.is_finite() && d < e.deviance {
                        theta = trial;
                        lambda = (lambda / 3.0).max(1e-12);
                        improved = true;
                        break;
                    }
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
        e = prob.evaluate(&theta)?;
    }
    let h = fisher(&e);
    let g = gradient(&e, &prob.observed);
    decrement = decrement.min(newton_decrement(&h, &g));
    let converged = decrement < DECREMENT_TOL && prob.interior(&theta);
    Ok(StartOutcome {
        deviance: e.deviance,
        theta,
        decrement,
        converged,
    })
}

/// Latin-hypercube samples of `n` points in the given per-dimension ranges.
fn latin_hypercube(ranges: &[[f64; 2]], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; ranges.len()]; n];
    for (d, [lo, hi]) in ranges.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            strata.swap(i, j);
        }
        for (i, s) in strata.iter().enumerate() {
            let u: f64 = rng.random();
            points[i][d] = lo + (hi - lo) * (*s as f64 + u) / n as f64;
        }
    }
    points
}

/// Fits the Bloch components (and, without `fixed`, the detector parameters
/// within `bounds`) to a histogram by minimizing the Poisson deviance.
pub fn fit(
    h: &Histogram,
    fixed: Option<&DetectorParams>,
    init: &FitInit,
    bounds: &FitBounds,
) -> Result<TomographyResult> {
    h.validate()?;
    if h.total < tol::MIN_FIT_TOTAL {
        return Err(Error::InsufficientData(format!(
            "histogram holds {} events, need at least {}",
            h.total,
            tol::MIN_FIT_TOTAL
        )));
    }
    if init.n_starts < 8 {
        return Err(Error::InvalidParameter("at least 8 fit starts are required".into()));
    }
    let free_params = fixed.is_none();
    if free_params {
        bounds.validate()?;
    }
    let free = if free_params { bounds.free_parameters() } else { Vec::new() };
    let mut mask = FreeMask::state_only();
    for &k in &free {
        mask.params[k] = true;
    }
    let centre = match (fixed, init.params) {
        (Some(p), _) => *p,
        (None, Some(p)) => p,
        (None, None) => {
            let r = bounds.rows();
            params_from(&[
                0.5 * (r[0][0] + r[0][1]),
                0.5 * (r[1][0] + r[1][1]),
                0.5 * (r[2][0] + r[2][1]),
                0.5 * (r[3][0] + r[3][1]),
            ])?
        }
    };
    let report = identifiability(&centre, &mask)?;
    if !report.is_identifiable() {
        return Err(Error::NotIdentifiable(report.degenerate));
    }

    let centre = if free_params {
        // held parameters sit at their bound, not at an unrelated initial guess
        let mut pv = param_vector(&centre);
        for (k, [lo, hi]) in bounds.rows().iter().enumerate() {
            if lo == hi {
                pv[k] = *lo;
            }
        }
        params_from(&pv)?
    } else {
        centre
    };
    let prob = Problem::new(h, centre, free_params.then_some(*bounds));
    let rows = bounds.rows();
    let mut ranges = vec![[-1.0, 1.0]; 3];
    ranges.extend(free.iter().map(|&k| rows[k]));
    let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
    let mut starts = vec![{
        let mut s = init.bloch.as_array().to_vec();
        let pv = param_vector(&centre);
        s.extend(free.iter().map(|&k| pv[k]));
        s
    }];
    starts.extend(latin_hypercube(&ranges, init.n_starts - 1, &mut rng));

    let outcomes = starts
        .into_par_iter()
        .map(|s| run_start(&prob, s, init.max_iter))
        .collect::<Vec<Result<StartOutcome>>>();

    let mut best: Option<StartOutcome> = None;
    let mut best_any = f64::INFINITY;
    for out in outcomes.into_iter().flatten() {
        best_any = best_any.min(out.deviance);
        if !out.converged {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => out.deviance < b.deviance,
        };
        if better {
            best = Some(out);
        }
    }
    let Some(best) = best else {
        return Err(Error::NoConvergence { best_deviance: best_any });
    };
    let _ = best.decrement;

    let (v, p) = prob.split(&best.theta)?;
    let c = clamp_ball(v);
    let bloch = BlochComponents::new(c[0], c[1], c[2]);
    let e = prob.evaluate(&best.theta)?;
    let info = fisher(&e);
    let n = info.nrows();
    let names: Vec<String> = (0..3)
        .chain(free.iter().map(|&k| 3 + k))
        .map(|c| PARAMETER_NAMES[c].to_string())
        .collect();
    let svd = info.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().any(|&s| s < tol::RANK * smax) {
        let post = identifiability_at(&p, &bloch, &mask)?;
        let names = if post.degenerate.is_empty() {
            names.clone()
        } else {
            post.degenerate
        };
        return Err(Error::NotIdentifiable(names));
    }
    let cov = info
        .try_inverse()
        .ok_or_else(|| Error::NotIdentifiable(names.clone()))?;
    let cov = (&cov + cov.transpose()) * 0.5;
    let cells = h.n_bins() + 1;
    Ok(TomographyResult {
        bloch,
        params: p,
        free: names,
        covariance: cov.transpose().iter().copied().collect(),
        converged: true,
        chi2: best.deviance,
        dof: cells.saturating_sub(1 + n),
    })
}

/// Poisson deviance of a histogram against the exact model at `(b, p)`.
pub fn deviance(h: &Histogram, p: &DetectorParams, b: &BlochComponents) -> Result<f64> {
    h.validate()?;
    b.check()?;
    let prob = Problem::new(h, *p, None);
    prob.deviance_at(&b.as_array())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::PureState;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn params(gl: f64, gr: f64, beta: f64, e: f64) -> DetectorParams {
        DetectorParams::new(gl, gr, beta, e).unwrap()
    }

    #[test]
    fn bloch_roundtrip() {
        let b = BlochComponents::new(0.3, -0.4, 0.5);
        let rho = b.density_matrix().unwrap();
        assert_eq!(BlochComponents::from_density(&rho), b);
        let one = DensityMatrix::from_pure(&PureState::ket1());
        assert_eq!(BlochComponents::from_density(&one), BlochComponents::new(0.0, 0.0, 1.0));
        assert!(matches!(
            BlochComponents::new(1.0, 0.1, 0.0).check(),
            Err(Error::UnphysicalBloch(_))
        ));
    }

    #[test]
    fn density_examples() {
        let p = params(1.0, 4.0, 0.8, 30.0);
        let mixed = BlochComponents::default();
        let gp = p.gamma_plus();
        // no precession term for the mixed state: smooth against a dense grid
        for t in [0.0, 0.01, 0.02, 0.5] {
            let a = model_density(&p, &mixed, t).unwrap();
            let exact = detector::switch_density(&p, &DensityMatrix::maximally_mixed(), t);
            assert!((a - exact).abs() < 1e-14);
        }
        assert!((model_density(&p, &mixed, 0.0).unwrap() - gp).abs() < 1e-14);

        let p = params(1.0, 4.0, 0.0, 30.0);
        let a = model_density(&p, &BlochComponents::new(0.6, 0.0, 0.2), 0.3).unwrap();
        let b = model_density(&p, &BlochComponents::new(-0.1, 0.7, 0.2), 0.3).unwrap();
        assert!((a - b).abs() < 1e-15);

        let p = params(2.0, 2.0, 0.7, 30.0);
        let a = model_density(&p, &BlochComponents::new(0.6, -0.3, 0.2), 0.3).unwrap();
        assert!((a - 2.0 * (-0.6f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn asymptotic_agrees_when_slow() {
        let p = params(1.0, 3.0, FRAC_PI_4, 2000.0);
        let b = BlochComponents::new(0.3, -0.4, 0.5);
        for i in 0..50 {
            let t = 0.05 * i as f64;
            let exact = model_density(&p, &b, t).unwrap();
            let approx = model_density_asymptotic(&p, &b, t, RegimeGuard::Enforce).unwrap();
            assert!((exact - approx).abs() < 5e-3, "t = {t}: {exact} vs {approx}");
        }
    }

    #[test]
    fn identifiability_flags() {
        let mask = FreeMask::state_only();
        let r = identifiability(&params(1.0, 3.0, 0.0, 30.0), &mask).unwrap();
        assert_eq!(r.degenerate, vec!["x", "y"]);
        let r = identifiability(&params(1.0, 3.0, FRAC_PI_2, 30.0), &mask).unwrap();
        assert_eq!(r.degenerate, vec!["z"]);
        let r = identifiability(&params(1.0, 3.0, FRAC_PI_4, 40.0), &mask).unwrap();
        assert!(r.is_identifiable(), "{r:?}");
        let r = identifiability(&params(100.0, 300.0, FRAC_PI_4, 2.0), &mask).unwrap();
        assert!(r.fast_switching);
        assert!(r.degenerate.contains(&"x".to_string()) && r.degenerate.contains(&"y".to_string()));
    }

    #[test]
    fn rejects_small_histograms() {
        let p = params(1.0, 3.0, FRAC_PI_4, 40.0);
        let mut h = Histogram::uniform(1.0, 10);
        h.counts[0] = 10;
        h.total = 10;
        let r = fit(&h, Some(&p), &FitInit::default(), &FitBounds::around(&p, 0.1));
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn latin_hypercube_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = latin_hypercube(&[[0.0, 1.0], [-2.0, 2.0]], 8, &mut rng);
        for d in 0..2 {
            let (lo, hi) = if d == 0 { (0.0, 1.0) } else { (-2.0, 2.0) };
            let mut strata: Vec<usize> = pts
                .iter()
                .map(|p| ((p[d] - lo) / (hi - lo) * 8.0).floor() as usize)
                .collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..8).collect::<Vec<_>>());
        }
    }
}
