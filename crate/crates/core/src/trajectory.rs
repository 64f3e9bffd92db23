//! Monte Carlo unraveling of the switching measurement.
//!
//! Each trajectory draws one switching record for a qubit prepared in `ρ0`
//! and driven for a pulse of length `τ`: either "no switch" or a switch at a
//! time `t* ∈ [0, τ]`. Random numbers come from a ChaCha stream keyed by
//! `(seed, trajectory index)`, so ensembles are reproducible and independent
//! of how the work is split across threads.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::detector::{self, DetectorParams};
use crate::error::{Error, Result};
use crate::qmatrix::{DensityMatrix, Mat2};
use crate::tol;

/// How trajectories are generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimMethod {
    /// Invert the survival function; no discretization error.
    ExactSampling,
    /// Step the Kraus map with step `dt`.
    EulerStep { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_traj: u64,
    /// Pulse duration.
    pub tau: f64,
    pub seed: u64,
    pub method: SimMethod,
    pub n_bins: usize,
}

impl SimConfig {
    pub fn exact(n_traj: u64, tau: f64, seed: u64, n_bins: usize) -> Self {
        SimConfig {
            n_traj,
            tau,
            seed,
            method: SimMethod::ExactSampling,
            n_bins,
        }
    }

    pub fn validate(&self, p: &DetectorParams) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if self.n_bins < 2 {
            return Err(Error::InvalidParameter("n_bins must be at least 2".into()));
        }
        if let SimMethod::EulerStep { dt } = self.method {
            detector::check_euler_step(p, dt)?;
        }
        Ok(())
    }
}

/// One detector record and the conditional qubit state it leaves behind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOutcome {
    pub switched: bool,
    pub switch_time: Option<f64>,
    /// Trace-normalized conditional state at the end of the record.
    pub final_state: DensityMatrix,
}

fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw in `(0, 1]`.
fn unit_draw(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

fn check_initial(rho0: &DensityMatrix) -> Result<()> {
    let tr = rho0.trace();
    if (tr - 1.0).abs() > tol::TRACE {
        return Err(Error::InvalidTrace(tr));
    }
    Ok(())
}

/// `√K = √γL |L⟩⟨L| + √γR |R⟩⟨R|`, the switch Kraus operator per `√dt`.
fn sqrt_rate_matrix(p: &DetectorParams) -> Mat2 {
    let b = detector::probe_basis(p);
    b.l.projector() * p.gamma_l().sqrt() + b.r.projector() * p.gamma_r().sqrt()
}

/// Samples one trajectory from stream `stream_index`.
pub fn run_trajectory(
    p: &DetectorParams,
    rho0: &DensityMatrix,
    cfg: &SimConfig,
    stream_index: u64,
) -> Result<TrajectoryOutcome> {
    cfg.validate(p)?;
    check_initial(rho0)?;
    let mut rng = stream_rng(cfg.seed, stream_index);
    match cfg.method {
        SimMethod::ExactSampling => exact_trajectory(p, rho0, cfg.tau, &mut rng),
        SimMethod::EulerStep { dt } => euler_trajectory(p, rho0, cfg.tau, dt, &mut rng),
    }
}

fn exact_trajectory(
    p: &DetectorParams,
    rho0: &DensityMatrix,
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryOutcome> {
    let u = unit_draw(rng);
    let survival = |t: f64| detector::survival_probability(p, rho0, t);
    if survival(tau) >= u {
        let evolved = detector::u_ns(p, tau).sandwich(rho0.matrix());
        return Ok(TrajectoryOutcome {
            switched: false,
            switch_time: None,
            final_state: DensityMatrix::from_unnormalized(&evolved)?,
        });
    }
    let (mut lo, mut hi) = (0.0, tau);
    let mut converged = false;
    for _ in 0..tol::BISECTION_MAX_ITER {
        if hi - lo <= tol::BISECTION * tau {
            converged = true;
            break;
        }
        let mid = 0.5 * (lo + hi);
        if survival(mid) >= u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !converged {
        return Err(Error::BisectionFailure(format!(
            "bracket [{lo}, {hi}] did not shrink below {}",
            tol::BISECTION * tau
        )));
    }
    if !(survival(lo) >= u && survival(hi) < u) {
        return Err(Error::BisectionFailure(format!(
            "survival is not monotone near t = {lo}"
        )));
    }
    let t = 0.5 * (lo + hi);
    let collapse = sqrt_rate_matrix(p) * detector::u_ns(p, t);
    Ok(TrajectoryOutcome {
        switched: true,
        switch_time: Some(t),
        final_state: DensityMatrix::from_unnormalized(&collapse.sandwich(rho0.matrix()))?,
    })
}

fn euler_trajectory(
    p: &DetectorParams,
    rho0: &DensityMatrix,
    tau: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryOutcome> {
    let n = (tau / dt).ceil().max(1.0) as u64;
    let h = tau / n as f64;
    let free = detector::u_ham(p, h);
    let jump = detector::p_switch(p, h)?;
    let stay = detector::p_no_switch(p, h)?;
    let mut rho = *rho0.matrix();
    for k in 0..n {
        let precessed = free.sandwich(&rho);
        let jumped = jump.sandwich(&precessed);
        let p_jump = jumped.trace().re;
        if unit_draw(rng) <= p_jump {
            return Ok(TrajectoryOutcome {
                switched: true,
                switch_time: Some((k as f64 + 0.5) * h),
                final_state: DensityMatrix::from_unnormalized(&jumped)?,
            });
        }
        let kept = stay.sandwich(&precessed);
        rho = *DensityMatrix::from_unnormalized(&kept)?.matrix();
    }
    Ok(TrajectoryOutcome {
        switched: false,
        switch_time: None,
        final_state: DensityMatrix::new(rho)?,
    })
}

/// Binned switching times plus the no-switch count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub no_switch_count: u64,
    pub total: u64,
}

impl Histogram {
    /// Empty histogram with `n_bins` equal bins over `[0, tau]`.
    pub fn uniform(tau: f64, n_bins: usize) -> Self {
        let bin_edges = (0..=n_bins)
            .map(|i| if i == n_bins { tau } else { tau * i as f64 / n_bins as f64 })
            .collect();
        Histogram {
            bin_edges,
            counts: vec![0; n_bins],
            no_switch_count: 0,
            total: 0,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn tau(&self) -> f64 {
        *self.bin_edges.last().unwrap_or(&0.0)
    }

    pub fn switched(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn bin_of(&self, t: f64) -> usize {
        match self.bin_edges.binary_search_by(|e| e.total_cmp(&t)) {
            Ok(i) => i.min(self.n_bins() - 1),
            Err(i) => i.saturating_sub(1).min(self.n_bins() - 1),
        }
    }

    pub fn record(&mut self, outcome: &TrajectoryOutcome) {
        match outcome.switch_time {
            Some(t) => {
                let b = self.bin_of(t);
                self.counts[b] += 1;
            }
            None => self.no_switch_count += 1,
        }
        self.total += 1;
    }

    /// Adds another histogram with identical edges.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.bin_edges != other.bin_edges {
            return Err(Error::Histogram("cannot merge histograms with different edges".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.no_switch_count += other.no_switch_count;
        self.total += other.total;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_edges.len() != self.counts.len() + 1 || self.counts.is_empty() {
            return Err(Error::Histogram(format!(
                "{} edges for {} bins",
                self.bin_edges.len(),
                self.counts.len()
            )));
        }
        if self.bin_edges[0] != 0.0 {
            return Err(Error::Histogram(format!("first edge is {}, not 0", self.bin_edges[0])));
        }
        if let Some(w) = self.bin_edges.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Histogram(format!("edges not increasing at {} -> {}", w[0], w[1])));
        }
        if !self.bin_edges.iter().all(|e| e.is_finite()) {
            return Err(Error::Histogram("non-finite edge".into()));
        }
        if self.switched() + self.no_switch_count != self.total {
            return Err(Error::Histogram(format!(
                "counts sum to {} but total is {}",
                self.switched() + self.no_switch_count,
                self.total
            )));
        }
        Ok(())
    }

    /// Writes `bin_start,bin_end,count` rows and trailing `#no_switch` / `#total`
    /// rows, with times expressed in multiples of `time_unit`.
    pub fn write_csv<W: Write>(&self, mut w: W, time_unit: f64) -> Result<()> {
        let io = |e: std::io::Error| Error::Histogram(e.to_string());
        writeln!(w, "bin_start,bin_end,count").map_err(io)?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                self.bin_edges[i] / time_unit,
                self.bin_edges[i + 1] / time_unit,
                c
            )
            .map_err(io)?;
        }
        writeln!(w, "#no_switch,{}", self.no_switch_count).map_err(io)?;
        writeln!(w, "#total,{}", self.total).map_err(io)?;
        Ok(())
    }

    /// Parses the format of [`Histogram::write_csv`].
    pub fn read_csv<R: BufRead>(r: R, time_unit: f64) -> Result<Self> {
        let mut edges: Vec<f64> = Vec::new();
        let mut counts = Vec::new();
        let mut no_switch = None;
        let mut total = None;
        let mut saw_header = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Histogram(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Histogram(format!("line {}: {what}: {line:?}", lineno + 1));
            if !saw_header {
                if line.replace(' ', "") != "bin_start,bin_end,count" {
                    return Err(bad("expected header bin_start,bin_end,count"));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() == 2 && fields[0].starts_with('#') {
                let v: u64 = fields[1].parse().map_err(|_| bad("bad count"))?;
                match fields[0] {
                    "#no_switch" => no_switch = Some(v),
                    "#total" => total = Some(v),
                    _ => return Err(bad("unknown metadata row")),
                }
                continue;
            }
            if fields.len() != 3 {
                return Err(bad("expected three fields"));
            }
            if no_switch.is_some() || total.is_some() {
                return Err(bad("bin row after metadata"));
            }
            let start: f64 = fields[0].parse().map_err(|_| bad("bad bin_start"))?;
            let end: f64 = fields[1].parse().map_err(|_| bad("bad bin_end"))?;
            let count: u64 = fields[2].parse().map_err(|_| bad("bad count"))?;
            let (start, end) = (start * time_unit, end * time_unit);
            match edges.last() {
                None => edges.push(start),
                Some(&prev) => {
                    if (prev - start).abs() > 1e-12 * prev.abs().max(end.abs()) {
                        return Err(bad("bins are not contiguous"));
                    }
                }
            }
            edges.push(end);
            counts.push(count);
        }
        let no_switch_count = no_switch.ok_or_else(|| Error::Histogram("missing #no_switch row".into()))?;
        let total = total.ok_or_else(|| Error::Histogram("missing #total row".into()))?;
        let h = Histogram {
            bin_edges: edges,
            counts,
            no_switch_count,
            total,
        };
        h.validate()?;
        Ok(h)
    }
}

/// Ensemble histogram together with summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub histogram: Histogram,
    /// Mean switching time among switched trajectories.
    pub mean_switch_time: Option<f64>,
    /// Standard error of that mean.
    pub mean_switch_time_se: Option<f64>,
    /// Smallest purity of any conditional final state.
    pub min_final_purity: f64,
}

#[derive(Clone)]
struct Partial {
    hist: Histogram,
    t_sum: f64,
    t_sq_sum: f64,
    min_purity: f64,
}

const CHUNK: u64 = 2048;

/// Runs `cfg.n_traj` trajectories and bins them.
pub fn run_ensemble(p: &DetectorParams, rho0: &DensityMatrix, cfg: &SimConfig) -> Result<Histogram> {
    Ok(run_ensemble_detailed(p, rho0, cfg)?.histogram)
}

/// [`run_ensemble`] plus switching-time moments and the worst final-state purity.
pub fn run_ensemble_detailed(p: &DetectorParams, rho0: &DensityMatrix, cfg: &SimConfig) -> Result<EnsembleResult> {
    cfg.validate(p)?;
    check_initial(rho0)?;
    let n_chunks = cfg.n_traj.div_ceil(CHUNK);
    let partials = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut part = Partial {
                hist: Histogram::uniform(cfg.tau, cfg.n_bins),
                t_sum: 0.0,
                t_sq_sum: 0.0,
                min_purity: 1.0,
            };
            let end = ((c + 1) * CHUNK).min(cfg.n_traj);
            for i in c * CHUNK..end {
                let out = run_trajectory(p, rho0, cfg, i)?;
                part.hist.record(&out);
                if let Some(t) = out.switch_time {
                    part.t_sum += t;
                    part.t_sq_sum += t * t;
                }
                let pur = crate::qmatrix::purity(&out.final_state)?;
                part.min_purity = part.min_purity.min(pur);
            }
            Ok(part)
        })
        .collect::<Result<Vec<Partial>>>()?;

    let mut hist = Histogram::uniform(cfg.tau, cfg.n_bins);
    let (mut t_sum, mut t_sq_sum, mut min_purity) = (0.0, 0.0, 1.0f64);
    for part in &partials {
        hist.merge(&part.hist)?;
        t_sum += part.t_sum;
        t_sq_sum += part.t_sq_sum;
        min_purity = min_purity.min(part.min_purity);
    }
    let n = hist.switched() as f64;
    let (mean, se) = if n > 0.0 {
        let mean = t_sum / n;
        let var = (t_sq_sum / n - mean * mean).max(0.0);
        (Some(mean), Some((var / n).sqrt()))
    } else {
        (None, None)
    };
    Ok(EnsembleResult {
        histogram: hist,
        mean_switch_time: mean,
        mean_switch_time_se: se,
        min_final_purity: min_purity,
    })
}

/// Pearson χ² test outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chi2Test {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn chi2_p_value(statistic: f64, dof: usize) -> Result<f64> {
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InsufficientCounts(e.to_string()))?;
    Ok(dist.sf(statistic))
}

/// Groups consecutive cells until each group's weight reaches `min`; a light
/// tail is folded into the previous group.
fn merge_cells(weights: &[f64], min: f64) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if acc >= min {
            groups.push(start..i + 1);
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < weights.len() {
        match groups.last_mut() {
            Some(last) => last.end = weights.len(),
            None => groups.push(start..weights.len()),
        }
    }
    groups
}

/// Expected probabilities per switching bin and for no switch.
pub fn expected_probabilities(h: &Histogram, p: &DetectorParams, rho0: &DensityMatrix) -> (Vec<f64>, f64) {
    let q: Vec<Mat2> = h
        .bin_edges
        .iter()
        .map(|&t| detector::no_switch_effect(p, t))
        .collect();
    let bins = q
        .windows(2)
        .map(|w| rho0.expect(&(w[0] - w[1])).max(0.0))
        .collect();
    (bins, rho0.expect(&q[q.len() - 1]).clamp(0.0, 1.0))
}

/// Goodness of fit of a histogram against the exact switching-time distribution.
pub fn chi2_vs_analytic(h: &Histogram, p: &DetectorParams, rho0: &DensityMatrix) -> Result<Chi2Test> {
    h.validate()?;
    if h.total == 0 {
        return Err(Error::InsufficientCounts("histogram is empty".into()));
    }
    let n = h.total as f64;
    let (bins, stay) = expected_probabilities(h, p, rho0);
    let mut expected: Vec<f64> = bins.iter().map(|b| b * n).collect();
    let mut observed: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    expected.push(stay * n);
    observed.push(h.no_switch_count as f64);

    let groups = merge_cells(&expected, tol::MIN_EXPECTED);
    let cells: Vec<(f64, f64)> = groups
        .iter()
        .map(|g| (observed[g.clone()].iter().sum(), expected[g.clone()].iter().sum()))
        .collect();
    if cells.len() < 2 || cells.iter().any(|&(_, e)| e < tol::MIN_EXPECTED) {
        return Err(Error::InsufficientCounts(format!(
            "only {} cells reach {} expected counts",
            cells.iter().filter(|&&(_, e)| e >= tol::MIN_EXPECTED).count(),
            tol::MIN_EXPECTED
        )));
    }
    let statistic: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    Ok(Chi2Test {
        statistic,
        dof,
        p_value: chi2_p_value(statistic, dof)?,
    })
}

/// Two-sample χ² test between histograms with identical edges.
pub fn chi2_two_sample(a: &Histogram, b: &Histogram) -> Result<Chi2Test> {
    a.validate()?;
    b.validate()?;
    if a.bin_edges != b.bin_edges {
        return Err(Error::Histogram("histograms have different edges".into()));
    }
    if a.total == 0 || b.total == 0 {
        return Err(Error::InsufficientCounts("empty histogram".into()));
    }
    let mut ca: Vec<f64> = a.counts.iter().map(|&c| c as f64).collect();
    let mut cb: Vec<f64> = b.counts.iter().map(|&c| c as f64).collect();
    ca.push(a.no_switch_count as f64);
    cb.push(b.no_switch_count as f64);
    let combined: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| x + y).collect();
    let groups = merge_cells(&combined, 2.0 * tol::MIN_EXPECTED);
    if groups.len() < 2 {
        return Err(Error::InsufficientCounts("fewer than two populated cells".into()));
    }
    let (na, nb) = (a.total as f64, b.total as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let statistic: f64 = groups
        .iter()
        .map(|g| {
            let x: f64 = ca[g.clone()].iter().sum();
            let y: f64 = cb[g.clone()].iter().sum();
            (ka * x - kb * y).powi(2) / (x + y)
        })
        .sum();
    let dof = groups.len() - 1;
    Ok(Chi2Test {
        statistic,
        dof,
        p_value: chi2_p_value(statistic, dof)?,
    })
}
