mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use qswitch::analysis::{self, FidelityCurve};
use qswitch::coherent::{self, EffectiveRates};
use qswitch::scurves::{self, SCurveSpec};
use qswitch::tomography::{self, FitInit};
use qswitch::trajectory::{self, Histogram, SimConfig};
use qswitch::{detector, quad, tol, Error};

use config::{CoherentConfig, FidelityConfig, ScurvesConfig, SimulateConfig, TomographyConfig};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SIMULATION: u8 = 3;
const EXIT_NO_CONVERGENCE: u8 = 4;
const EXIT_NOT_IDENTIFIABLE: u8 = 5;

#[derive(Parser)]
#[command(name = "qswitch", version, about = "Qubit readout by a switching detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override a configuration value, e.g. `--set detector.beta=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Random seed (overrides `seed` in the configuration).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fidelity curves: switching-time fidelity, overall fidelity against the rate ratio,
    /// best fidelity against the probe angle.
    Fidelity(Common),
    /// Monte Carlo switching histogram.
    Simulate(Common),
    /// Reconstruct the initial qubit state from a switching histogram.
    Tomography(Common),
    /// S-curves and best fidelity for strong, weak-incoherent and weak-coherent detectors.
    Scurves(Common),
    /// Switching rates and fidelity of a coherent detector.
    Coherent(Common),
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn config(message: impl std::fmt::Display) -> Self {
        Failure::new(EXIT_CONFIG, format!("invalid configuration: {message}"))
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fidelity(c) => run(c, cmd_fidelity),
        Command::Simulate(c) => run(c, cmd_simulate),
        Command::Tomography(c) => run(c, cmd_tomography),
        Command::Scurves(c) => run(c, cmd_scurves),
        Command::Coherent(c) => run(c, cmd_coherent),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

struct Context {
    out: PathBuf,
    started: Instant,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.path(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Failure::io(&path, e))
    }

    fn write_json(&self, name: &str, value: &Value) -> CmdResult {
        let path = self.path(name);
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::io(&path, e))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::io(&path, e))
    }

    fn write_summary<C: Serialize>(&self, config: &C, extra: Value) -> CmdResult {
        let mut body = json!({
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config_echo": config,
            "elapsed_seconds": self.started.elapsed().as_secs_f64(),
        });
        if let (Some(obj), Value::Object(more)) = (body.as_object_mut(), extra) {
            obj.extend(more);
        }
        self.write_json("summary.json", &body)
    }
}

fn load_config(c: &Common) -> Result<Value, Failure> {
    let mut root = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        }
        None => json!({}),
    };
    if !root.is_object() {
        return Err(Failure::config("top level must be a JSON object"));
    }
    for o in &c.overrides {
        config::apply_override(&mut root, o).map_err(Failure::config)?;
    }
    Ok(root)
}

fn run(c: &Common, cmd: fn(Value, Option<u64>, &Context) -> CmdResult) -> CmdResult {
    let started = Instant::now();
    let root = load_config(c)?;
    fs::create_dir_all(&c.out).map_err(|e| Failure::io(&c.out, e))?;
    cmd(root, c.seed, &Context {
        out: c.out.clone(),
        started,
    })
}

fn with_seed(mut root: Value, seed: Option<u64>) -> Value {
    if let (Some(s), Some(obj)) = (seed, root.as_object_mut()) {
        obj.insert("seed".into(), json!(s));
    }
    root
}

fn write_curve(ctx: &Context, name: &str, header: &str, curve: &FidelityCurve) -> CmdResult {
    let path = ctx.path(name);
    let mut w = ctx.create(name)?;
    let io = |e| Failure::io(&path, e);
    writeln!(w, "{header}").map_err(io)?;
    for (x, f) in curve.points() {
        writeln!(w, "{x},{f}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i + 1 == n => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

fn cmd_fidelity(root: Value, _seed: Option<u64>, ctx: &Context) -> CmdResult {
    let cfg: FidelityConfig = config::parse(root).map_err(Failure::config)?;
    cfg.validate().map_err(Failure::config)?;
    let numeric = |e: Error| Failure::new(EXIT_CONFIG, e.to_string());

    let fig2 = analysis::switch_fidelity_curve(cfg.ratio, cfg.t_max, cfg.n_points).map_err(numeric)?;
    write_curve(ctx, "fig2.csv", "t_over_tau0,fidelity", &fig2)?;

    let (lo, hi, n) = cfg.ratio_range;
    let fig3 = analysis::overall_fidelity_curve(&log_grid(lo, hi, n)).map_err(numeric)?;
    write_curve(ctx, "fig3.csv", "gamma_ratio,fidelity", &fig3)?;

    let fig4 = analysis::dark_state_fidelity_curve(&config::beta_grid(cfg.n_betas)).map_err(numeric)?;
    write_curve(ctx, "fig4.csv", "beta,fidelity", &fig4)?;

    ctx.write_summary(
        &cfg,
        json!({
            "overall_fidelity_at_ratio": analysis::case1_overall_fidelity(1.0, cfg.ratio).map_err(numeric)?,
        }),
    )
}

fn cmd_simulate(root: Value, seed: Option<u64>, ctx: &Context) -> CmdResult {
    let cfg: SimulateConfig = config::parse(with_seed(root, seed)).map_err(Failure::config)?;
    let p = cfg.detector;
    let sim = SimConfig {
        n_traj: cfg.n_traj,
        tau: cfg.tau,
        seed: cfg.seed,
        method: cfg.method,
        n_bins: cfg.n_bins,
    };
    sim.validate(&p).map_err(Failure::config)?;
    let rho0 = cfg.bloch.density_matrix().map_err(Failure::config)?;
    let time_unit = resolve_time_unit(cfg.time_unit, Some(&p))?;

    let sim_err = |e: Error| Failure::new(EXIT_SIMULATION, e.to_string());
    let ens = trajectory::run_ensemble_detailed(&p, &rho0, &sim).map_err(sim_err)?;
    let h = &ens.histogram;
    {
        let path = ctx.path("histogram.csv");
        let mut w = ctx.create("histogram.csv")?;
        h.write_csv(&mut w, time_unit).map_err(|e| Failure::io(&path, e))?;
        w.flush().map_err(|e| Failure::io(&path, e))?;
    }

    let survival = detector::survival_probability(&p, &rho0, cfg.tau);
    let n = h.total as f64;
    let no_switch_fraction = h.no_switch_count as f64 / n;
    let analytic_mean = analytic_mean_switch_time(&p, &rho0, cfg.tau).map_err(sim_err)?;
    let chi2 = match trajectory::chi2_vs_analytic(h, &p, &rho0) {
        Ok(t) => serde_json::to_value(t).expect("plain data"),
        Err(Error::InsufficientCounts(why)) => json!({ "skipped": why }),
        Err(e) => return Err(sim_err(e)),
    };
    ctx.write_summary(
        &cfg,
        json!({
            "time_unit": time_unit,
            "total": h.total,
            "no_switch_count": h.no_switch_count,
            "no_switch_fraction": no_switch_fraction,
            "survival_analytic": survival,
            "no_switch_sigma": (survival * (1.0 - survival) / n).sqrt(),
            "mean_switch_time": ens.mean_switch_time.map(|t| t / time_unit),
            "mean_switch_time_se": ens.mean_switch_time_se.map(|t| t / time_unit),
            "mean_switch_time_analytic": analytic_mean.map(|t| t / time_unit),
            "min_final_purity": ens.min_final_purity,
            "chi2_vs_analytic": chi2,
        }),
    )
}

/// Mean switching time given that a switch happened before `tau`.
fn analytic_mean_switch_time(
    p: &qswitch::DetectorParams,
    rho0: &qswitch::DensityMatrix,
    tau: f64,
) -> Result<Option<f64>, Error> {
    let switched = 1.0 - detector::survival_probability(p, rho0, tau);
    if switched <= 0.0 {
        return Ok(None);
    }
    let first: f64 = quad::integrate(|t| t * detector::switch_density(p, rho0, t), 0.0, tau, tol::QUADRATURE * tau)?;
    Ok(Some(first / switched))
}

fn resolve_time_unit(given: Option<f64>, p: Option<&qswitch::DetectorParams>) -> Result<f64, Failure> {
    match given {
        Some(u) if u.is_finite() && u > 0.0 => Ok(u),
        Some(u) => Err(Failure::config(format!("time_unit must be positive, got {u}"))),
        None => Ok(match p {
            Some(p) if p.gamma_r() > 0.0 => 1.0 / p.gamma_r(),
            _ => 1.0,
        }),
    }
}

fn cmd_tomography(root: Value, seed: Option<u64>, ctx: &Context) -> CmdResult {
    let cfg: TomographyConfig = config::parse(with_seed(root, seed)).map_err(Failure::config)?;
    if cfg.detector.is_none() && cfg.bounds.is_none() {
        return Err(Failure::config("give either `detector` (fixed) or `bounds` (fitted)"));
    }
    let reference = match (&cfg.detector, &cfg.bounds) {
        (Some(p), _) => Some(*p),
        (None, Some(b)) => {
            b.validate().map_err(Failure::config)?;
            let mid = |r: [f64; 2]| 0.5 * (r[0] + r[1]);
            qswitch::DetectorParams::new(mid(b.gamma_l), mid(b.gamma_r), mid(b.beta), mid(b.energy)).ok()
        }
        (None, None) => None,
    };
    let time_unit = resolve_time_unit(cfg.time_unit, reference.as_ref())?;
    let file = File::open(&cfg.histogram).map_err(|e| Failure::config(format!("{}: {e}", cfg.histogram.display())))?;
    let h = Histogram::read_csv(BufReader::new(file), time_unit).map_err(Failure::config)?;
    let init = FitInit {
        bloch: cfg.initial_bloch,
        params: None,
        seed: cfg.seed,
        n_starts: cfg.n_starts,
        max_iter: cfg.max_iter,
    };
    let bounds = match (&cfg.bounds, &cfg.detector) {
        (Some(b), _) => *b,
        (None, Some(p)) => tomography::FitBounds::around(p, 0.5),
        (None, None) => unreachable!("checked above"),
    };
    match tomography::fit(&h, cfg.detector.as_ref(), &init, &bounds) {
        Ok(r) => {
            let mut body = serde_json::to_value(&r).expect("plain data");
            let sigmas: serde_json::Map<String, Value> =
                r.free.iter().map(|n| (n.clone(), json!(r.sigma(n)))).collect();
            body["sigma"] = Value::Object(sigmas);
            body["time_unit"] = json!(time_unit);
            ctx.write_json("tomography.json", &body)?;
            ctx.write_summary(&cfg, json!({ "converged": true }))
        }
        Err(Error::NoConvergence { best_deviance }) => {
            ctx.write_json(
                "tomography.json",
                &json!({ "converged": false, "best_deviance": best_deviance }),
            )?;
            Err(Failure::new(EXIT_NO_CONVERGENCE, "no fit start converged"))
        }
        Err(Error::NotIdentifiable(names)) => Err(Failure::new(
            EXIT_NOT_IDENTIFIABLE,
            format!("parameters not identifiable from this histogram: {}", names.join(", ")),
        )),
        Err(e) => Err(Failure::config(e)),
    }
}

fn cmd_scurves(root: Value, _seed: Option<u64>, ctx: &Context) -> CmdResult {
    let cfg: ScurvesConfig = config::parse(root).map_err(Failure::config)?;
    if cfg.kinds.is_empty() {
        return Err(Failure::config("kinds must not be empty"));
    }
    if cfg.n_betas < 2 {
        return Err(Failure::config("n_betas must be at least 2"));
    }
    let betas = config::beta_grid(cfg.n_betas);
    let mut separations = serde_json::Map::new();
    for kind in &cfg.kinds {
        let spec = SCurveSpec {
            detector_kind: *kind,
            mixing_p: cfg.mixing_p,
            x_range: cfg.x_range,
            pulse: cfg.pulse,
            steepness: cfg.steepness,
        };
        let points = scurves::scurve(&spec).map_err(Failure::config)?;
        let name = format!("scurve_{}.csv", kind.name());
        let path = ctx.path(&name);
        let mut w = ctx.create(&name)?;
        scurves::write_scurve_csv(&mut w, &points).map_err(|e| Failure::io(&path, e))?;
        w.flush().map_err(|e| Failure::io(&path, e))?;

        let (x, sep) = scurves::max_separation(&spec).map_err(Failure::config)?;
        separations.insert(kind.name().into(), json!({ "x": x, "separation": sep }));

        let curve = scurves::max_fidelity_vs_beta(*kind, &betas, cfg.steepness).map_err(Failure::config)?;
        write_curve(ctx, &format!("fidelity_{}.csv", kind.name()), "beta,fidelity", &curve)?;
    }
    ctx.write_summary(&cfg, json!({ "max_separation": separations }))
}

fn cmd_coherent(root: Value, _seed: Option<u64>, ctx: &Context) -> CmdResult {
    let cfg: CoherentConfig = config::parse(root).map_err(Failure::config)?;
    if cfg.n_betas < 2 {
        return Err(Failure::config("n_betas must be at least 2"));
    }
    let p = cfg.detector;
    let laws: [(&str, fn(&coherent::CoherentDetectorParams) -> EffectiveRates); 2] = [
        ("dominant_coupling", coherent::rates_dominant_coupling),
        ("large_bias", coherent::rates_large_bias),
    ];
    let mut at_beta = serde_json::Map::new();
    for (name, law) in laws {
        let file = format!("coherent_{name}.csv");
        let path = ctx.path(&file);
        let mut w = ctx.create(&file)?;
        let io = |e| Failure::io(&path, e);
        writeln!(w, "beta,gamma_0,gamma_1,fidelity").map_err(io)?;
        for beta in config::beta_grid(cfg.n_betas) {
            let q = p.with_beta(beta).map_err(Failure::config)?;
            let r = law(&q);
            let f = coherent::coherent_fidelity(&r).map_err(Failure::config)?;
            writeln!(w, "{beta},{},{},{}", r.gamma_0, r.gamma_1, f.fidelity).map_err(io)?;
        }
        w.flush().map_err(io)?;
        let r = law(&p);
        let f = coherent::coherent_fidelity(&r).map_err(Failure::config)?;
        at_beta.insert(name.into(), json!({ "rates": r, "fidelity": f }));
    }
    let e = coherent::effective_couplings(&p);
    let general = match coherent::rates_scaling_law(&p) {
        Ok(r) => json!({ "rates": r, "fidelity": coherent::coherent_fidelity(&r).map_err(Failure::config)? }),
        Err(e) => json!({ "skipped": e.to_string() }),
    };
    at_beta.insert("scaling_law".into(), general);
    ctx.write_summary(&cfg, json!({ "effective_couplings": e, "at_configured_beta": at_beta }))
}
