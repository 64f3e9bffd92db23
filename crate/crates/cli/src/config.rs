//! JSON configuration for each subcommand, with `key=value` overrides.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};
use std::path::PathBuf;

use qswitch::coherent::CoherentDetectorParams;
use qswitch::scurves::{DetectorKind, DEFAULT_STEEPNESS, DEFAULT_X_RANGE};
use qswitch::tomography::{BlochComponents, FitBounds};
use qswitch::trajectory::SimMethod;
use qswitch::DetectorParams;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Sets `path` (dot separated) in `root` to `raw`, parsed as JSON when possible.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not of the form key=value"))?;
    if path.is_empty() {
        return Err(format!("override `{assignment}` has an empty key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Map::new());
            } else {
                return Err(format!("cannot set `{path}`: `{}` is not an object", keys[..i].join(".")));
            }
        }
        let obj = node.as_object_mut().expect("object");
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

pub fn parse<T: DeserializeOwned>(root: Value) -> Result<T, String> {
    serde_json::from_value(root).map_err(|e| e.to_string())
}

fn default_detector() -> DetectorParams {
    DetectorParams::new(1.0, 10.0, PI / 5.0, 30.0).expect("valid defaults")
}

fn default_ratio() -> f64 {
    10.0
}

fn default_t_max() -> f64 {
    6.0
}

fn default_n_points() -> usize {
    301
}

fn default_ratio_range() -> (f64, f64, usize) {
    (1.0, 1e6, 121)
}

fn default_beta_points() -> usize {
    91
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityConfig {
    /// `γR/γL` of the switching-time curve.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Right end of the switching-time curve, in units of `τ0`.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    /// Logarithmic `γR/γL` sweep `(lo, hi, n)`.
    #[serde(default = "default_ratio_range")]
    pub ratio_range: (f64, f64, usize),
    /// Number of angles on `[0, π/2]`.
    #[serde(default = "default_beta_points")]
    pub n_betas: usize,
}

impl FidelityConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.ratio.is_finite() && self.ratio > 0.0 && self.ratio != 1.0) {
            return Err(format!("ratio must be positive and not 1, got {}", self.ratio));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) || self.n_points < 2 {
            return Err("t_max must be positive and n_points at least 2".into());
        }
        let (lo, hi, n) = self.ratio_range;
        if !(lo >= 1.0 && hi > lo && hi.is_finite()) || n < 2 {
            return Err(format!("ratio_range needs 1 <= lo < hi and n >= 2, got ({lo}, {hi}, {n})"));
        }
        if self.n_betas < 2 {
            return Err("n_betas must be at least 2".into());
        }
        Ok(())
    }
}

fn default_bloch() -> BlochComponents {
    BlochComponents::new(0.3, -0.4, 0.5)
}

fn default_n_traj() -> u64 {
    100_000
}

fn default_tau() -> f64 {
    1.0
}

fn default_n_bins() -> usize {
    50
}

fn default_method() -> SimMethod {
    SimMethod::ExactSampling
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_detector")]
    pub detector: DetectorParams,
    /// Initial qubit state.
    #[serde(default = "default_bloch")]
    pub bloch: BlochComponents,
    #[serde(default = "default_n_traj")]
    pub n_traj: u64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: SimMethod,
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
    /// Unit of the reported times; `1/γR` when absent.
    #[serde(default)]
    pub time_unit: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyConfig {
    /// Histogram CSV as written by `simulate`.
    pub histogram: PathBuf,
    /// Unit of the histogram times; `1/γR` of `detector` (or of the bounds centre) when absent.
    #[serde(default)]
    pub time_unit: Option<f64>,
    /// Known detector parameters; the fit then covers the Bloch vector only.
    #[serde(default)]
    pub detector: Option<DetectorParams>,
    /// Parameter box when the detector is fitted as well.
    #[serde(default)]
    pub bounds: Option<FitBounds>,
    #[serde(default)]
    pub initial_bloch: BlochComponents,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_starts() -> usize {
    8
}

fn default_max_iter() -> usize {
    200
}

fn default_mixing() -> f64 {
    0.7
}

fn default_x_range() -> (f64, f64, usize) {
    (DEFAULT_X_RANGE.0, DEFAULT_X_RANGE.1, 401)
}

fn default_steepness() -> f64 {
    DEFAULT_STEEPNESS
}

fn default_kinds() -> Vec<DetectorKind> {
    DetectorKind::ALL.to_vec()
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScurvesConfig {
    #[serde(default = "default_mixing")]
    pub mixing_p: f64,
    #[serde(default = "default_x_range")]
    pub x_range: (f64, f64, usize),
    #[serde(default = "one")]
    pub pulse: f64,
    #[serde(default = "default_steepness")]
    pub steepness: f64,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<DetectorKind>,
    /// Number of angles on `[0, π/2]` for the fidelity curves.
    #[serde(default = "default_beta_points")]
    pub n_betas: usize,
}

fn default_coherent() -> CoherentDetectorParams {
    CoherentDetectorParams::with_angle(FRAC_PI_3, 1.0).expect("valid defaults")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherentConfig {
    #[serde(default = "default_coherent")]
    pub detector: CoherentDetectorParams,
    /// Number of angles on `[0, π/2]` for the rate and fidelity sweeps.
    #[serde(default = "default_beta_points")]
    pub n_betas: usize,
}

/// `n` evenly spaced angles on `[0, π/2]`, ending exactly at `π/2`.
pub fn beta_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { FRAC_PI_2 } else { FRAC_PI_2 * i as f64 / (n - 1) as f64 })
        .collect()
}
