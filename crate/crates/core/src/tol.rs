//! Numerical tolerances used across the crate.
//!
//! Every threshold an operation checks against lives here so that the
//! contracts in the module docs can be audited in one place.

/// Hermiticity check for density matrices and `hermitian_eig` inputs.
pub const HERMITIAN: f64 = 1e-10;

/// Hermiticity of stored density matrices.
pub const DENSITY_HERMITIAN: f64 = 1e-12;

/// Lowest eigenvalue still accepted as positive semidefinite.
pub const PSD: f64 = 1e-12;

/// Slack on the trace bound `trace ≤ 1`.
pub const TRACE: f64 = 1e-12;

/// Normalization slack for pure states.
pub const NORMALIZATION: f64 = 1e-12;

/// Traces at or below this are treated as zero.
pub const ZERO_TRACE: f64 = 1e-15;

/// Relative eigenvalue separation below which a Hermitian 2×2 is degenerate.
pub const EIG_DEGENERATE: f64 = 1e-14;

/// Amplitudes smaller than this are treated as zero when fixing the global phase.
pub const PHASE_ZERO: f64 = 1e-14;

/// Relative gap `|p1 - p2| ≤ tol·p1` flagging a degenerate measurement decomposition.
pub const DECOMPOSE_DEGENERATE: f64 = 1e-12;

/// `p2/p1` above which the measurement operator is treated as invertible.
pub const INVERTIBLE: f64 = 1e-12;

/// Outcome probabilities at or below this are zero.
pub const ZERO_PROBABILITY: f64 = 1e-300;

/// `|λ+ - λ-| t` below which the propagator uses its series form.
pub const PROPAGATOR_SERIES: f64 = 1e-3;

/// Target absolute accuracy of adaptive quadrature.
pub const QUADRATURE: f64 = 1e-8;

/// Ratio `E / γ+` required by the slow-measurement closed forms.
pub const SLOW_REGIME_RATIO: f64 = 10.0;

/// Fraction of `min(1/γ+, 1/E)` the discretized stepper may use as a step.
pub const EULER_STEP_FRACTION: f64 = 0.01;

/// Relative time tolerance for survival-function inversion.
pub const BISECTION: f64 = 1e-10;

/// Iteration cap for survival-function inversion.
pub const BISECTION_MAX_ITER: usize = 200;

/// Golden-section tolerance on the abscissa.
pub const GOLDEN: f64 = 1e-10;

/// Singular values below this fraction of the largest mark a rank deficiency.
pub const RANK: f64 = 1e-8;

/// `γ+ / E` at or above which the coherences are flagged as unidentifiable.
pub const FAST_SWITCHING_RATIO: f64 = 10.0;

/// Slack on the unit Bloch ball.
pub const BLOCH: f64 = 1e-9;

/// Minimum expected count per χ² cell.
pub const MIN_EXPECTED: f64 = 5.0;

/// Minimum histogram total accepted by the tomography fitter.
pub const MIN_FIT_TOTAL: u64 = 1000;
