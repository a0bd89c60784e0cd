use thiserror::Error;

use crate::ratedsl::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("densities live on different grids")]
    GridMismatch,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("rate function returned a non-finite value {value} at (a={age}, x={env})")]
    NonFiniteRate { age: f64, env: f64, value: f64 },

    #[error("total population {total:e} is at or below the positivity floor")]
    ZeroPopulation { total: f64 },

    #[error("fertility vanishes on every cell; the characteristic equation has no root")]
    ZeroFertility,

    #[error("no sign change of K(u, λ) - 1 for |λ| up to {limit:e} (bracket [{lo}, {hi}])")]
    BracketFailure { lo: f64, hi: f64, limit: f64 },

    #[error("λ = {lambda} is too close to the spectrum: 1 - K(u, λ) = {denominator:e}")]
    SingularResolvent { lambda: f64, denominator: f64 },

    #[error(
        "R(α·d) - 1 keeps one sign on [{alpha_lo:e}, {alpha_hi:e}]: \
         endpoint values {value_lo:e} and {value_hi:e}"
    )]
    NoSignChange {
        alpha_lo: f64,
        alpha_hi: f64,
        value_lo: f64,
        value_hi: f64,
    },

    #[error("ray projection stalled at α = {alpha:e} with |R - 1| = {residual:e}")]
    ProjectionStalled { alpha: f64, residual: f64 },

    #[error("fixed-point iteration did not converge in {iterations} steps (last relative step {last_step:e})")]
    MaxIterations { iterations: usize, last_step: f64 },

    #[error("steady-state hypotheses violated: {}", .0.join("; "))]
    HypothesisViolation(Vec<String>),

    #[error("power iteration did not converge in {iterations} steps (estimate {estimate})")]
    ConvergenceFailure { iterations: usize, estimate: f64 },

    #[error("spectral bound not strictly monotone along the ray: s({alpha_1}) = {bound_1}, s({alpha_2}) = {bound_2}")]
    MonotonicityViolation {
        alpha_1: f64,
        alpha_2: f64,
        bound_1: f64,
        bound_2: f64,
    },

    #[error("homogeneous generator changed along the ray between α = {alpha_1} and α = {alpha_2}")]
    RayInvariance { alpha_1: f64, alpha_2: f64 },

    #[error("population blow-up: P({time}) = {total:e} exceeds {limit:e}")]
    Blowup { time: f64, total: f64, limit: f64 },
}

impl Error {
    /// Stable machine-readable name, used in reports and CSV error columns.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::GridMismatch => "GridMismatch",
            Error::InvalidScenario(_) => "InvalidScenario",
            Error::Expr(e) => e.code(),
            Error::NonFiniteRate { .. } => "NonFiniteRate",
            Error::ZeroPopulation { .. } => "ZeroPopulation",
            Error::ZeroFertility => "ZeroFertility",
            Error::BracketFailure { .. } => "BracketFailure",
            Error::SingularResolvent { .. } => "SingularResolvent",
            Error::NoSignChange { .. } => "NoSignChange",
            Error::ProjectionStalled { .. } => "ProjectionStalled",
            Error::MaxIterations { .. } => "MaxIterations",
            Error::HypothesisViolation(_) => "HypothesisViolation",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::MonotonicityViolation { .. } => "MonotonicityViolation",
            Error::RayInvariance { .. } => "RayInvariance",
            Error::Blowup { .. } => "Blowup",
        }
    }

    /// Whether the failure stems from user input rather than from the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_) | Error::InvalidScenario(_) | Error::GridMismatch
        ) || matches!(self, Error::Expr(e) if e.is_syntax())
    }
}
