use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("nonlinear solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("profile left (0,1) at node {index} (value {value:e})")]
    ProfileOutOfRange { index: usize, value: f64 },

    #[error("tail remainder below the floating-point noise floor on [{lo}, {hi}]")]
    NoiseFloor { lo: f64, hi: f64 },

    #[error("no sign change on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("level {level} is not attained by the field")]
    LevelNotAttained { level: f64 },

    #[error("front at x = {front} entered the guard band of [{x_min}, {x_max}] at t = {t}")]
    GuardBand { t: f64, front: f64, x_min: f64, x_max: f64 },

    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("fit residual {residual:e} exceeds tolerance {tol:e}; window looks pre-asymptotic")]
    PreAsymptotic { residual: f64, tol: f64 },

    #[error("ill-conditioned design matrix (condition number {0:e})")]
    IllConditioned(f64),

    #[error("adaptive quadrature did not converge (error estimate {0:e})")]
    Quadrature(f64),

    #[error("no feasible parameters in search lattice: {0}")]
    Infeasible(String),

    #[error("domination failure at tau = {tau}: solution exceeds barrier by {excess:e}")]
    Domination { tau: f64, excess: f64 },

    #[error("particle count {count} exceeds cap {cap}")]
    ParticleCap { count: usize, cap: usize },

    #[error("need at least {needed} replicates, got {got}")]
    InsufficientReplicates { needed: usize, got: usize },

    #[error("negative amplitude estimate {0}")]
    NegativeEstimate(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
