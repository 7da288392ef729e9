use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter box: component {index} has lower bound {lo} above upper bound {hi}")]
    InvalidBox { index: usize, lo: f64, hi: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("invalid estimator configuration: {0}")]
    InvalidEstimator(String),

    #[error("degenerate constraint: q = {0:e} is not positive")]
    DegenerateConstraint(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("blend rate must satisfy eta >= 1, got {0}")]
    InvalidBlendRate(f64),

    #[error("time {t} precedes the schedule start {start}")]
    BeforeSchedule { t: f64, start: f64 },

    #[error("schedule times must be strictly increasing ({prev} then {next})")]
    NonIncreasingGrid { prev: f64, next: f64 },

    #[error("soft-minimum needs at least one barrier value")]
    EmptyBarrierSet,

    #[error("soft-minimum sharpness must be positive, got {0}")]
    InvalidSharpness(f64),

    #[error("initial state is outside the safe set (psi chain = {0:?})")]
    UnsafeInitialState(Vec<f64>),

    #[error("simulation diverged at log row {row}: {what}")]
    Diverged { row: usize, what: String },

    #[error("invalid simulation settings: {0}")]
    InvalidSim(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration rather than a
    /// failure during a run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidBox { .. }
                | Error::InvalidEstimator(_)
                | Error::InvalidBlendRate(_)
                | Error::InvalidSharpness(_)
                | Error::InvalidSim(_)
                | Error::UnsafeInitialState(_)
        )
    }
}
