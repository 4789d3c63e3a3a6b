use thiserror::Error;

/// Errors raised by the laboratory. Each variant maps onto a process exit code
/// through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("non-finite sample at node {index} (y = {y})")]
    NonFinite { index: usize, y: f64 },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("parity violation: {0}")]
    Parity(String),

    #[error("degenerate direction: {0}")]
    Degenerate(String),

    /// The requested computation is outside the perturbative regime
    /// (contraction constant >= 1, no bracketing sign change, ...).
    #[error("outside perturbative regime: {0}")]
    Regime(String),

    #[error("ill-conditioned system (condition estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("iteration cap {cap} exceeded (last change {last:.3e})")]
    NoConvergence { cap: usize, last: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("tolerance failure: {0}")]
    Tolerance(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("simulation aborted at t = {t}: {reason}")]
    Aborted { t: f64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownName(_) => 2,
            Error::Regime(_) | Error::IllConditioned(_) | Error::NoConvergence { .. } => 3,
            Error::Tolerance(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
