use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("degenerate resonator frequencies ({0}); use the degenerate builder")]
    DegenerateConfiguration(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("truncation leakage {leakage:.3e} exceeds {limit:.1e}; increase the Fock truncation")]
    TruncationLeakage { leakage: f64, limit: f64 },

    #[error("step size fell below {min_step:.3e} at t = {time:.6e}; the problem is too stiff for the requested tolerance")]
    Stiffness { time: f64, min_step: f64 },

    #[error("integration quality at t = {time:.6e}: {detail}")]
    IntegrationQuality { time: f64, detail: String },

    #[error("steady state is not unique (null-space dimension {0})")]
    NonUniqueSteadyState(usize),

    #[error("{path}:{line}:{column}: {message}")]
    Config {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
