use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum SimError {
    /// Configuration rejected at parse/validation time. Each entry names the
    /// violated data condition or hypothesis.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    /// A nonlinear solve did not converge; carries the last iterate and
    /// residual so the caller can shrink the time step or restart.
    #[error("solver failed: {context} (residual {residual:.3e} after {iterations} iterations)")]
    SolverFailure {
        context: String,
        residual: f64,
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    /// Time stepping aborted after exhausting the step-halving budget.
    #[error("run aborted at t={time:.6}: {reason}")]
    RunAborted { time: f64, reason: String },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}
