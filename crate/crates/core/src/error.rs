use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("did not converge: {0} (residual {residual:e})", residual = .1)]
    Convergence(String, f64),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("certification failed: {message}")]
    Certification {
        message: String,
        /// First grid time at which the certificate failed, if time-indexed.
        time: Option<f64>,
    },

    #[error("simulation diverged at t = {time} s: {message}")]
    Divergence { time: f64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) | Error::Json(_) => 2,
            Error::Divergence { .. } => 3,
            Error::Certification { .. } => 4,
            _ => 1,
        }
    }
}
