use thiserror::Error;

/// Errors raised anywhere in the crate. The CLI maps each variant to its own
/// exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("parametrix series did not converge: {0}")]
    Series(String),
    #[error("growth condition violated: {0}")]
    Growth(String),
    #[error("unstable time step: {0}")]
    Stability(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error("expression error: {0}")]
    Expr(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Expr(_) => 2,
            Error::Parameter(_) | Error::Domain(_) => 3,
            Error::Overflow(_) | Error::Divergence(_) => 4,
            Error::Quadrature(_) | Error::Series(_) => 5,
            Error::Growth(_) | Error::Stability(_) => 6,
            Error::Artifact(_) | Error::Io(_) => 7,
        }
    }
}
