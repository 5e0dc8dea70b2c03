use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),

    #[error("cap half-width {delta} is too large: {reason}")]
    CapTooLarge { delta: f64, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("ball of radius {r} around {x0:?} leaves the grid domain")]
    BallOutsideDomain { x0: Vec<f64>, r: f64 },

    #[error("insufficient scale range: {0}")]
    InsufficientScales(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
