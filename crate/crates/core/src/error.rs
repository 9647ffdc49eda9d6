use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("non-finite force on particle {particle}{}", partner.map(|j| format!(" (pair with particle {j})")).unwrap_or_default())]
    NonFiniteForce {
        particle: usize,
        partner: Option<usize>,
    },

    #[error("state diverged at t = {time}: particle {particle} is not finite")]
    Divergence { time: f64, particle: usize },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("quadrature did not converge on [{a}, {b}] (estimate {estimate:e}, tolerance {tol:e})")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        tol: f64,
    },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("quadrature oracle truncation check failed: {0}")]
    Truncation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
