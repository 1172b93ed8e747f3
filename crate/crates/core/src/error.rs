use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of a Legendre function or a set.
    #[error("domain violation: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("projection did not converge after {iterations} sweeps (last change {residual:e})")]
    Projection { iterations: usize, residual: f64 },

    #[error("power iteration did not converge (last Rayleigh quotient {rayleigh:e})")]
    PowerIteration { rayleigh: f64 },

    #[error("communication graph is disconnected")]
    Disconnected,

    #[error("node {0} did not deposit a message for this round")]
    MissingDeposit(usize),

    #[error("too many actions: {count} exceeds the cap of {cap}")]
    Cardinality { count: u128, cap: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
