use thiserror::Error;

/// Errors raised by the toolkit. Each variant names the module whose contract
/// was violated so callers can map it onto an exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),

    #[error("levy: {0}")]
    Levy(String),

    #[error("levy: operator order 2σ = {0} must lie in [0, 1)")]
    OrderTooLarge(f64),

    #[error("levy: measure is not integrable against 1 ∧ |z| ({0})")]
    NonIntegrable(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("hamiltonian: {0}")]
    Hamiltonian(String),

    #[error("{module}: CFL condition unresolvable ({detail})")]
    Cfl { module: &'static str, detail: String },

    #[error("{module}: non-finite value encountered ({detail})")]
    NonFinite { module: &'static str, detail: String },

    #[error("regularity: {0}")]
    Regularity(String),

    #[error("coupling: {0}")]
    Coupling(String),

    #[error("sde: {0}")]
    Sde(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// True for failures of a numerical nature (CFL, overflow) as opposed to
    /// invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Cfl { .. } | Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
