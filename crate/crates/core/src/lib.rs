//! Stochastic-simulation toolkit for checking Berry-Esseen rates of
//! statistics built from phi-mixing, non-stationary sequences.
//!
//! The crate is organized around the pipeline used by the experiments:
//!
//! * [`mixing`] computes phi- and alpha-mixing coefficients (exactly for
//!   finite chains, by enumeration) and evaluates the analytic dependence
//!   bounds (decoupling, product, covariance) that the rate arguments rest on.
//! * [`processes`] generates reproducible sample paths from non-stationary
//!   weakly dependent models with certified mixing profiles, and computes
//!   exact covariance ledgers where the model permits.
//! * [`statistics`] evaluates the statistics `T = S + R` (linear,
//!   U-statistic, studentized, function of a sample mean) together with the
//!   moment ingredients (`rho_3`, `sigma_N`, `E|R|`, `gamma`) that enter the
//!   rate bounds.
//! * [`blocks`] implements the block decompositions used to linearize
//!   variance growth (two-step construction, block/gap alternation,
//!   bounded-summand cuts).
//! * [`engine`] runs replicated experiments, estimates Kolmogorov distances
//!   against the standard normal, fits convergence-rate exponents, and
//!   evaluates the composite bound formulas.
//!
//! Everything is deterministic: a run is a pure function of its
//! configuration and root seed, independent of how many worker threads are
//! used.

pub mod blocks;
pub mod engine;
pub mod mixing;
pub mod processes;
pub mod rng;
pub mod statistics;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Exact enumeration would visit more atoms than the configured budget.
    #[error("enumeration budget exceeded: {atoms} atoms > budget {budget}")]
    BudgetExceeded { atoms: u128, budget: u128 },

    /// A finite-chain specification failed validation.
    #[error("invalid chain spec: {0}")]
    InvalidChain(String),

    /// A process specification failed validation.
    #[error("invalid process spec: {0}")]
    InvalidProcess(String),

    /// A mixing profile failed validation.
    #[error("invalid mixing profile: {0}")]
    InvalidProfile(String),

    /// Too few usable data points for a fit or estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Requested construction cannot be carried out with these parameters.
    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    /// Variance floor violated (Assumption 4 style check).
    #[error("variance {got:.6e} below required floor {floor:.6e}")]
    VarianceFloor { got: f64, floor: f64 },

    /// A sample contained a non-finite value.
    #[error("non-finite sample at path {path}")]
    NonFiniteSample { path: usize },

    /// Exact covariance is not defined for this process variant.
    #[error("exact ledger unavailable: {0}")]
    LedgerUnavailable(String),

    /// The requested operation is not defined for this statistic variant.
    #[error("unsupported statistic: {0}")]
    UnsupportedStatistic(String),

    /// An experiment configuration failed validation.
    #[error("invalid config: {field}: {message}")]
    InvalidConfig { field: String, message: String },

    /// Filesystem failure while persisting run artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Serialization failure while persisting run artifacts.
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
