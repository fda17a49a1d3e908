use thiserror::Error;

/// Errors raised by the library. Numeric payloads are reported as `f64`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("eigensolver did not converge after {iterations} iterations (best residual {best_residual:.3e})")]
    NonConvergence { iterations: usize, best_residual: f64 },

    #[error("spectral tail too heavy: estimated tail {tail:.3e}; at least {required} eigenpairs needed (have {have})")]
    InsufficientSpectrum { tail: f64, required: usize, have: usize },

    #[error("excited-particle target {target} unreachable; maximum reachable with retained modes is {max_reachable}")]
    Unreachable { target: f64, max_reachable: f64 },

    #[error("discarded thermal trace {discarded:.3e} exceeds {limit:.3e}; more modes are required")]
    TooFewModes { discarded: f64, limit: f64 },

    #[error("input must have unit norm (got norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("energy increased after {halvings} step halvings (from {previous} to {current})")]
    EnergyIncrease { halvings: usize, previous: f64, current: f64 },

    #[error("minimization stalled: last energies {previous} and {current}")]
    Oscillation { previous: f64, current: f64 },

    #[error("norm drift {drift:.3e} per unit time exceeds {limit:.1e}; use a smaller dt")]
    NormDrift { drift: f64, limit: f64 },

    #[error("trace drift {drift:.3e} exceeds {limit:.1e}")]
    TraceDrift { drift: f64, limit: f64 },

    #[error("symmetry drift {drift:.3e} in one step exceeds {limit:.1e}")]
    SymmetryDrift { drift: f64, limit: f64 },

    #[error("mode-state probe failed at step {step}: {what} deviates by {deviation:.3e}")]
    ProbeDisagreement { step: usize, what: String, deviation: f64 },

    #[error("{what} of size {size} exceeds budget {budget}")]
    Budget { what: &'static str, size: usize, budget: usize },

    #[error("truncation estimate {estimate:.3e} exceeds tolerance {tol:.1e}: {advice}")]
    Truncation { estimate: f64, tol: f64, advice: String },

    #[error("assembled operator `{which}` is not Hermitian (defect {defect:.3e})")]
    NotHermitian { which: String, defect: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
