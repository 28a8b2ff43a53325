use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OtError {
    #[error("marginal `{which}` has an invalid entry {value} at index {index}")]
    InvalidMarginal {
        which: &'static str,
        index: usize,
        value: f64,
    },
    #[error("marginal `{which}` sums to {sum}, expected 1 within 1e-12")]
    MarginalMass { which: &'static str, sum: f64 },
    #[error("marginal `{which}` has no positive entry")]
    AllZeroMarginal { which: &'static str },
    #[error("marginal `{which}` is zero at index {index}; compact the problem first")]
    ZeroMarginal { which: &'static str, index: usize },
    #[error("cost entry ({i}, {j}) = {value} is negative or non-finite")]
    InvalidCost { i: usize, j: usize, value: f64 },
    #[error("regularization must be positive and finite, got {0}")]
    InvalidGamma(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("log-kernel entry ({i}, {j}) is not finite")]
    KernelOverflow { i: usize, j: usize },
    #[error("transport plan entry ({i}, {j}) overflowed")]
    PlanOverflow { i: usize, j: usize },
    #[error("dual objective overflowed")]
    DualOverflow,
    #[error("potential `{which}` is not finite at index {index}")]
    NonFinitePotential { which: &'static str, index: usize },
    #[error("negative or non-finite input {0}")]
    NegativeInput(f64),
    #[error("total masses differ: {a_mass} vs {b_mass}")]
    MassMismatch { a_mass: f64, b_mass: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("exact oracle failed: {0}")]
    Oracle(String),
    #[error("reference optimum stalled at violation {violation:e} after {iterations} iterations")]
    ReferenceNotConverged { violation: f64, iterations: usize },
}

pub type Result<T> = std::result::Result<T, OtError>;
