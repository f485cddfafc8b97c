use alloc::string::String;

/// Errors reported by the pricing library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid environment: {0}")]
    InvalidSpec(String),
    #[error("price must be positive, got {0}")]
    NonPositivePrice(f64),
    #[error("degenerate bounds: {0}")]
    DegenerateBounds(String),
    #[error("unbounded covariates: {0}")]
    UnboundedCovariates(&'static str),
    #[error("too few Monte Carlo samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: u64, got: u64 },
    #[error("price set has zero measure")]
    ZeroMeasure,
    #[error("infeasible point: {0}")]
    Infeasible(String),
    #[error("policy has already been used in another episode")]
    PolicyReused,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
