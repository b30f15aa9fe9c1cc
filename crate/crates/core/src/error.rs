use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("degenerate bounce: gradient vanishes at the bounce location")]
    DegenerateBounce,

    #[error("potential has no Hessian bounds; thinning needs an upper curvature bound")]
    MissingHessianBounds,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("time {t} outside path range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
