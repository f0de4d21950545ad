use thiserror::Error;

use crate::growth_bounds::Tier;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid function: {0}")]
    InvalidFunction(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("divergent integral (tail stopped decaying near R = {witness:e})")]
    DivergentIntegral { witness: f64 },
    #[error("envelope failure: E({r:e}) = {e:e} exceeds mu = {mu:e}")]
    EnvelopeFailure { r: f64, e: f64, mu: f64 },
    #[error("tier {need:?} required, bound is {have:?}")]
    TierRequired { have: Tier, need: Tier },
    #[error("kernel evaluated at its singular point")]
    SingularPoint,
    #[error("empty particle field")]
    EmptyField,
    #[error("non-finite velocity at t = {time}")]
    BlowUp { time: f64 },
    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
