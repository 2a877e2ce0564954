use thiserror::Error;

/// Errors raised by the simulators, oracles and fitters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter is outside the domain where the model is defined.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Two distributions (or a distribution and a count vector) disagree on support size.
    #[error("support mismatch: {left} vs {right}")]
    SupportMismatch { left: usize, right: usize },

    /// The probability vector is not a normalized, non-negative distribution.
    #[error("not a distribution: {0}")]
    NotNormalized(String),

    /// A transform chain removed all probability mass.
    #[error("all probability mass removed: {0}")]
    MassDestroyed(String),

    /// Exhaustive enumeration would exceed the configured budget.
    #[error("enumeration budget exceeded: {combinations} combinations > {budget}")]
    EnumerationBudget { combinations: f64, budget: f64 },

    /// A fit needs more points than the curve (or window) provides.
    #[error("insufficient points: need {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    /// The curve does not have a plateau/decay shape.
    #[error("no crossover found: {0}")]
    NoCrossover(String),

    /// An input collection was empty.
    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure_same_support(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::SupportMismatch { left, right })
    }
}
