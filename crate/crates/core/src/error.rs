use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of a function.
    #[error("{function}: argument {value} outside domain ({requirement})")]
    Domain {
        function: &'static str,
        value: f64,
        requirement: &'static str,
    },

    /// Two vectors (or a vector and a network) disagree on a dimension.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// A parameter violates its documented invariant.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A ranking metric was asked for on data without both classes.
    #[error("{metric} needs at least one positive and one negative example (positives {positives}, negatives {negatives})")]
    SingleClass {
        metric: &'static str,
        positives: usize,
        negatives: usize,
    },

    /// Misclassification detection is undefined when every prediction is right
    /// (or every prediction is wrong).
    #[error("degenerate misclassification task: error rate {error_rate}")]
    DegenerateTask { error_rate: f64 },

    /// Training produced a NaN or infinite loss.
    #[error("non-finite loss {loss} at step {step} (epoch {epoch}, batch {batch}, lr {lr:e})")]
    NonFiniteLoss {
        loss: f64,
        step: usize,
        epoch: usize,
        batch: usize,
        lr: f64,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
