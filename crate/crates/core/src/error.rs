use crate::nn::TrainedModel;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand dimensions are incompatible; names both shapes.
    #[error(
        "{context}: shape mismatch, left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}"
    )]
    Shape {
        context: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A numeric routine failed (non-convergence, non-finite result).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Training loss exceeded the divergence guard or went non-finite.
    /// Carries the last state with a finite loss so callers can decide
    /// how to continue; its loss curve is padded to full length with the
    /// guard value.
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged {
        epoch: usize,
        last_good: Box<TrainedModel>,
    },

    /// Bundle ids or their order do not match the fitted transform.
    #[error("lineage mismatch: {0}")]
    Lineage(String),

    /// A text file could not be parsed; 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Error::Shape {
            context,
            lhs_rows: lhs.0,
            lhs_cols: lhs.1,
            rhs_rows: rhs.0,
            rhs_cols: rhs.1,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
