use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in `{field}`: expected {expected}, got {got}")]
    Dimension {
        field: String,
        expected: String,
        got: String,
    },

    /// A design step could not satisfy the named condition.
    #[error("design infeasible ({condition}): {detail}")]
    DesignInfeasible { condition: String, detail: String },

    #[error("subspace recursion did not converge within {steps} steps")]
    NonConvergence { steps: usize },

    #[error("unsupported attack: {0}")]
    UnsupportedAttack(String),

    #[error("covert attack infeasible: {0}")]
    CovertnessInfeasible(String),

    #[error("attack infeasible: {0}")]
    AttackInfeasible(String),

    #[error("invalid replay window: {0}")]
    InvalidWindow(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(field: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            field: field.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn infeasible(condition: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::DesignInfeasible {
            condition: condition.into(),
            detail: detail.into(),
        }
    }
}
