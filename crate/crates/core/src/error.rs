use thiserror::Error;

/// Errors reported by every fallible operation in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FvsError {
    /// Shapes of the supplied arrays do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value was out of its admissible range (NaN, negative variance, γ ∉ [0,1], ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The design or a derived matrix is not suitable for the requested operation.
    #[error("rank condition violated: {0}")]
    Rank(String),

    /// A factorization or iteration failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A matrix that must be nonsingular was found to be singular.
    #[error("singular matrix at column {column}")]
    Singular { column: usize },

    /// A simulation setting could not be constructed.
    #[error("infeasible setting: {0}")]
    Infeasible(String),

    /// Reading or writing a report failed.
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, FvsError>;

pub(crate) fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(FvsError::InvalidInput(format!(
            "{name} has a non-finite entry at index {i}"
        ))),
        None => Ok(()),
    }
}

impl From<csv::Error> for FvsError {
    fn from(e: csv::Error) -> Self {
        FvsError::Io(e.to_string())
    }
}

impl From<std::io::Error> for FvsError {
    fn from(e: std::io::Error) -> Self {
        FvsError::Io(e.to_string())
    }
}
