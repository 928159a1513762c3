use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("outside the regime of validity: {0}")]
    Regime(String),

    #[error("combinatorial budget exceeded: {required} supports needed, budget {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("solver did not converge within {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        /// Best iterate found before giving up.
        best: Vec<f64>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
