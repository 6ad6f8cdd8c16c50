use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid shape parameter: {0}")]
    InvalidShape(String),

    #[error("invalid probability vector: {0}")]
    InvalidSimplex(String),

    #[error("invalid range parameter {0}; must be positive and finite")]
    InvalidRange(f64),

    #[error("requested {requested} knots but only {distinct} distinct sites are available")]
    TooManyKnots { requested: usize, distinct: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("threshold {index}: {source}")]
    AtThreshold {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips iteration/threshold context and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } | Error::AtThreshold { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures that originate in the numerics rather than in the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self.root(), Error::NotPositiveDefinite { .. })
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_threshold(self, index: usize) -> Self {
        Error::AtThreshold {
            index,
            source: Box::new(self),
        }
    }
}
