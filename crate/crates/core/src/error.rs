use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: pivot {pivot:e} at row {row} (raise jitter)")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("symmetric eigensolver did not converge for a {dim}x{dim} matrix within {cap} iterations")]
    ConvergenceFailure { dim: usize, cap: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate group: {0}")]
    DegenerateGroup(String),

    #[error("requested {k} embeddings but only {n} training instances")]
    KTooLarge { k: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("no rows left after filtering {0}")]
    EmptyAfterFiltering(String),

    #[error("column `{column}` value `{value}` did not binarize to 0 or 1")]
    NonBinaryOutcome { column: String, value: String },

    #[error("could not draw a split with both groups and both labels after {attempts} attempts")]
    DegenerateSplit { attempts: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported model format `{found}` (expected `{expected}`)")]
    Format { expected: String, found: String },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Configuration problems are reported with a different exit code than
    /// failures that happen while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::MissingColumn(_)
                | Error::InvalidArgument(_)
                | Error::Json(_)
                | Error::Format { .. }
        )
    }
}
