use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("age at death {0} h is outside [0, 8784)")]
    AgeOutOfDomain(f64),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("feature `{0}` has no observed training values")]
    AllMissing(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("residual missing value in feature `{0}`")]
    ResidualMissing(String),

    #[error("feature `{feature}` required by subset {subset} is absent")]
    MissingFeature { feature: String, subset: String },

    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },

    #[error("empty class: {0}")]
    EmptyClass(String),

    #[error("empty partition: {0}")]
    EmptyPartition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("calibration bracket failure: {0}")]
    Bracket(String),

    #[error("model format: {0}")]
    Format(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

/// Attaches a pipeline stage label to an error.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
