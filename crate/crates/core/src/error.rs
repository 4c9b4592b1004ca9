//! Error taxonomy shared across the toolkit.
//!
//! Variants map onto the CLI exit-code contract: 1 usage/config,
//! 2 data/validation, 3 training, 4 integrity.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad configuration: unknown keys, unusable preset values, missing settings.
    #[error("config error: {0}")]
    Config(String),

    /// A required input file or directory could not be read.
    #[error("load error: {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    /// A row of an input file could not be parsed.
    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// Inputs violate a documented precondition or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A novel label does not have enough training records to draw K shots.
    #[error("insufficient support for label '{label}': {available} train records available, {requested} requested")]
    InsufficientSupport {
        label: String,
        available: usize,
        requested: usize,
    },

    /// A prototype could not be built because a label has no examples.
    #[error("missing prototype: label '{0}' has no examples to average")]
    MissingPrototype(String),

    /// Model fitting failed.
    #[error("training error: {0}")]
    Training(String),

    /// An artifact's hash chain or metadata does not match its inputs.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A saved model artifact belongs to a different backend or format.
    #[error("incompatible artifact: {0}")]
    IncompatibleArtifact(String),

    /// Some grid points of an experiment sweep failed; details were recorded
    /// in the sweep output before this error was raised.
    #[error("{failed} of {total} grid points failed; first failure: {first}")]
    GridFailures {
        failed: usize,
        total: usize,
        first: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 0 success, 1 usage/config,
    /// 2 data/validation, 3 training, 4 integrity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Load { .. }
            | Error::Parse { .. }
            | Error::Validation(_)
            | Error::InsufficientSupport { .. }
            | Error::MissingPrototype(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::Training(_) => 3,
            Error::Integrity(_) | Error::IncompatibleArtifact(_) => 4,
            Error::GridFailures { first, .. } => first.exit_code(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_documented_mapping() {
        assert_eq!(Error::Config("x".into()).exit_code(), 1);
        assert_eq!(Error::Validation("x".into()).exit_code(), 2);
        assert_eq!(Error::Training("x".into()).exit_code(), 3);
        assert_eq!(Error::Integrity("x".into()).exit_code(), 4);
        assert_eq!(Error::IncompatibleArtifact("x".into()).exit_code(), 4);
        let grid = Error::GridFailures {
            failed: 1,
            total: 4,
            first: Box::new(Error::Training("x".into())),
        };
        assert_eq!(grid.exit_code(), 3);
    }
}
