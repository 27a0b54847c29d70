//! Crate-wide error type.
//!
//! Every fallible public operation returns [`Result`]. Variants are grouped by
//! the stage that produces them so a caller (in particular the CLI) can map
//! them onto coarse exit categories without string matching.

use std::path::PathBuf;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error for mesh/contact/hand IO, geometry construction, and the
/// synthesis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying filesystem failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A mesh, contact map, hand config, or manifest file failed to parse.
    #[error("failed to parse {what} from {path}: {detail}")]
    Parse {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },

    /// Structurally invalid input (bad indices, empty mesh, NaNs, ...).
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    /// A hand configuration violates the kinematic-model rules.
    #[error("invalid hand model `{name}`: {detail}")]
    HandModel { name: String, detail: String },

    /// A requested built-in asset does not exist.
    #[error("unknown built-in {kind} `{name}`")]
    UnknownBuiltin { kind: &'static str, name: String },

    /// The synthesis pipeline could not produce a usable result.
    #[error("pipeline failure: {detail}")]
    Pipeline { detail: String },

    /// An evaluation scenario failed; carries the scenario name for reporting.
    #[error("scenario `{scenario}` failed: {detail}")]
    Scenario { scenario: String, detail: String },
}

impl Error {
    /// Helper for filesystem errors.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Helper for parse errors.
    pub fn parse(what: &'static str, path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Parse {
            what,
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Helper for validation errors.
    pub fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }
}
