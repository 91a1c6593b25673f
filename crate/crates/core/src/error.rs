use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the seeding / meshing / reconstruction stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("index out of range: {what} = {index} (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("projection domain error: {0}")]
    ProjectionDomain(String),

    #[error("geometry integrity error: {0}")]
    GeometryIntegrity(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("input validation error: {0}")]
    InputValidation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("query error: {0}")]
    Query(String),

    #[error("dimensionality error: {0}")]
    Dimensionality(String),

    #[error("degenerate input: {0}")]
    Degeneracy(String),

    #[error("mesh integrity error: {0}")]
    MeshIntegrity(String),

    #[error("empty point cloud: {0}")]
    EmptyCloud(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Broad category used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self.root() {
            Error::InvalidGeometry(_) | Error::Config(_) | Error::Index { .. } => ErrorKind::Config,
            Error::Parse { .. }
            | Error::InputValidation(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::GeometryIntegrity(_)
            | Error::MeshIntegrity(_)
            | Error::EmptyCloud(_)
            | Error::Query(_) => ErrorKind::Data,
            Error::ProjectionDomain(_)
            | Error::Domain(_)
            | Error::Estimation(_)
            | Error::Dimensionality(_)
            | Error::Degeneracy(_) => ErrorKind::Numerical,
            Error::Context { .. } => unreachable!("root() strips context"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}
