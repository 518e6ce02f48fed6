use thiserror::Error;

use crate::dsl::Diagnostic;
use crate::geometry::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene: {}", summarize(.0))]
    InvalidScene(Vec<Violation>),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unresolved target: {0}")]
    UnresolvedTarget(String),
    #[error("{0}")]
    Parse(Diagnostic),
    #[error("scene has zero extent: all points coincide")]
    ZeroExtent,
    #[error("malformed svg: {0}")]
    MalformedSvg(String),
    #[error("no applicable {0}")]
    NotApplicable(String),
    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn out_of_range(what: &'static str, detail: impl Into<String>) -> Self {
        Error::OutOfRange { what, detail: detail.into() }
    }

    pub(crate) fn file(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::File { path: path.as_ref().display().to_string(), source }
    }
}

fn summarize(vs: &[Violation]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
