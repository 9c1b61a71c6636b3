use std::path::PathBuf;

use thiserror::Error;

use crate::domain::TaskKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unrecognized {task} label: {text:?}")]
    UnrecognizedLabel { text: String, task: TaskKind },

    #[error("invalid domain {0:?}")]
    InvalidDomain(String),

    #[error("template {template}: placeholder `{name}` is unbound or empty")]
    UnknownPlaceholder { template: String, name: String },

    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),

    #[error("unknown policy topic {0:?}")]
    UnknownTopic(String),

    #[error("article text is empty")]
    EmptyArticle,

    #[error("template resource is invalid: {0}")]
    TemplateResource(String),

    #[error("backend request failed after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },

    #[error("backend configuration: {0}")]
    Config(String),

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{0}: file has no data rows")]
    EmptyFile(PathBuf),

    #[error("class {label} has {count} member(s); need at least {needed}")]
    ClassTooSmall {
        label: String,
        count: usize,
        needed: usize,
    },

    #[error("responses span several outlets ({first} and {other})")]
    MixedOutlets { first: String, other: String },

    #[error("no non-empty training documents")]
    EmptyCorpus,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("every vote abstained")]
    AllAbstained,

    #[error("length mismatch: {preds} predictions vs {gold} gold labels")]
    LengthMismatch { preds: usize, gold: usize },

    #[error("nothing to evaluate")]
    Empty,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
