use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GimcError>;

/// Broad category of a failure, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum GimcError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("document {doc}: {msg}")]
    Json { doc: String, msg: String },

    #[error("document {doc}{}, field {field}: {msg}", sentence_suffix(*.sentence))]
    Schema {
        doc: String,
        sentence: Option<usize>,
        field: String,
        msg: String,
    },

    #[error("dictionary {path} line {line}: {msg}")]
    Dictionary {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("embedding cache: {0}")]
    Cache(String),

    #[error("embedding cache is missing key {0}")]
    MissingCacheKey(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("overlapping event spans [{0}, {1}) and [{2}, {3})")]
    OverlappingSpans(usize, usize, usize, usize),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("no bilingual dictionaries configured")]
    NoDictionaries,

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl GimcError {
    pub fn schema(doc: &str, sentence: Option<usize>, field: &str, msg: impl Into<String>) -> Self {
        GimcError::Schema {
            doc: doc.to_string(),
            sentence,
            field: field.to_string(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GimcError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            GimcError::Config(_) | GimcError::NoDictionaries => ErrorClass::Usage,
            GimcError::NonFinite(_) | GimcError::Numeric(_) | GimcError::Dimension { .. } => {
                ErrorClass::Numeric
            }
            _ => ErrorClass::Data,
        }
    }
}

fn sentence_suffix(sentence: Option<usize>) -> String {
    sentence.map(|s| format!(", sentence {s}")).unwrap_or_default()
}
