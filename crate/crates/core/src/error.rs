use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("concept id {id} out of range (vocabulary size {size})")]
    ConceptOutOfRange { id: u32, size: usize },

    #[error("word {word:?} is not in the lexicon of {lang}")]
    UnknownWord { word: String, lang: String },

    #[error("unknown language tag {0:?}")]
    UnknownLanguage(String),

    #[error("token id {id} out of range (vocabulary size {size})")]
    TokenOutOfRange { id: u32, size: usize },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("vocabulary hash mismatch: checkpoint has {expected}, vocabulary has {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("experiment {scenario} failed in sub-run {subrun}: {reason}")]
    Experiment {
        scenario: String,
        subrun: String,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attach a path to `std::io::Result`s.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
