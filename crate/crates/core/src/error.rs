use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate vector: norm {norm:e} is at or below the floor {floor:e}")]
    DegenerateVector { norm: f64, floor: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("invalid embedding spec: {0}")]
    Spec(String),

    #[error("no embedding store for model `{0}`")]
    MissingModel(String),

    #[error("text has no token resolvable in any embedding store")]
    EmptyText,

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("mining error: {0}")]
    Mining(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("bad magic in {what}: expected {expected:?}, found {found:?}")]
    BadMagic {
        what: &'static str,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }

    /// True for errors caused by user input (bad files, bad config) rather than
    /// internal failures. The CLI maps these to exit code 2.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::Contract(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
