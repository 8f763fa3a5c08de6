use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Log {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("a study compares exactly two methods, got {0}")]
    MethodCount(usize),
    #[error("no images found in {0}")]
    NoImages(PathBuf),
    #[error("missing maps for images: {}", .0.join(", "))]
    MissingMaps(Vec<String>),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("rater `{rater}` already voted on item `{item}`")]
    DuplicateVote { rater: String, item: String },
    #[error("no votes recorded")]
    NoVotes,
}

impl StudyError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StudyError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, StudyError>;
