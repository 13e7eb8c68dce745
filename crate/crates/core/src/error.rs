use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate 6D rotation representation")]
    DegenerateRotation,
    #[error("unknown action space `{name}`; valid names: {valid}")]
    UnknownSpace { name: String, valid: String },
    #[error("episode is done; call reset before stepping")]
    EpisodeDone,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("degenerate limits for dimension {0}: max equals min")]
    DegenerateLimits(usize),
    #[error("space mismatch: log recorded `{log}` but replay configured `{replay}`")]
    SpaceMismatch { log: String, replay: String },
    #[error("trajectory log line {line}: {msg}")]
    CorruptLog { line: usize, msg: String },
    #[error("unsupported trajectory schema version {0}")]
    SchemaVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
