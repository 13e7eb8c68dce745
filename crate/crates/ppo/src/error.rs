use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error(transparent)]
    Env(#[from] aspace_core::Error),
    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid PPO config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{context}: {source}")]
    Run {
        context: String,
        #[source]
        source: Box<PpoError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PpoError {
    pub(crate) fn in_run(self, context: impl Into<String>) -> Self {
        PpoError::Run {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, PpoError>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(PpoError::Length { what, expected, got })
    }
}
