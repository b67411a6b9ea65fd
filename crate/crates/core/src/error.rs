use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("inconsistent clock: t={t}, round={round}, players={players}")]
    InconsistentClock { t: u64, round: u64, players: usize },
    #[error("illegal action {action} for player {player}")]
    IllegalAction { action: usize, player: usize },
    #[error("state is terminal")]
    TerminalState,
    #[error("player {queried} queried but player {current} is to move")]
    WrongAgent { queried: usize, current: usize },
    #[error("empty reward window")]
    EmptyRewards,
    #[error("trace is malformed: {0}")]
    MalformedTrace(String),
    #[error("n-step segment is invalid: {0}")]
    InvalidSegment(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("incompatible policy: {0}")]
    IncompatiblePolicy(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
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
