use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown game `{0}`")]
    UnknownGame(String),
    #[error("unknown action label `{label}` for game `{game}`")]
    UnknownAction { game: String, label: String },
    #[error("action {action} is not legal at this state")]
    IllegalAction { action: usize },
    #[error("state is terminal")]
    TerminalState,
    #[error("state is a chance node")]
    ChanceNode,
    #[error("state is not a chance node")]
    NotChance,
    #[error("invalid mask rule: {0}")]
    InvalidRule(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("profile has no distribution for reachable key `{0}`")]
    MissingKey(String),
    #[error("value {value} outside bounds [{min}, {max}]")]
    OutOfBounds { value: f64, min: f64, max: f64 },
    #[error("game `{0}` is not zero-sum")]
    NotZeroSum(String),
    #[error("rules leave positive-reach contingency; expected zero contingency")]
    NotZeroContingency,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("not enough samples: need {needed}, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("invalid override `{0}`")]
    InvalidOverride(String),
    #[error("metric `{metric}` unavailable for agent `{agent}`")]
    MetricUnavailable { metric: String, agent: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
