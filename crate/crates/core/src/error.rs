use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("executing {steps} steps from depth {depth} would pass the horizon {horizon}")]
    HorizonExceeded {
        depth: usize,
        steps: usize,
        horizon: usize,
    },
    #[error("task returned no legal action at depth {depth} (horizon {horizon})")]
    NoLegalAction { depth: usize, horizon: usize },
    #[error("state at depth {depth} is not terminal (horizon {horizon})")]
    NotTerminal { depth: usize, horizon: usize },
    #[error("cannot choose from an empty action set")]
    EmptyActionSet,
    #[error("feature index {index} out of range for dimension {dim}")]
    DimensionMismatch { index: usize, dim: usize },
    #[error("non-finite cost {0}")]
    NonFiniteCost(f64),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("feature/cost length mismatch: {features} feature vectors, {costs} costs")]
    ArityMismatch { features: usize, costs: usize },
    #[error("reference policy needs a gold label")]
    MissingGold,
    #[error("no trained policies in history")]
    NoPolicies,
    #[error("loss oracle returned {0}, outside [0, 1]")]
    LossOutOfRange(f64),
    #[error("action {action} is not legal in state {state}")]
    IllegalAction { state: usize, action: usize },
    #[error("training trace is incomplete: {0}")]
    TraceIncomplete(String),
    #[error("T = {0} is too large for exhaustive hypercube search (max 7)")]
    TooLarge(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad model file: {0}")]
    Format(String),
    #[error("model dimension {model} does not match task dimension {task}")]
    ModelTaskMismatch { model: usize, task: usize },
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
