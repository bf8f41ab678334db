use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("no nodes")]
    NoNodes,
    #[error("degenerate distance {0}")]
    DegenerateDistance(f64),
    #[error("unreachable node: uplink rate is {0}")]
    UnreachableNode(f64),
    #[error("concurrent uplink count must be at least 1")]
    ZeroConcurrency,
    #[error("cpu frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("negative latency component {0}")]
    NegativeLatency(f64),
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),
    #[error("upgrade state: {0}")]
    Upgrade(String),
    #[error("deadlock at t={clock}s: task {task} has no feasible node and nothing can free capacity")]
    Deadlock { clock: f64, task: usize },
    #[error("episode is not done")]
    EpisodeNotDone,
    #[error("episode is already done")]
    EpisodeDone,
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("empty feasible set")]
    EmptyFeasibleSet,
    #[error("no feasible action")]
    NoFeasibleAction,
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("non-finite loss {0}")]
    NonFiniteLoss(f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("missing checkpoint for {variable}={value}")]
    MissingCheckpoint { variable: String, value: usize },
    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },
    #[error("empty table")]
    EmptyTable,
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::InvalidHyperparams(_) => "invalid_hyperparams",
            Error::NoNodes => "no_nodes",
            Error::DegenerateDistance(_) => "degenerate_distance",
            Error::UnreachableNode(_) => "unreachable_node",
            Error::ZeroConcurrency => "zero_concurrency",
            Error::NonPositiveFrequency(_) => "non_positive_frequency",
            Error::NegativeLatency(_) => "negative_latency",
            Error::ConstraintViolation(_) => "constraint_violation",
            Error::Upgrade(_) => "upgrade_state",
            Error::Deadlock { .. } => "deadlock",
            Error::EpisodeNotDone => "episode_not_done",
            Error::EpisodeDone => "episode_done",
            Error::Invariant(_) => "invariant",
            Error::EmptyFeasibleSet => "empty_feasible_set",
            Error::NoFeasibleAction => "no_feasible_action",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFiniteLoss(_) => "non_finite_loss",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::Checkpoint(_) => "checkpoint",
            Error::MissingCheckpoint { .. } => "missing_checkpoint",
            Error::ConfigParse { .. } => "config_parse",
            Error::EmptyTable => "empty_table",
            Error::UnknownPolicy(_) => "unknown_policy",
            Error::Plot(_) => "plot",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
