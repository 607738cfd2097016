use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("signals have different lengths ({left} vs {right})")]
    MismatchedLengths { left: usize, right: usize },

    #[error("index range is empty")]
    EmptyRange,

    #[error("received signal has zero energy over the requested range")]
    ZeroReceivedEnergy,

    #[error("range {start}..{end} does not fit a signal of length {len}")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },

    #[error("{n} samples cannot be split 80/10/10 into non-empty contiguous ranges")]
    SplitTooSmall { n: usize },

    #[error("signal contains a non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("signal must contain at least one sample")]
    EmptySignal,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fit range holds {have} samples but at least {need} are required")]
    FitRangeTooSmall { have: usize, need: usize },

    #[error("regressor matrix is rank deficient; degenerate columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("need at least {need} distinct values to train {need} quantizer levels, got {have}")]
    TooFewDistinctValues { need: usize, have: usize },

    #[error("level count must be at least 2, got {0}")]
    TooFewLevels(usize),

    #[error("row-update system is singular (rho = mu = 0 and the data term does not determine the row)")]
    SingularRowUpdate,

    #[error("index {index} out of range for dimension {dim} with {levels} levels")]
    LevelOutOfRange { dim: usize, index: usize, levels: usize },

    #[error("malformed dataset: {0}")]
    MalformedDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
