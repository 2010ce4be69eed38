use thiserror::Error;

/// Problems with input data or model construction. Positions are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("time grid must hold at least 2 points, got {0}")]
    GridTooShort(usize),
    #[error("time grid is not strictly increasing at position {position}")]
    NonMonotonicGrid { position: usize },
    #[error("dataset holds no series")]
    EmptyDataset,
    #[error("series {series} has length {found}, expected {expected}")]
    RaggedSeries { series: usize, expected: usize, found: usize },
    #[error("non-finite value in series {series} at position {position}")]
    NonFiniteValue { series: usize, position: usize },
    #[error("non-finite time stamp at position {position}")]
    NonFiniteTime { position: usize },
    #[error("polynomial degree {degree} needs at least {} grid points, got {points}", degree + 1)]
    DegreeTooLargeForGrid { degree: usize, points: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {label} out of range 1..={clusters}")]
    LabelOutOfRange { label: usize, clusters: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
}

/// Failures raised while fitting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("cluster {cluster} lost all posterior mass")]
    EmptyComponent { cluster: usize },
    #[error("all {restarts} restarts failed")]
    AllRestartsFailed { restarts: usize },
    #[error("segments of length {segment_len} are too short for degree {degree}")]
    InsufficientSegmentLength { segment_len: usize, degree: usize },
    #[error("{clusters} clusters requested from {series} series")]
    TooFewSeries { clusters: usize, series: usize },
    #[error("objective became non-finite")]
    NonFiniteObjective,
    #[error("no feasible cell in the selection grid")]
    NoFeasibleCell,
}
