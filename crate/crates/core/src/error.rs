use alloc::string::String;

use crate::series::Space;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("series of length {len} is shorter than the required {required}")]
    SeriesTooShort { len: usize, required: usize },

    #[error("degenerate train/validation split: {0}")]
    DegenerateSplit(String),

    #[error("expected a {expected:?}-space series, got {found:?}")]
    SpaceTagMismatch { expected: Space, found: Space },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite result: {0}")]
    NonFiniteResult(String),

    #[error("argument outside the function domain: {0}")]
    DomainError(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid time stamps: {0}")]
    InvalidStamps(String),

    #[error("empty input")]
    EmptyInput,

    #[error("k = {k} exceeds the {distinct} distinct points")]
    KTooLarge { k: usize, distinct: usize },

    #[error("{region} region holds {points} points, fewer than its {k} clusters")]
    RegionEmpty { region: &'static str, points: usize, k: usize },

    #[error("no transitions observed")]
    NoTransitions,

    #[error("count table of {cells} cells exceeds the limit; use the deep state generator")]
    StateSpaceTooLarge { cells: u128 },

    #[error("state {state} is outside 0..{n_states}")]
    InvalidState { state: usize, n_states: usize },

    #[error("unknown Markov state {state} (model has {n_states} states)")]
    UnknownState { state: usize, n_states: usize },

    #[error("target class probability {0} is not positive")]
    DegenerateProbability(f64),

    #[error("loss node has shape {rows}x{cols}, expected a scalar")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("no training windows could be formed")]
    NoWindows,

    #[error("matrix is not positive semi-definite (pivot {pivot:e} at index {index})")]
    NotPsd { pivot: f64, index: usize },

    #[error("sample correlation matrix is singular")]
    SingularSampleCorrelation,

    #[error("empty series")]
    EmptySeries,

    #[error("dense covariance of dimension {dim} exceeds the limit of {limit}")]
    CovarianceTooLarge { dim: usize, limit: usize },

    #[error("PSD repair changed the covariance by {relative_change:.4} (Frobenius, relative)")]
    RepairFailed { relative_change: f64 },

    #[error("reference matrix has zero norm")]
    ZeroTarget,

    #[error("exceedance curves share no grid point with tail mass")]
    EmptyTailGrid,

    #[error("stations are not aligned: {0}")]
    MisalignedStations(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
