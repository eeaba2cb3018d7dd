use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("prediction set is empty")]
    EmptyInput,

    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("score matrix has {len} values, expected {n} rows x {k} classes")]
    ShapeMismatch { len: usize, n: usize, k: usize },

    #[error("row {row}: probabilities sum to {sum}, outside the 1e-6 simplex tolerance")]
    NotNormalized { row: usize, sum: f64 },

    #[error("row {row}: label {label} is outside [0, {k})")]
    LabelOutOfRange { row: usize, label: usize, k: usize },

    #[error("row {row}: non-finite score")]
    NonFiniteScore { row: usize },

    #[error("{0} example ids supplied for {1} examples")]
    IdCountMismatch(usize, usize),

    #[error("bin count must be at least 1")]
    ZeroBins,

    #[error("equal-mass binning with {bins} bins needs at least as many samples, got {samples}")]
    TooManyBins { bins: usize, samples: usize },

    #[error("temperature must be positive and finite, got {0}")]
    NonPositiveTemperature(f64),

    #[error("cannot fit a temperature on an empty set")]
    EmptyFitSet,

    #[error("split fraction {fraction} of {n} examples leaves one side empty")]
    DegenerateSplit { fraction: f64, n: usize },

    #[error("class subset is empty")]
    EmptySubset,

    #[error("class subset is invalid: {0}")]
    InvalidSubset(String),

    #[error("row {row}: label {label} is not in the class subset")]
    LabelNotInSubset { row: usize, label: usize },

    #[error("bin has {0} samples; at least 2 are required")]
    BinTooSmall(usize),

    #[error("bin {bin}: confidence gap undefined with accuracy {accuracy}")]
    UndefinedDelta { bin: usize, accuracy: f64 },

    #[error("invalid confidence support: {0}")]
    InvalidSupport(String),

    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    #[error("point {index} has a non-positive coordinate")]
    NonPositiveCoordinate { index: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: unexpected header: {message}")]
    HeaderMismatch { path: PathBuf, message: String },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("every manifest entry failed")]
    AllEntriesFailed,

    #[error("{path}: {source}")]
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

    /// Stable machine-readable name used in CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyInput => "EmptyInput",
            Error::TooFewClasses(_) => "TooFewClasses",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::NonFiniteScore { .. } => "NonFiniteScore",
            Error::IdCountMismatch(..) => "IdCountMismatch",
            Error::ZeroBins => "ZeroBins",
            Error::TooManyBins { .. } => "TooManyBins",
            Error::NonPositiveTemperature(_) => "NonPositiveTemperature",
            Error::EmptyFitSet => "EmptyFitSet",
            Error::DegenerateSplit { .. } => "DegenerateSplit",
            Error::EmptySubset => "EmptySubset",
            Error::InvalidSubset(_) => "InvalidSubset",
            Error::LabelNotInSubset { .. } => "LabelNotInSubset",
            Error::BinTooSmall(_) => "BinTooSmall",
            Error::UndefinedDelta { .. } => "UndefinedDelta",
            Error::InvalidSupport(_) => "InvalidSupport",
            Error::Underdetermined(_) => "Underdetermined",
            Error::NonPositiveCoordinate { .. } => "NonPositiveCoordinate",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Parse { .. } => "ParseError",
            Error::HeaderMismatch { .. } => "HeaderMismatch",
            Error::InvalidManifest(_) => "InvalidManifest",
            Error::AllEntriesFailed => "AllEntriesFailed",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}
