//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate rating for user `{user}` and item `{item}`")]
    DuplicateRating { user: String, item: String },

    #[error("rating {value} for user `{user}` and item `{item}` outside scale [{min}, {max}]")]
    RatingOutOfScale {
        user: String,
        item: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid rating scale: min {min} must be strictly less than max {max}")]
    InvalidScale { min: f64, max: f64 },

    #[error("matrix has no ratings")]
    EmptyMatrix,

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("cluster count {requested} exceeds significant-user count {available}")]
    TooManyClusters { requested: usize, available: usize },

    #[error("fusion parameter {name} = {value} outside [0, 1]")]
    InvalidFusionParam { name: &'static str, value: f64 },

    #[error("line {line_no}: malformed record: {content}")]
    MalformedLine { line_no: usize, content: String },

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("user `{user}` has negative dwell time at location `{location}`")]
    NegativeDwell { user: String, location: String },

    #[error("user `{0}` has zero total dwell time; no preference distribution exists")]
    ZeroTotalDwell(String),

    #[error("empty input")]
    EmptyInput,

    #[error("split would leave train or test empty (n = {n}, fraction = {fraction}, folds = {folds})")]
    DegenerateSplit { n: usize, fraction: f64, folds: usize },

    #[error("{field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
