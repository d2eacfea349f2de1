use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dataset row {row}: {message}")]
    Dataset { row: u64, message: String },

    #[error("road {road_id}: positions {index} and {} coincide", index + 1)]
    CoincidentPositions { road_id: String, index: usize },

    #[error("sequence too short: {0}")]
    TooShort(String),

    #[error("information gain needs at least two distinct labels")]
    SingleLabel,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("curve fit is rank deficient: {0}")]
    RankDeficient(String),

    #[error("exhaustive search guard: {0}")]
    Guard(String),

    #[error("radio map parse error at byte {offset}: {message}")]
    MapParse { offset: usize, message: String },

    #[error("unsupported radio map {field} {found:?} (expected {expected:?})")]
    MapVersion {
        field: &'static str,
        found: String,
        expected: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
