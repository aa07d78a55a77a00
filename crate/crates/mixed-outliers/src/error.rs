use thiserror::Error;

/// Errors raised across the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error at row {row}, column `{column}`: {reason}")]
    Ingestion {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("support threshold unavailable: {0}")]
    Threshold(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("association undefined: {0}")]
    UndefinedAssociation(String),

    #[error("moment bounds inapplicable: {0}")]
    BoundsInapplicable(String),

    #[error("normalizer requires a subsample of at least 2 points, got {0}")]
    Normalizer(usize),

    #[error("dataset has no continuous columns")]
    NoContinuousColumns,

    #[error("statistical test error: {0}")]
    Test(String),

    #[error("K-means arity error: K={k} exceeds {values} values")]
    KmeansArity { k: usize, values: usize },

    #[error("discretization error: {0}")]
    Discretization(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
