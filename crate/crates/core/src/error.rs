use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate data: column `{column}` is constant")]
    DegenerateData { column: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no column named `{0}`")]
    MissingColumn(String),

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (non-positive pivot at index {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("rank-one update is singular (denominator {denominator:e})")]
    SingularUpdate { denominator: f64 },

    #[error("the zero direction does not define a residual; a must be nonzero")]
    UnsupportedDirection,

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("design matrix row {row} is identically zero")]
    ZeroRow { row: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("enumeration would visit {work:.0} subset-solves, above the limit of {limit:.0}")]
    OracleTooLarge { work: f64, limit: f64 },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
