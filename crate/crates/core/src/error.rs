use thiserror::Error;

/// Errors produced by the model-selection toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyData,

    /// Column index uses table numbering: 0 is the outcome, 1..=p the covariates.
    #[error("column {0} has zero variance")]
    ConstantColumn(usize),

    #[error("parse error on line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("ragged row on line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("split leaves an empty part (n = {n}, ratio = {ratio})")]
    DegenerateSplit { n: usize, ratio: f64 },

    #[error("number of folds K = {k} must lie in [2, {n}]")]
    BadK { k: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("design is singular (min eigenvalue {min_eigenvalue:e} below threshold {threshold:e})")]
    Singular {
        min_eigenvalue: f64,
        threshold: f64,
    },

    #[error("underdetermined: n = {n} <= p = {p}, use forward stagewise regression")]
    Underdetermined { n: usize, p: usize },

    #[error("solver did not converge within {iters} iterations")]
    NoConvergence { iters: usize },

    #[error("invalid penalty: {0}")]
    BadPenalty(String),

    #[error("invalid tail specification: {0}")]
    BadTail(String),

    #[error("every K in the range yields a vacuous bound")]
    AllVacuous,

    #[error("curvature {0:e} is numerically zero; use the restricted eigenvalue")]
    ZeroCurvature(f64),

    #[error("p = {p} exceeds the enumeration cap {cap}")]
    TooLarge { p: usize, cap: usize },

    #[error("loss sample is empty")]
    EmptyLosses,

    #[error("total sum of squares is zero")]
    ZeroTss,

    #[error("every candidate on the penalty path failed")]
    AllFitsFailed,

    #[error("correlation {0} outside [0, 1)")]
    BadCorrelation(f64),

    #[error("{failed} of {total} replications failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
