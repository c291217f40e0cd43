use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: column `{0}` not found in header")]
    MissingColumn(String),

    #[error("no usable rows remain after filtering ({dropped} dropped)")]
    EmptyPopulation { dropped: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate range: all values identical")]
    DegenerateRange,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("sample size {n} exceeds population size {population}")]
    SampleTooLarge { n: usize, population: usize },

    #[error("inclusion probabilities sum to {sum}, which is not an integer sample size")]
    ProbabilitySum { sum: f64 },

    #[error("unknown area `{0}`")]
    UnknownArea(String),

    #[error("invalid adjacency matrix: {0}")]
    InvalidAdjacency(String),

    #[error("adjacency matrix has no eigenvalues above {tol}")]
    EmptyBasis { tol: f64 },

    #[error("precision matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid iteration counts: n_burn = {n_burn}, n_iter = {n_iter}")]
    IterationCounts { n_iter: usize, n_burn: usize },

    #[error("chain of kind `{0}` does not support this operation")]
    ChainKind(String),

    #[error("area `{0}` has zero total population count")]
    ZeroCount(String),

    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },

    #[error("invalid interval: lower {lower} > upper {upper}")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("zero HT mean squared error in area {0}")]
    ZeroHtMse(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("replicate {replicate} failed: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
