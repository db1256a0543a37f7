use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("row P[{state}][{action}] sums to {sum}, expected 1")]
    NonStochasticRow { state: usize, action: usize, sum: f64 },

    #[error("negative probability {value} in {location}")]
    NegativeProbability { location: String, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("induced chain is not irreducible: {closed_classes} closed communicating classes")]
    NotIrreducible { closed_classes: usize },

    #[error("induced chain is periodic with period {period}")]
    Periodic { period: usize },

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("KL support violation at index {index}: p = {p} but q = 0")]
    SupportViolation { index: usize, p: f64 },

    #[error("function dictionary is empty")]
    EmptyDictionary,

    #[error("dictionary member {index} has sup-norm {norm} above the declared bound {g_max}")]
    DictionaryBound { index: usize, norm: f64, g_max: f64 },

    #[error("sup-norm bound must be non-negative, got {0}")]
    NegativeBound(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("state {0} is never visited by the dataset")]
    CoverageError(usize),

    #[error("expected a {expected} dataset, found {found}")]
    KindMismatch { expected: &'static str, found: &'static str },

    #[error("invalid split: {split} train + {split} test exceeds {n_total} samples")]
    InvalidSplit { n_total: usize, split: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
