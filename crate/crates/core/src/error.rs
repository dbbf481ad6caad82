use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid order: s = {s} with n = {n}")]
    InvalidOrder { n: usize, s: usize },

    #[error("kernel order {s} exceeds sample size {n}")]
    OrderExceedsSample { n: usize, s: usize },

    #[error("enumeration of {what} too large (bound {bound})")]
    EnumerationTooLarge { what: String, bound: u64 },

    #[error("budget exceeded: {needed} evaluations requested, budget is {budget}")]
    BudgetExceeded { needed: String, budget: u64 },

    #[error("no subsample was selected (N-hat = 0)")]
    EmptySelection,

    #[error("invalid sampling plan: {0}")]
    InvalidSampling(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dataset too small: n = {n}, need at least {needed}")]
    DatasetTooSmall { n: usize, needed: usize },

    #[error("n = {n} is smaller than the kernel order {s}")]
    NTooSmall { n: usize, s: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("two-scale weights need s1 < s2 (got s1 = {s1}, s2 = {s2})")]
    EqualScales { s1: usize, s2: usize },

    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),

    #[error("first-order projection variance is {0}; dominance undefined for a degenerate kernel")]
    NonPositiveZeta1(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
