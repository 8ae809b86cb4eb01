use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid field distribution: {0}")]
    InvalidDistribution(String),
    #[error("quadrature for {0} did not reach tolerance within the node cap")]
    NonFiniteMoment(&'static str),
    #[error("root search did not converge: {0}")]
    NoConvergence(String),
    #[error("all landscape derivatives through order 8 vanish at x* = {0}")]
    FlatnessUndetectable(f64),
    #[error("degenerate field: {0}")]
    DegenerateField(String),
    #[error("regime mismatch: expected {expected}, found {found}")]
    RegimeMismatch { expected: String, found: String },
    #[error("variance formula produced a negative value ({0})")]
    NegativeVariance(f64),
    #[error("integer overflow: {0}")]
    Overflow(String),
    #[error("auxiliary density mass outside the grid is {0:e}")]
    GridUnderflow(f64),
    #[error("exact enumeration limited to n <= {max}, got n = {n}")]
    TooLarge { n: usize, max: usize },
    #[error("bad subset: {0}")]
    BadSubset(String),
    #[error("paired statistic requires an even number of observations, got {0}")]
    OddSampleCount(usize),
    #[error("local scan needs {subsets} subsets, above the limit of {limit}")]
    ScanTooLarge { subsets: u128, limit: u128 },
    #[error("power iteration did not converge after {0} iterations")]
    EigFailure(usize),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),
    #[error("target power {target} not reached on the grid (best {best} at m = {m})")]
    NotReached { target: f64, best: f64, m: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
