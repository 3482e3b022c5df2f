//! Crate-wide error type. Variants mirror the failure modes of the
//! individual modules so callers can map them to exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    // atoms
    #[error("mean not zero: |sum p*a| = {0:e} exceeds tolerance")]
    MeanNotZero(f64),
    #[error("invalid probabilities: {0}")]
    ProbInvalid(String),
    #[error("atoms {0} and {1} coincide within tolerance")]
    DegenerateAtoms(f64, f64),
    #[error("moment/cumulant order {0} out of range")]
    OrderOutOfRange(i64),
    #[error("empty grid")]
    EmptyGrid,

    // exactdist
    #[error("support too large: {0} points exceeds cap {1}")]
    TooLarge(u128, u128),
    #[error("law/metadata mismatch: {0}")]
    Mismatch(String),
    #[error("bad interval: z1 = {0} >= z2 = {1}")]
    BadInterval(f64, f64),

    // resonance
    #[error("D matrix singular: det = {0:e}")]
    SingularD(f64),
    #[error("peak search failed on interval k = {0}: scan and refinement disagree")]
    OptimizerFail(i64),
    #[error("interval k = {0} is not resonant")]
    NotResonant(i64),
    #[error("bad window: delta = {0} >= K = {1}")]
    BadWindow(f64, f64),
    #[error("quadrature failure: error estimate {0:e} exceeds budget {1:e}")]
    QuadratureFail(f64, f64),

    // lattice
    #[error("numerical rank loss: condition number {0:e}")]
    NumericalRankLoss(f64),
    #[error("enumeration budget exceeded: projected {0} points")]
    BudgetExceeded(u128),
    #[error("unsupported dimension d = {0}")]
    UnsupportedDim(usize),

    // limitlaw
    #[error("lattice vector with |y| = {0:e} below guard {1:e}")]
    NearZeroY(f64, f64),
    #[error("c must be nonzero")]
    ZeroC,
    #[error("empty ensemble requested")]
    EmptyEnsemble,
    #[error("empty sample")]
    EmptySample,

    // experiments
    #[error("rejection sampling budget exhausted: acceptance rate below {0:e}")]
    RejectionBudget(f64),

    // io
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// CLI exit-code class: 1 validation, 2 numeric/budget failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::QuadratureFail(..)
            | Error::BudgetExceeded(..)
            | Error::TooLarge(..)
            | Error::OptimizerFail(..)
            | Error::NumericalRankLoss(..)
            | Error::RejectionBudget(..)
            | Error::NearZeroY(..) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
