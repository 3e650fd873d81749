use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFiniteEntry(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("(2I - Ah) is numerically singular (condition number {0:.3e})")]
    SingularDiscretization(f64),

    #[error("lambda*h = 2 maps to the point at infinity")]
    PoleAtNyquist,

    #[error("mu = -1 has no finite continuous-time counterpart")]
    PoleAtMinusOne,

    #[error("damping ratio undefined for a zero eigenvalue")]
    ZeroEigenvalue,

    #[error("invalid delay chain dimension: {0}")]
    InvalidDimension(String),

    #[error("delay {n} outside [1, {n_max}]")]
    DelayOutOfRange { n: usize, n_max: usize },

    #[error("delay {0} < 2: u[K+1] is not resident in the chain")]
    DelayTooSmall(usize),

    #[error("direct feedthrough on measured channels is not supported")]
    FeedthroughUnsupported,

    #[error("matrix has no complex eigenvalue to track")]
    NoComplexMode,

    #[error("no stable delay: A_C at n = {0} is already unstable")]
    NoStableDelay(usize),

    #[error("gain calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("delay {0} is not a member of the switched family")]
    DelayOutOfFamily(usize),

    #[error("invalid delay range [{n_min}, {n_max}]")]
    InvalidRange { n_min: usize, n_max: usize },

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("no complete synchronous set has arrived yet")]
    ColdStart,

    #[error("emission log contains cold-start entries after warm-up or no warm entries")]
    ColdStartGap,

    #[error("too few peaks for a decay fit: found {0}, need 4")]
    TooFewPeaks(usize),

    #[error("eigen decomposition failed: {0}")]
    Eigen(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
