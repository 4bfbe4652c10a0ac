//! Error types shared across the crate.

use thiserror::Error;

/// All failure modes of the library.
///
/// Variants are grouped by origin: parameter/config validation problems map
/// to CLI exit code 2, numerical precondition and assertion failures map to
/// exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    // --- parameter / configuration validation ---
    #[error("parameter `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("noise intensity sigma must be nonnegative")]
    NegativeSigma,
    #[error("initial infected count i0={i0} must lie strictly inside ]0, {n}[")]
    InitialOutOfRange { i0: f64, n: f64 },
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    // --- numerical preconditions / assertions ---
    #[error("value {value} outside the valid range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("evaluation point {0} outside the open interval ]0, N[")]
    OutOfDomain(f64),
    #[error("coefficient assumption violated: {condition} at x={location}")]
    AssumptionViolated { condition: String, location: f64 },
    #[error("no sign change: eta does not admit a bracketed root in ]0, N[")]
    NoSignChange,
    #[error("drift ordering violated at x={location}: low={low}, high={high}")]
    DriftOrderViolated { location: f64, low: f64, high: f64 },
    #[error("square root of negative discriminant: beta^2 < 2 sigma^2 (mu+gamma)")]
    ComplexRoot,
    #[error("operation requires sigma > 0")]
    SigmaZero,
    #[error("trajectory contains a non-positive state at index {0}")]
    NonPositiveState(usize),
    #[error("crossing band must satisfy 0 < low < high < N (got low={low}, high={high})")]
    BadBand { low: f64, high: f64 },
    #[error("trailing window has {got} steps, need at least {need}")]
    WindowTooShort { got: usize, need: usize },
    #[error("numerical assertion failed: {0}")]
    NumericalAssertion(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonPositive(_)
            | Error::NegativeSigma
            | Error::InitialOutOfRange { .. }
            | Error::InvalidArg(_)
            | Error::Config(_)
            | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
