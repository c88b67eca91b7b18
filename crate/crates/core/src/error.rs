use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("virtual moment of order {beta} is singular for alpha = {alpha}")]
    SingularMoment { beta: f64, alpha: f64 },
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    #[error("coefficient table too short: need order {needed}, have {available}")]
    InsufficientOrder { needed: usize, available: usize },
    #[error("argument outside the admissible domain: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid quadrature configuration: {0}")]
    Quadrature(String),
    #[error("arithmetic regime not supported: {0}")]
    Regime(String),
    #[error("game has no integer lattice span")]
    NotLattice,
    #[error("truncation budget cannot be met: {0}")]
    Budget(String),
    #[error("grid too coarse: {0}")]
    Resolution(String),
    #[error("io: {0}")]
    Io(String),
    #[error("output closed")]
    ClosedOutput,
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return Error::ClosedOutput;
        }
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let msg = e.to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(e) => e.into(),
            _ => Error::Io(msg),
        }
    }
}
