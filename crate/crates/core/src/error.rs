use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("NonPositiveCoefficient: {0}")]
    NonPositiveCoefficient(String),
    #[error("MissingCoefficient: {0}")]
    MissingCoefficient(&'static str),
    #[error("ResolutionTooSmall: N = {0} (need N >= {min})", min = crate::grid::MIN_RESOLUTION)]
    ResolutionTooSmall(usize),
    #[error("IndexOutOfRange: stencil {stencil} at node {index}")]
    IndexOutOfRange { stencil: &'static str, index: isize },
    #[error("SolverSingular: {0}")]
    SolverSingular(String),
    #[error("SingularMass: {0}")]
    SingularMass(String),
    #[error("NonConvergence: {0}")]
    NonConvergence(String),
    #[error("StabilityViolation: {0}")]
    StabilityViolation(String),
    #[error("WindowTooShort: {0}")]
    WindowTooShort(String),
    #[error("NonPositiveEnergy: E = {energy} at t* = {time}")]
    NonPositiveEnergy { energy: f64, time: f64 },
    #[error("EigensolverFailure: {0}")]
    EigensolverFailure(String),
    #[error("ParseError: {0}")]
    Parse(String),
    #[error("ValidationError: {0}")]
    Validation(String),
    #[error("IoError: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag, used by the CLI for one-line error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveCoefficient(_) => "NonPositiveCoefficient",
            Error::MissingCoefficient(_) => "MissingCoefficient",
            Error::ResolutionTooSmall(_) => "ResolutionTooSmall",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::SolverSingular(_) => "SolverSingular",
            Error::SingularMass(_) => "SingularMass",
            Error::NonConvergence(_) => "NonConvergence",
            Error::StabilityViolation(_) => "StabilityViolation",
            Error::WindowTooShort(_) => "WindowTooShort",
            Error::NonPositiveEnergy { .. } => "NonPositiveEnergy",
            Error::EigensolverFailure(_) => "EigensolverFailure",
            Error::Parse(_) => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
