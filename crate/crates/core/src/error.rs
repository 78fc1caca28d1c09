use thiserror::Error;

/// Errors raised by the numerical pipeline.
///
/// The variants map onto the harness exit codes: setup, domain, coverage
/// and budget problems are validation failures; bound, locality and
/// numerical failures are numerical; precision covers low effective
/// sample sizes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("setup error: {0}")]
    Setup(String),
    #[error("domain conflict: configurations overlap at {0}")]
    DomainConflict(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("drift bound violated: |b| = {value} exceeds declared bound {bound} (site {site}, t = {time})")]
    BoundViolation {
        value: f64,
        bound: f64,
        site: String,
        time: f64,
    },
    #[error("locality violation: {0}")]
    Locality(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("precision error: {0}")]
    Precision(String),
    #[error("combinatorial budget exceeded: {what} count passed the cap of {cap}")]
    Budget { what: &'static str, cap: usize },
}

impl Error {
    pub fn setup(msg: impl Into<String>) -> Self {
        Error::Setup(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn coverage(msg: impl Into<String>) -> Self {
        Error::Coverage(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
