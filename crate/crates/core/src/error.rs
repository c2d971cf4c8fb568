use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("step-size control gave up at t = {t}: needed more than {halvings} halvings")]
    Cfl { t: f64, halvings: u32 },
    #[error("non-finite value in solution at t = {t}")]
    NonFinite { t: f64 },
    #[error("quadrature under-resolved: {0}")]
    Resolution(String),
    #[error("degenerate regression: {0}")]
    Regression(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Cfl { .. } | Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
