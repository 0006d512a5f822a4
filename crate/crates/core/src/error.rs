use thiserror::Error;

/// Errors raised by the geometric, operator and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The null frame and angular quantities are undefined at the spatial origin.
    #[error("angular quantity requested at r = 0 ({0})")]
    AtOrigin(&'static str),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("invalid input: {0}")]
    Invalid(String),
    /// A stencil or probe reaches outside the computational box.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite3(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
