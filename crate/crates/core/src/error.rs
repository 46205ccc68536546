use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QmsError {
    /// Block shapes or algebras of two operands do not match.
    #[error("structural error: {0}")]
    Structure(String),
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Bratteli data violates unitality or injectivity.
    #[error("diagram error: {0}")]
    Diagram(String),
    /// A configured dimension or depth cap would be exceeded.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// A numerical routine broke down.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A certificate's hypotheses do not hold.
    #[error("certificate refused: {0}")]
    Certificate(String),
}

pub type Result<T> = std::result::Result<T, QmsError>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::QmsError::$kind(format!($($arg)*)))
    };
}

pub(crate) use bail;
