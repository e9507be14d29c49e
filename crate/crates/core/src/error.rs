use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value encountered in {0}")]
    Numeric(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("unsupported capability: {0}")]
    Capability(String),
    #[error("training aborted after {0} consecutive numeric failures")]
    Diverged(usize),
    #[error("covariance is not positive definite")]
    Cholesky,
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(alloc::format!($($arg)*)) };
}
macro_rules! contract_err {
    ($($arg:tt)*) => { $crate::error::Error::Contract(alloc::format!($($arg)*)) };
}
pub(crate) use contract_err;
pub(crate) use dim_err;
