use thiserror::Error;

/// Errors surfaced by construction, solvers and check drivers.
///
/// Failed inequality checks are *not* errors: they come back as a
/// [`crate::report::CheckReport`] with a `Fail` verdict. An `Error` means the
/// computation itself could not be carried out.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative solver did not reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A functional is not finite on the given datum
    /// (e.g. a load incompatible with the kernel of a weighted form).
    #[error("not in finiteness domain: {0}")]
    NotInDomain(String),

    /// Problem size exceeds a configured cap.
    #[error("size overflow: {0}")]
    SizeOverflow(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
