use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

use crate::er::CovariateFit;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by model construction, fitting, and the exact oracles.
#[derive(Debug, Clone)]
pub enum Error {
    /// Invalid argument: bad dimension, index out of range, malformed simplex.
    InvalidInput(String),
    /// Conditioning event has probability zero.
    ZeroProbabilityEvent,
    /// Operation defined only for a restricted case (e.g. two layers).
    Unsupported(String),
    /// Enumeration guard tripped: the assignment space exceeds the limit.
    InstanceTooLarge { assignments: u128, limit: u128 },
    /// Newton–Raphson ran out of iterations; carries the last iterate so the
    /// caller can inspect or reuse it.
    NewtonDidNotConverge(Box<CovariateFit>),
    /// Every restart of a variational fit failed to produce a finite bound.
    AllRestartsFailed,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::ZeroProbabilityEvent => write!(f, "conditioning event has probability zero"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::InstanceTooLarge { assignments, limit } => write!(
                f,
                "instance too large: {assignments} assignments exceed the limit of {limit}"
            ),
            Error::NewtonDidNotConverge(fit) => write!(
                f,
                "Newton-Raphson did not converge after {} iterations (gradient inf-norm {:e})",
                fit.iterations, fit.grad_inf_norm
            ),
            Error::AllRestartsFailed => write!(f, "all restarts failed to produce a finite bound"),
        }
    }
}

impl core::error::Error for Error {}
