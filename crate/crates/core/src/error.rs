use thiserror::Error;

use crate::system::State;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid system: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state ({x}, {y})")]
    NonFiniteState { x: f64, y: f64 },

    #[error("step size underflow at t = {t} (state ({}, {}))", state.x, state.y)]
    StepUnderflow { t: f64, state: State },

    #[error("integration produced a non-finite value at t = {t}")]
    NonFiniteDuring { t: f64 },

    #[error("{failed} of {total} classifications failed (limit 1%)")]
    TooManyFailures { failed: u64, total: u64 },

    #[error("ladder rejected: {0}")]
    Ladder(String),

    #[error("indeterminate index: {0}")]
    Indeterminate(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by the numerics rather than by user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepUnderflow { .. }
                | Error::NonFiniteDuring { .. }
                | Error::TooManyFailures { .. }
                | Error::Indeterminate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
