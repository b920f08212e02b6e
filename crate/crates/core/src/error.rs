use thiserror::Error;

/// Errors produced by the hashing, search and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input {x} outside the alphabet [0, {q})")]
    InputOutOfRange { x: u64, q: u64 },

    #[error("invalid hash parameters: {0}")]
    InvalidParams(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error(
        "exhaustive search over budget: needs ~{estimated} qubit-factor evaluations, budget is {budget}"
    )]
    OverBudget { estimated: u128, budget: u128 },

    #[error("no heralded events in calibration batch {batch}; increase the measurement duration")]
    NoHeralds { batch: usize },

    #[error("qubit {qubit} still lost after {retries} resend attempts")]
    ResendLimit { qubit: usize, retries: u32 },

    #[error("calibration threshold missing or non-positive")]
    MissingCalibration,

    #[error("tomography settings are not informationally complete")]
    IncompleteSettings,

    #[error("state has no coherence: off-diagonal magnitude {0:e}")]
    NoCoherence(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
