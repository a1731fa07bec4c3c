//! Crate-wide error type.
//!
//! Variants split into two families that the CLI maps to exit codes:
//! input/configuration problems (exit 2) and failures that occur while an
//! experiment is running — assertion violations, solver non-convergence
//! (exit 1).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid axis: {0}")]
    InvalidAxis(String),

    #[error("unsupported dimensions: {0}")]
    Dimension(String),

    #[error("invalid landscape parameters: {0}")]
    LandscapeParam(String),

    #[error("landscape validation failed: {0}")]
    LandscapeCheck(String),

    #[error("non-finite sample: {0}")]
    NonFiniteSample(String),

    #[error("operator assembly: {0}")]
    Assembly(String),

    #[error("conjugate gradient did not converge: {0}")]
    CgStall(String),

    #[error("eigensolver did not converge: {0}")]
    EigenStall(String),

    #[error("eigenvector not strictly positive: {0}")]
    NonPositiveEigenvector(String),

    #[error("invalid simulation input: {0}")]
    SimInput(String),

    #[error("time step rejected: {0}")]
    StepRejected(String),

    #[error("Picard iteration diverged: {0}")]
    PicardDiverged(String),

    #[error("experiment assertion failed: {0}")]
    ExperimentFailed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used in the error JSON emitted by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidAxis(_) => "invalid-axis",
            Error::Dimension(_) => "unsupported-dimensions",
            Error::LandscapeParam(_) => "landscape-param",
            Error::LandscapeCheck(_) => "landscape-check",
            Error::NonFiniteSample(_) => "non-finite-sample",
            Error::Assembly(_) => "assembly",
            Error::CgStall(_) => "cg-stall",
            Error::EigenStall(_) => "eigen-stall",
            Error::NonPositiveEigenvector(_) => "non-positive-eigenvector",
            Error::SimInput(_) => "sim-input",
            Error::StepRejected(_) => "step-rejected",
            Error::PicardDiverged(_) => "picard-diverged",
            Error::ExperimentFailed(_) => "experiment-failed",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code the CLI uses for this error: 2 for configuration and
    /// input mistakes, 1 for anything that failed while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidAxis(_)
            | Error::Dimension(_)
            | Error::LandscapeParam(_)
            | Error::SimInput(_)
            | Error::Config(_)
            | Error::Io(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
