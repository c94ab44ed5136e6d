use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole: {0}")]
    Pole(String),
    #[error("branch point: {0}")]
    BranchPoint(String),
    #[error("orthogonality violation: {0}")]
    Orthogonality(String),
    #[error("parity mismatch: {0}")]
    Parity(String),
    #[error("path too close to puncture: {0}")]
    NearPuncture(String),
    #[error("scale precondition failed: {0}")]
    Scale(String),
    #[error("weight out of range: {0}")]
    Weight(String),
    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },
    #[error("trust region exit: {0}")]
    TrustRegion(String),
}

pub type Result<T> = std::result::Result<T, Error>;
