use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("step size h = {h} violates {bound}: requires h {relation} {limit}")]
    StepSize { h: f64, bound: String, relation: &'static str, limit: f64 },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("one-sided limit of the drift at {point} is not finite or not converged: {detail}")]
    NumericalLimit { point: f64, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("stage mismatch: {left} vs {right}")]
    StageMismatch { left: usize, right: usize },

    #[error("instance too large: {atoms} atoms needed, cap is {cap}")]
    InstanceTooLarge { atoms: u64, cap: u64 },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
