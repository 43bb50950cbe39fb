use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("non-finite propagator in segment {segment}")]
    NonFiniteSegment { segment: usize },

    #[error("no convergence after {units} units (last trace distance {last_distance:.3e})")]
    NotConverged { units: u64, last_distance: f64 },

    #[error("trace drift {drift:.3e} in trajectory {trajectory} (seed {seed})")]
    TraceDrift { trajectory: usize, seed: u64, drift: f64 },

    #[error("{0}")]
    Invariant(String),

    #[error("linear algebra failure: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

pub type Result<T> = std::result::Result<T, Error>;
