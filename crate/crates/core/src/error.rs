use crate::matrix::ComplexMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is numerically singular (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    Singular { sigma_min: f64, sigma_max: f64 },

    #[error("matrix is not in the span of the basis (residual {residual:e})")]
    NotInSpan { residual: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-conditioned configuration: condition number {condition:e} exceeds {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("Blaschke product has a repeated root of multiplicity {multiplicity}")]
    RepeatedRoot { multiplicity: usize },

    #[error("optimizer failed: worst contractivity ratio {worst_ratio} after {iterations} iterations")]
    OptimizerFailure {
        worst_ratio: f64,
        iterations: usize,
        best: Box<ComplexMatrix>,
    },

    #[error("iteration did not converge within {cap} steps (last gap {last_gap:e})")]
    NonConvergence { cap: usize, last_gap: f64 },

    #[error("delta search exhausted after {halvings} halvings (last sigma {last_sigma})")]
    DeltaSearchExhausted { halvings: usize, last_sigma: f64 },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
