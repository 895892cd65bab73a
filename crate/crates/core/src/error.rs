use thiserror::Error;

use crate::vi::PdasReport;

/// Errors raised by the discretization, solvers and drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("polynomial order {0} not supported (expected 1..=4)")]
    UnsupportedOrder(usize),

    #[error("point {0:?} lies outside the mesh domain")]
    OutsideDomain(Vec<f64>),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("right-hand side is not mean-free (integral {integral:e}, tolerance {tolerance:e})")]
    NotMeanFree { integral: f64, tolerance: f64 },

    #[error("infeasible admissible set: {0}")]
    Infeasible(String),

    #[error("mass constraint violated: {0}")]
    MassConstraint(String),

    #[error("primal-dual active set did not converge after {} iterations (kkt residual {:e})", .0.iterations, .0.kkt_residual)]
    NotConverged(Box<PdasReport>),

    #[error("non-positive auxiliary energy E1 = {value:e}; increase C0 (currently {c0})")]
    NonPositiveEnergy { value: f64, c0: f64 },

    #[error("projection blending factor c2 = {0} outside (0, 1); mesh too coarse for this input")]
    BlendingOutOfRange(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
