use thiserror::Error;

use crate::field::TangentField;
use crate::geodesic::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} is invalid: must be odd and at least 9")]
    InvalidGrid(usize),

    #[error("length mismatch: expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("ambient dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("immersion floor violated at node {node}: speed {speed:e} <= {floor:e}")]
    ImmersionFloor { node: usize, speed: f64, floor: f64 },

    #[error("circle map is not increasing at node {node}: derivative {derivative:e}")]
    NotMonotone { node: usize, derivative: f64 },

    #[error("invalid operator order p = {p}: {reason}")]
    InvalidOrder { p: f64, reason: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("immersion lost at t = {time} (step {step})")]
    ImmersionLost {
        time: f64,
        step: usize,
        partial: Box<Trajectory>,
    },

    #[error("shooting did not converge after {iterations} iterations: best residual {residual:e}")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Box<TangentField>,
    },

    #[error("target lies outside the trust region: distance {distance:e} > radius {radius:e}")]
    OutsideTrustRegion { distance: f64, radius: f64 },

    #[error("particle crossing at t = {time}: minimum derivative {min_derivative:e}")]
    ParticleCrossing { time: f64, min_derivative: f64 },

    #[error("blow-up guard tripped at t = {time}: |u|_inf = {norm:e} > {bound:e}")]
    BlowUp { time: f64, norm: f64, bound: f64 },

    #[error("{solver} solver failed: {source}")]
    Solver {
        solver: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_solver(self, solver: &'static str) -> Self {
        Error::Solver {
            solver,
            source: Box::new(self),
        }
    }
}
