use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {coords:?} lies outside the domain of chart {chart}")]
    OutOfDomain { chart: u8, coords: Vec<f64> },

    #[error("point {coords:?} is not in the overlap of charts {from} and {to}")]
    NotInOverlap { from: u8, to: u8, coords: Vec<f64> },

    #[error("unsupported jet order {0} (supported: 0..=4)")]
    UnsupportedOrder(usize),

    #[error("degenerate metric (smallest Gram-Schmidt norm^2 = {0:e})")]
    DegenerateMetric(f64),

    #[error("Lagrangian condition violated: max |<e_i, J e_j>| = {0:e}")]
    NotLagrangian(f64),

    #[error("tensor is not tri-symmetric (max deviation {0:e})")]
    NotTriSymmetric(f64),

    #[error("mean curvature is not trace(h)/n (max deviation {0:e})")]
    InconsistentTrace(f64),

    #[error("matrix is not symmetric (max deviation {0:e})")]
    NotSymmetric(f64),

    #[error("missing derivatives: {0}")]
    MissingDerivatives(&'static str),

    #[error("test function is negative ({value:e}) at a quadrature node")]
    NegativeTestFunction { value: f64 },

    #[error("wrong ambient space: {0}")]
    WrongAmbient(&'static str),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
