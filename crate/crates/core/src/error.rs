use thiserror::Error;

/// Errors raised by the geometry, integrand and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point at distance {distance} from the manifold is outside the tube of radius {tube_radius}")]
    OutOfTube { distance: f64, tube_radius: f64 },

    #[error("recession schedule ends at t = {last}, needs at least 2^10")]
    ScheduleTooShort { last: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),

    #[error("evaluator domain: {0}")]
    EvaluatorDomain(String),

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("lattice table: {0}")]
    Table(String),
}

pub type Result<T> = std::result::Result<T, Error>;
