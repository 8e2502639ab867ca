use thiserror::Error;

use crate::forward::SensorRole;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("points coincide (|x - y| = {distance:e} m)")]
    CoincidentPoints { distance: f64 },

    #[error("{role} {index} coincides with the inclusion center")]
    SensorAtInclusion { role: SensorRole, index: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported Hadamard order {0}: only powers of two are constructed")]
    UnsupportedOrder(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{what} = {value} is outside the supported range {range}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        range: String,
    },

    #[error("ODE integration failed: {0}")]
    Integration(String),

    #[error("polarization table does not cover nu = {nu} (table spans [{lo}, {hi}])")]
    TableCoverage { nu: f64, lo: f64, hi: f64 },

    #[error("malformed table: {0}")]
    Table(String),
}
