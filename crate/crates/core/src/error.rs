use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("generation {generation} outside window [{j_min}, {j_max}]")]
    OutOfWindow { generation: i32, j_min: i32, j_max: i32 },

    #[error("interval at level {level} is below the cell resolution of a depth-{depth} mesh")]
    Resolution { level: u32, depth: u32 },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("evaluation point {0} is a cell endpoint (singular)")]
    SingularPoint(f64),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate}, residual {residual})")]
    Convergence { iterations: usize, estimate: f64, residual: f64, last_iterate: Vec<f64> },

    #[error("infeasible certificates: {0}")]
    Infeasible(String),

    #[error("calibration failed at interval (level {level}, index {index}): stopping set mass {mass} exceeds half of {length}")]
    Calibration { level: u32, index: usize, mass: f64, length: f64 },

    #[error("domination check failed at cell {cell}: |T f| = {lhs} > C0 A_S|f| = {rhs}")]
    Domination { cell: usize, lhs: f64, rhs: f64 },

    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Format(e.to_string())
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.to_string())
        } else {
            Error::Format(e.to_string())
        }
    }
}
