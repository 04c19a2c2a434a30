use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The dipole approximation does not hold at this range.
    #[error("position {range_m:.4} m from the beacon is inside the {min_range_m:.4} m core")]
    Domain { range_m: f64, min_range_m: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("low confidence: {0}")]
    LowConfidence(String),

    #[error("not initialized: {0}")]
    NotInitialized(&'static str),

    #[error("handshake range {range_m:.3} m exceeds the {max_range_m} m detection range")]
    Range { range_m: f64, max_range_m: f64 },

    #[error("all amplitudes below the {gate_gauss} G gate (max {max_gauss:.5} G)")]
    GatedWeakSignal { max_gauss: f64, gate_gauss: f64 },

    #[error("solver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("point {point}: only {got} of {wanted} estimates accepted")]
    InsufficientEstimates {
        point: usize,
        got: usize,
        wanted: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("length mismatch: {left} vs {right}")]
    Arity { left: usize, right: usize },

    #[error("malformed input at row {row}: {message}")]
    Malformed { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
