//! Dipole-model inversion and the streaming estimation pipeline.

pub mod handshake;
pub mod lm;
pub mod pipeline;
pub mod refine;
pub mod residual;
pub mod solve;

pub use handshake::{handshake_init, HandshakeFrame, MarkerFix, DETECTION_RANGE_M};
pub use lm::{levenberg_marquardt, LmConfig, LmSolution};
pub use pipeline::{BandPassConfig, LowPassConfig, Pipeline, PipelineConfig, PipelineStats};
pub use refine::{RefineConfig, RefineOutcome, Refiner};
pub use residual::{
    field_residual_norm, residual, residual_jacobian, Jacobian, Observation, PenaltyConfig,
    PoseParams, Residual,
};
pub use solve::{check_gate, solve_position, EstimateFlag, PoseEstimate, SolveConfig};
