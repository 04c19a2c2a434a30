//! Synthetic magnetometer streams and scenario runners.

pub mod generate;
pub mod run;
pub mod scenario;
pub mod sensor;

pub use generate::{SampleStream, SimSample, Trajectory};
pub use run::{rmse, run_scenario, PointResult, ScenarioResult, ScenarioSummary};
pub use scenario::{PathSpec, Scenario, ScenarioKind, StaticGrid};
pub use sensor::{Perturbation, SensorSpec};
