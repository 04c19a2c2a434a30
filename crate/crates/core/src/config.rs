//! JSON run configuration with dotted-path overrides.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::field::{Attitude, BeaconSpec, CoilSpec, Vec3};
use crate::simulator::{PathSpec, Perturbation, Scenario, ScenarioKind, SensorSpec, StaticGrid};
use crate::solver::PipelineConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilConfig {
    /// Either the loop area or the diameter of a circular loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter_m: Option<f64>,
    pub turns: u32,
    pub current_a: f64,
    pub freq_hz: f64,
    #[serde(default)]
    pub phase_rad: f64,
    pub axis: Vec3,
}

impl CoilConfig {
    pub fn to_spec(&self, index: usize) -> Result<CoilSpec> {
        let area = match (self.area_m2, self.diameter_m) {
            (Some(a), None) => a,
            (None, Some(d)) => PI * (d / 2.0).powi(2),
            _ => {
                return Err(Error::Config(format!(
                    "beacon.coils.{index}: give exactly one of area_m2 or diameter_m"
                )))
            }
        };
        CoilSpec::new(area, self.turns, self.current_a, self.freq_hz, self.phase_rad, self.axis)
            .map_err(|e| Error::Config(format!("beacon.coils.{index}: {e}")))
    }
}

impl From<&CoilSpec> for CoilConfig {
    fn from(c: &CoilSpec) -> Self {
        Self {
            area_m2: Some(c.area_m2),
            diameter_m: None,
            turns: c.turns,
            current_a: c.current_a,
            freq_hz: c.freq_hz,
            phase_rad: c.phase_rad,
            axis: c.axis,
        }
    }
}

fn default_core_diameter() -> f64 {
    0.12
}

fn default_permeability() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeaconConfig {
    pub coils: Vec<CoilConfig>,
    #[serde(default = "default_core_diameter")]
    pub core_diameter_m: f64,
    #[serde(default = "default_permeability")]
    pub permeability_rel: f64,
}

impl BeaconConfig {
    pub fn to_spec(&self) -> Result<BeaconSpec> {
        if self.coils.len() != 3 {
            return Err(Error::Config(format!(
                "beacon.coils: expected 3 coils, got {}",
                self.coils.len()
            )));
        }
        let coils: Vec<CoilSpec> = self
            .coils
            .iter()
            .enumerate()
            .map(|(i, c)| c.to_spec(i))
            .collect::<Result<_>>()?;
        let coils: [CoilSpec; 3] = coils.try_into().expect("length checked");
        BeaconSpec::new(coils, self.core_diameter_m, self.permeability_rel)
            .map_err(|e| Error::Config(format!("beacon: {e}")))
    }
}

impl From<&BeaconSpec> for BeaconConfig {
    fn from(b: &BeaconSpec) -> Self {
        Self {
            coils: b.coils.iter().map(CoilConfig::from).collect(),
            core_diameter_m: b.core_diameter_m,
            permeability_rel: b.permeability_rel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioType {
    #[default]
    StaticGrid,
    DynamicPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    #[serde(rename = "type")]
    pub kind: ScenarioType,
    pub static_grid: StaticGrid,
    pub dynamic_path: PathSpec,
    pub geomag_gauss: Vec3,
    pub beacon_yaw_rad: f64,
    pub nav_attitude: Attitude,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioType::StaticGrid,
            static_grid: StaticGrid::reference(),
            dynamic_path: PathSpec::reference_approach(),
            geomag_gauss: Vec3::new(0.2, 0.13, 0.35),
            beacon_yaw_rad: 0.0,
            nav_attitude: Attitude::default(),
        }
    }
}

/// Output file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub estimates: String,
    pub truth: String,
    pub result: String,
    pub samples: String,
    pub handshake: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            estimates: "estimates.csv".into(),
            truth: "truth.csv".into(),
            result: "result.json".into(),
            samples: "samples.csv".into(),
            handshake: "handshake.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    pub beacon: BeaconConfig,
    #[serde(default)]
    pub sensor: SensorSpec,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub thresholds: PipelineConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn reference(kind: ScenarioType) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            seed: 0,
            beacon: BeaconConfig::from(&BeaconSpec::reference()),
            sensor: SensorSpec::default(),
            scenario: ScenarioConfig {
                kind,
                ..ScenarioConfig::default()
            },
            perturbation: Perturbation::none(),
            thresholds: PipelineConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Deserialize and validate; errors name the offending key path.
    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            if path == "." || path.is_empty() {
                Error::Config(e.into_inner().to_string())
            } else {
                Error::Config(format!("{path}: {}", e.into_inner()))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file and apply `key=value` overrides before validation.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema: unsupported version {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        self.scenario()?.validate()?;
        self.thresholds
            .validate(self.sensor.fs_hz)
            .map_err(|e| Error::Config(format!("thresholds: {e}")))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let kind = match self.scenario.kind {
            ScenarioType::StaticGrid => ScenarioKind::StaticGrid(self.scenario.static_grid.clone()),
            ScenarioType::DynamicPath => ScenarioKind::DynamicPath(self.scenario.dynamic_path.clone()),
        };
        Ok(Scenario {
            kind,
            beacon: self.beacon.to_spec()?,
            sensor: self.sensor,
            perturbation: self.perturbation,
            geomag_gauss: self.scenario.geomag_gauss,
            beacon_yaw_rad: self.scenario.beacon_yaw_rad,
            nav_attitude: self.scenario.nav_attitude,
            seed: self.seed,
        })
    }
}

/// Set `a.b.0.c=value` in a JSON tree. The value is parsed as JSON, falling
/// back to a plain string. Missing object keys are created.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    if path.is_empty() {
        return Err(Error::Config(format!("override `{spec}` has an empty key")));
    }
    let new = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for part in path.split('.') {
        node = match node {
            Value::Array(items) => {
                let len = items.len();
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config(format!("override {path}: `{part}` is not an index")))?;
                items.get_mut(idx).ok_or_else(|| {
                    Error::Config(format!("override {path}: index {idx} out of range ({len})"))
                })?
            }
            Value::Object(map) => map.entry(part).or_insert(Value::Null),
            other => {
                if !other.is_null() {
                    return Err(Error::Config(format!("override {path}: `{part}` is inside a scalar")));
                }
                *other = Value::Object(Default::default());
                other.as_object_mut().expect("just set").entry(part).or_insert(Value::Null)
            }
        };
    }
    *node = new;
    Ok(())
}
