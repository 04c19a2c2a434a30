use serde::{Deserialize, Serialize};

use super::sensor::{Perturbation, SensorSpec};
use crate::error::{Error, Result};
use crate::field::{Attitude, BeaconSpec, Vec3};
use crate::solver::DETECTION_RANGE_M;

/// Positions visited with a fixed number of accepted estimates at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StaticGrid {
    pub points: Vec<Vec3>,
    pub solutions_per_point: usize,
    /// Give up on a point after this much simulated time (s).
    pub max_duration_s: f64,
}

impl Default for StaticGrid {
    fn default() -> Self {
        Self::reference()
    }
}

impl StaticGrid {
    /// 4 x 4 grid in the plane `z = 0.25 m`, 0.1 m to 0.4 m on both axes.
    pub fn reference() -> Self {
        let mut points = Vec::with_capacity(16);
        for i in 1..=4 {
            for j in 1..=4 {
                points.push(Vec3::new(0.1 * i as f64, 0.1 * j as f64, 0.25));
            }
        }
        Self {
            points,
            solutions_per_point: 600,
            max_duration_s: 60.0,
        }
    }
}

/// Straight legs between waypoints at constant speed after an initial hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSpec {
    pub waypoints: Vec<Vec3>,
    pub speed_m_s: f64,
    /// Time spent at the first waypoint before moving (s).
    pub hold_s: f64,
    /// Time spent at the last waypoint after arriving (s).
    pub dwell_s: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self::reference_approach()
    }
}

impl PathSpec {
    pub fn reference_approach() -> Self {
        Self {
            waypoints: vec![Vec3::new(0.55, 0.15, 0.15), Vec3::new(0.15, 0.15, 0.15)],
            speed_m_s: 0.1,
            hold_s: 6.0,
            dwell_s: 0.0,
        }
    }

    pub fn length_m(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.hold_s + self.length_m() / self.speed_m_s + self.dwell_s
    }

    pub fn position(&self, t: f64) -> Vec3 {
        let mut s = (t - self.hold_s).max(0.0) * self.speed_m_s;
        for w in self.waypoints.windows(2) {
            let leg = (w[1] - w[0]).norm();
            if s <= leg {
                if leg == 0.0 {
                    return w[0];
                }
                return w[0] + (w[1] - w[0]) * (s / leg);
            }
            s -= leg;
        }
        *self.waypoints.last().expect("validated non-empty")
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config("a path needs at least two waypoints".into()));
        }
        if !(self.speed_m_s > 0.0 && self.speed_m_s.is_finite()) {
            return Err(Error::Config(format!("path speed must be > 0, got {}", self.speed_m_s)));
        }
        if !(self.hold_s >= 0.0 && self.dwell_s >= 0.0) {
            return Err(Error::Config("hold and dwell times must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioKind {
    StaticGrid(StaticGrid),
    DynamicPath(PathSpec),
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::StaticGrid(_) => "static_grid",
            ScenarioKind::DynamicPath(_) => "dynamic_path",
        }
    }
}

/// Everything needed to synthesize a magnetometer stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// The beacon that generates the field.
    pub beacon: BeaconSpec,
    pub sensor: SensorSpec,
    pub perturbation: Perturbation,
    /// Earth field in the beacon frame (G).
    pub geomag_gauss: Vec3,
    /// Heading of the beacon relative to the handshake frame.
    pub beacon_yaw_rad: f64,
    /// Navigation attitude reported throughout the run.
    pub nav_attitude: Attitude,
    pub seed: u64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            beacon: BeaconSpec::reference(),
            sensor: SensorSpec::default(),
            perturbation: Perturbation::none(),
            geomag_gauss: Vec3::new(0.2, 0.13, 0.35),
            beacon_yaw_rad: 0.0,
            nav_attitude: Attitude::default(),
            seed: 0,
        }
    }

    /// The beacon model handed to the solver, including any moment error.
    pub fn solver_beacon(&self) -> BeaconSpec {
        self.beacon.with_moment_scale(self.perturbation.solver_moment_scale())
    }

    pub fn validate(&self) -> Result<()> {
        self.beacon.validate()?;
        let fmax = self.beacon.frequencies().into_iter().fold(0.0, f64::max);
        self.sensor.validate(fmax)?;
        self.perturbation.validate()?;
        if !self.geomag_gauss.iter().all(|v| v.is_finite()) || !self.beacon_yaw_rad.is_finite() {
            return Err(Error::Config("geomagnetic field and beacon yaw must be finite".into()));
        }
        if !self.nav_attitude.is_finite() {
            return Err(Error::Config("navigation attitude must be finite".into()));
        }
        let check = |p: &Vec3| -> Result<()> {
            self.beacon.check_range(p)?;
            if p.norm() > DETECTION_RANGE_M {
                return Err(Error::Range {
                    range_m: p.norm(),
                    max_range_m: DETECTION_RANGE_M,
                });
            }
            Ok(())
        };
        match &self.kind {
            ScenarioKind::StaticGrid(g) => {
                if g.points.is_empty() {
                    return Err(Error::Config("static grid has no points".into()));
                }
                if g.solutions_per_point == 0 || !(g.max_duration_s > 0.0) {
                    return Err(Error::Config(
                        "solutions per point and max duration must be positive".into(),
                    ));
                }
                g.points.iter().try_for_each(check)
            }
            ScenarioKind::DynamicPath(p) => {
                p.validate()?;
                p.waypoints.iter().try_for_each(check)?;
                // Legs may not pass through the core.
                let n = (p.length_m() / 0.005).ceil().max(1.0) as usize;
                let total = p.duration_s();
                (0..=n).try_for_each(|k| self.beacon.check_range(&p.position(total * k as f64 / n as f64)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_grid_has_sixteen_points() {
        let g = StaticGrid::reference();
        assert_eq!(g.points.len(), 16);
        assert!(g.points.iter().all(|p| p.z == 0.25));
    }

    #[test]
    fn path_position_holds_then_moves() {
        let p = PathSpec::reference_approach();
        assert_eq!(p.position(3.0), p.waypoints[0]);
        assert!((p.position(6.0 + 2.0) - Vec3::new(0.35, 0.15, 0.15)).norm() < 1e-12);
        assert_eq!(p.position(100.0), p.waypoints[1]);
        assert!((p.duration_s() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn multi_leg_path() {
        let p = PathSpec {
            waypoints: vec![Vec3::new(0.0, 0.0, 0.3), Vec3::new(0.1, 0.0, 0.3), Vec3::new(0.1, 0.2, 0.3)],
            speed_m_s: 0.1,
            hold_s: 0.0,
            dwell_s: 1.0,
        };
        assert!((p.position(2.0) - Vec3::new(0.1, 0.1, 0.3)).norm() < 1e-12);
        assert!((p.duration_s() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn far_point_is_out_of_range() {
        let mut s = Scenario::new(ScenarioKind::StaticGrid(StaticGrid::reference()));
        assert!(s.validate().is_ok());
        if let ScenarioKind::StaticGrid(g) = &mut s.kind {
            g.points.push(Vec3::new(2.0, 2.0, 0.0));
        }
        assert!(matches!(s.validate(), Err(Error::Range { .. })));
    }

    #[test]
    fn path_through_core_rejected() {
        let s = Scenario::new(ScenarioKind::DynamicPath(PathSpec {
            waypoints: vec![Vec3::new(0.3, 0.0, 0.0), Vec3::new(-0.3, 0.0, 0.0)],
            speed_m_s: 0.1,
            hold_s: 0.0,
            dwell_s: 0.0,
        }));
        assert!(matches!(s.validate(), Err(Error::Domain { .. })));
    }
}
