use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::solve::{EstimateFlag, PoseEstimate};
use crate::error::{Error, Result};
use crate::field::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub max_speed_m_s: f64,
    /// Moving-average length in estimates.
    pub window: usize,
    /// Slack added to the speed bound, in units of the recent estimate spread.
    pub spread_multiplier: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_speed_m_s: 0.15,
            window: 50,
            spread_multiplier: 3.0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_speed_m_s > 0.0 && self.window > 0 && self.spread_multiplier >= 0.0) {
            return Err(Error::Config(format!("invalid refinement settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefineOutcome {
    Accepted(PoseEstimate),
    Rejected(PoseEstimate),
}

/// Speed-bound outlier rejection followed by a moving average.
#[derive(Debug, Clone, PartialEq)]
pub struct Refiner {
    cfg: RefineConfig,
    last_accepted: Option<PoseEstimate>,
    recent: VecDeque<PoseEstimate>,
}

impl Refiner {
    pub fn new(cfg: RefineConfig) -> Self {
        Self {
            cfg,
            last_accepted: None,
            recent: VecDeque::with_capacity(cfg.window),
        }
    }

    pub fn reset(&mut self) {
        self.last_accepted = None;
        self.recent.clear();
    }

    pub fn last_accepted(&self) -> Option<&PoseEstimate> {
        self.last_accepted.as_ref()
    }

    /// Root of the summed per-axis variances of the recent raw positions.
    pub fn spread(&self) -> f64 {
        let n = self.recent.len();
        if n < 2 {
            return 0.0;
        }
        let mean: Vec3 = self.recent.iter().map(|e| e.r).sum::<Vec3>() / n as f64;
        let ss: f64 = self.recent.iter().map(|e| (e.r - mean).norm_squared()).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    pub fn refine(&mut self, raw: &PoseEstimate) -> RefineOutcome {
        if let Some(last) = &self.last_accepted {
            let dt = (raw.t - last.t).max(0.0);
            let bound = self.cfg.max_speed_m_s * dt + self.cfg.spread_multiplier * self.spread();
            if (raw.r - last.r).norm() > bound {
                return RefineOutcome::Rejected(PoseEstimate {
                    flag: EstimateFlag::OutlierRejected,
                    ..*raw
                });
            }
        }
        self.last_accepted = Some(*raw);
        if self.recent.len() == self.cfg.window {
            self.recent.pop_front();
        }
        self.recent.push_back(*raw);

        let n = self.recent.len() as f64;
        let r = self.recent.iter().map(|e| e.r).sum::<Vec3>() / n;
        let (s, c) = self.recent.iter().fold((0.0, 0.0), |(s, c), e| {
            (s + e.beacon_yaw_rad.sin(), c + e.beacon_yaw_rad.cos())
        });
        RefineOutcome::Accepted(PoseEstimate {
            t: raw.t,
            r,
            beacon_yaw_rad: s.atan2(c),
            residual_gauss: raw.residual_gauss,
            flag: EstimateFlag::Smoothed,
        })
    }
}
