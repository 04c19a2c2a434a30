use std::fmt;

use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmConfig};
use super::residual::{
    field_residual_norm, outside_range, residual, residual_jacobian, Observation, PenaltyConfig,
    PoseParams,
};
use crate::disambiguation::SignState;
use crate::dsp::{wrap_angle, LiaOutput};
use crate::error::{Error, Result};
use crate::field::{BeaconSpec, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateFlag {
    Raw,
    Smoothed,
    Gated,
    OutlierRejected,
}

impl EstimateFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateFlag::Raw => "raw",
            EstimateFlag::Smoothed => "smoothed",
            EstimateFlag::Gated => "gated",
            EstimateFlag::OutlierRejected => "outlier-rejected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            EstimateFlag::Raw,
            EstimateFlag::Smoothed,
            EstimateFlag::Gated,
            EstimateFlag::OutlierRejected,
        ]
        .into_iter()
        .find(|f| f.as_str() == s)
    }
}

impl fmt::Display for EstimateFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub t: f64,
    /// Sensor position in the beacon frame (m).
    pub r: Vec3,
    pub beacon_yaw_rad: f64,
    pub residual_gauss: f64,
    pub flag: EstimateFlag,
}

impl PoseEstimate {
    pub fn params(&self) -> PoseParams {
        PoseParams::new(self.r, self.beacon_yaw_rad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    /// At least one amplitude must reach this before a solve is attempted.
    pub gate_gauss: f64,
    pub lm: LmConfig,
    pub penalty: PenaltyConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            gate_gauss: 0.03,
            lm: LmConfig::default(),
            penalty: PenaltyConfig::default(),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_gauss >= 0.0 && self.gate_gauss.is_finite()) {
            return Err(Error::Config(format!("gate must be >= 0, got {}", self.gate_gauss)));
        }
        self.lm.validate()?;
        self.penalty.validate()
    }
}

/// Errors with `GatedWeakSignal` unless some amplitude reaches the gate.
pub fn check_gate(amp: &[Vec3; 3], gate_gauss: f64) -> Result<f64> {
    let max_gauss = amp.iter().map(|a| a.max()).fold(0.0, f64::max);
    if max_gauss >= gate_gauss {
        Ok(max_gauss)
    } else {
        Err(Error::GatedWeakSignal {
            max_gauss,
            gate_gauss,
        })
    }
}

/// Fit position and beacon yaw to one lock-in output.
pub fn solve_position(
    lia: &LiaOutput,
    signs: &SignState,
    beacon: &BeaconSpec,
    guess: &PoseParams,
    cfg: &SolveConfig,
) -> Result<PoseEstimate> {
    let max_amp = check_gate(&lia.amp, cfg.gate_gauss)?;
    if !signs.initialized {
        return Err(Error::NotInitialized("signs have not been seeded"));
    }
    let signed = signs.apply(&lia.amp);
    let obs = Observation {
        signed: &signed,
        beacon,
        penalty: cfg.penalty,
        penalty_weight: cfg.penalty.weight_factor * max_amp,
    };
    let eval = |v: &nalgebra::SVector<f64, 4>| {
        let p = PoseParams::from_vector(v);
        Ok((residual(&p, &obs)?, residual_jacobian(&p, &obs)?))
    };
    let sol = levenberg_marquardt(eval, guess.to_vector(), &cfg.lm)?;
    let p = PoseParams::from_vector(&sol.x);
    if outside_range(&p.r, cfg.penalty.radius_m) {
        return Err(Error::NoConvergence {
            iterations: sol.iterations,
        });
    }
    let res = residual(&p, &obs)?;
    Ok(PoseEstimate {
        t: lia.t,
        r: p.r,
        beacon_yaw_rad: wrap_angle(p.beacon_yaw_rad),
        residual_gauss: field_residual_norm(&res),
        flag: EstimateFlag::Raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disambiguation::init_signs_rotated;
    use crate::field::rotation_z;

    fn noiseless(beacon: &BeaconSpec, r: &Vec3, yaw: f64) -> (LiaOutput, SignState) {
        let rot = rotation_z(yaw);
        let fields = beacon.peak_fields(r).unwrap().map(|b| rot * b);
        let lia = LiaOutput {
            t: 7.0,
            amp: fields.map(|b| b.abs()),
            phase: [Vec3::zeros(); 3],
            settled: true,
        };
        (lia, init_signs_rotated(r, beacon, &rot).unwrap())
    }

    #[test]
    fn recovers_position_from_nearby_guess() {
        let beacon = BeaconSpec::reference();
        let r = Vec3::new(0.3, 0.2, 0.4);
        let (lia, signs) = noiseless(&beacon, &r, 0.0);
        let guess = PoseParams::new(Vec3::new(0.35, 0.15, 0.45), 0.05);
        let est = solve_position(&lia, &signs, &beacon, &guess, &SolveConfig::default()).unwrap();
        assert!((est.r - r).norm() < 1e-4);
        assert_eq!(est.flag, EstimateFlag::Raw);
    }

    #[test]
    fn weak_signal_is_gated() {
        let beacon = BeaconSpec::reference();
        let lia = LiaOutput {
            t: 7.0,
            amp: [Vec3::repeat(0.01); 3],
            phase: [Vec3::zeros(); 3],
            settled: true,
        };
        let signs = init_signs_rotated(&Vec3::new(0.3, 0.2, 0.4), &beacon, &rotation_z(0.0)).unwrap();
        let guess = PoseParams::new(Vec3::new(0.3, 0.2, 0.4), 0.0);
        let err = solve_position(&lia, &signs, &beacon, &guess, &SolveConfig::default()).unwrap_err();
        assert!(matches!(err, Error::GatedWeakSignal { .. }));
    }

    #[test]
    fn yawed_beacon_is_observed() {
        let beacon = BeaconSpec::reference();
        let r = Vec3::new(0.25, 0.3, 0.35);
        let yaw = 30f64.to_radians();
        let (lia, signs) = noiseless(&beacon, &r, yaw);
        let guess = PoseParams::new(r + Vec3::new(0.03, -0.02, 0.02), yaw - 0.1);
        let est = solve_position(&lia, &signs, &beacon, &guess, &SolveConfig::default()).unwrap();
        assert!((est.beacon_yaw_rad - yaw).abs() < 0.5f64.to_radians());
        assert!((est.r - r).norm() < 1e-4);
    }

    #[test]
    fn far_start_stays_inside_the_ball() {
        let beacon = BeaconSpec::reference();
        let r = Vec3::new(0.3, 0.25, 0.3);
        let (lia, signs) = noiseless(&beacon, &r, 0.0);
        let guess = PoseParams::new(r.normalize() * 2.4, 0.0);
        match solve_position(&lia, &signs, &beacon, &guess, &SolveConfig::default()) {
            Ok(est) => assert!(est.r.norm() <= 2.5),
            Err(e) => assert!(matches!(e, Error::NoConvergence { .. })),
        }
    }

    #[test]
    fn flag_strings_round_trip() {
        for f in [EstimateFlag::Raw, EstimateFlag::Smoothed, EstimateFlag::Gated, EstimateFlag::OutlierRejected] {
            assert_eq!(EstimateFlag::parse(f.as_str()), Some(f));
        }
    }
}
