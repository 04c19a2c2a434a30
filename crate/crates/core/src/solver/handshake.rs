use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{compose_attitude, Attitude, RotationMatrix, Vec3};

/// Solutions and handshakes are confined to this ball around the beacon.
pub const DETECTION_RANGE_M: f64 = 2.5;

/// Beacon pose reported by the vision system at the handshake.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerFix {
    /// Sensor position relative to the beacon, beacon frame (m).
    pub position: Vec3,
    /// Beacon yaw relative to the sensor at the handshake (rad).
    pub beacon_yaw_rad: f64,
}

/// Reference frame fixed at the vision-to-magnetic handover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandshakeFrame {
    pub r0_m: Vec3,
    #[serde(default)]
    pub beacon_yaw_rad: f64,
    #[serde(default)]
    pub nav_attitude: Attitude,
}

pub fn handshake_init(marker: &MarkerFix, nav_attitude: &Attitude) -> Result<HandshakeFrame> {
    let frame = HandshakeFrame {
        r0_m: marker.position,
        beacon_yaw_rad: marker.beacon_yaw_rad,
        nav_attitude: *nav_attitude,
    };
    frame.validate()?;
    Ok(frame)
}

impl HandshakeFrame {
    pub fn validate(&self) -> Result<()> {
        if !self.r0_m.iter().all(|v| v.is_finite())
            || !self.beacon_yaw_rad.is_finite()
            || !self.nav_attitude.is_finite()
        {
            return Err(Error::Config("handshake values must be finite".into()));
        }
        let range_m = self.r0_m.norm();
        if range_m > DETECTION_RANGE_M {
            return Err(Error::Range {
                range_m,
                max_range_m: DETECTION_RANGE_M,
            });
        }
        Ok(())
    }

    /// Attitude change since the handshake, angle by angle.
    pub fn relative_attitude(&self, nav_now: &Attitude) -> Attitude {
        nav_now.relative_to(&self.nav_attitude)
    }

    /// Rotation taking sensor-frame vectors into the handshake frame.
    pub fn relative_rotation(&self, nav_now: &Attitude) -> RotationMatrix {
        compose_attitude(&self.relative_attitude(nav_now))
    }
}
