//! Misfit between the dipole model and sign-restored lock-in amplitudes.
//!
//! Unknowns are the sensor position in the beacon frame and the beacon yaw
//! relative to the handshake frame. Beacon pitch and roll are held at zero.
//! Rows 0..9 are `B_i(r) - Rz(yaw)^T (s_i * |B'_i|)`, row 9 is the range penalty.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::handshake::DETECTION_RANGE_M;
use crate::error::{Error, Result};
use crate::field::{dipole_flux, dipole_flux_jacobian, rotation_z, BeaconSpec, Vec3};

pub type Residual = SVector<f64, 10>;
pub type Jacobian = SMatrix<f64, 10, 4>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams {
    pub r: Vec3,
    pub beacon_yaw_rad: f64,
}

impl PoseParams {
    pub fn new(r: Vec3, beacon_yaw_rad: f64) -> Self {
        Self { r, beacon_yaw_rad }
    }

    pub fn to_vector(&self) -> SVector<f64, 4> {
        SVector::<f64, 4>::new(self.r.x, self.r.y, self.r.z, self.beacon_yaw_rad)
    }

    pub fn from_vector(v: &SVector<f64, 4>) -> Self {
        Self::new(Vec3::new(v[0], v[1], v[2]), v[3])
    }
}

/// Squared hinge `w ((|r| - radius)+ / width)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyConfig {
    pub radius_m: f64,
    pub width_m: f64,
    /// Weight as a multiple of the largest measured amplitude.
    pub weight_factor: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            radius_m: DETECTION_RANGE_M,
            width_m: 0.5,
            weight_factor: 10.0,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m > 0.0 && self.width_m > 0.0 && self.weight_factor >= 0.0) {
            return Err(Error::Config(format!("invalid penalty settings {self:?}")));
        }
        Ok(())
    }

    fn excess(&self, r: &Vec3) -> f64 {
        ((r.norm() - self.radius_m) / self.width_m).max(0.0)
    }

    pub fn value(&self, r: &Vec3, weight: f64) -> f64 {
        weight * self.excess(r).powi(2)
    }

    pub fn gradient(&self, r: &Vec3, weight: f64) -> Vec3 {
        let e = self.excess(r);
        if e == 0.0 {
            return Vec3::zeros();
        }
        r.normalize() * (2.0 * weight * e / self.width_m)
    }
}

/// The binary range test applied to finished solutions.
pub fn outside_range(r: &Vec3, radius_m: f64) -> bool {
    r.norm() > radius_m
}

/// Everything the residual needs besides the unknowns.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    /// Sign-restored amplitudes per coil, handshake frame (Gauss).
    pub signed: &'a [Vec3; 3],
    pub beacon: &'a BeaconSpec,
    pub penalty: PenaltyConfig,
    pub penalty_weight: f64,
}

pub fn residual(p: &PoseParams, obs: &Observation) -> Result<Residual> {
    obs.beacon.check_range(&p.r)?;
    let derot = rotation_z(p.beacon_yaw_rad).transpose();
    let mut out = Residual::zeros();
    for (i, coil) in obs.beacon.coils.iter().enumerate() {
        let model = dipole_flux(&coil.peak_moment_vector(), &p.r, obs.beacon.permeability_rel);
        let f = model - derot * obs.signed[i];
        out.fixed_rows_mut::<3>(3 * i).copy_from(&f);
    }
    out[9] = obs.penalty.value(&p.r, obs.penalty_weight);
    Ok(out)
}

pub fn residual_jacobian(p: &PoseParams, obs: &Observation) -> Result<Jacobian> {
    obs.beacon.check_range(&p.r)?;
    let (s, c) = p.beacon_yaw_rad.sin_cos();
    // d/dyaw of Rz(yaw)^T
    let d_derot = nalgebra::Matrix3::new(-s, c, 0.0, -c, -s, 0.0, 0.0, 0.0, 0.0);
    let mut jac = Jacobian::zeros();
    for (i, coil) in obs.beacon.coils.iter().enumerate() {
        let jr = dipole_flux_jacobian(&coil.peak_moment_vector(), &p.r, obs.beacon.permeability_rel);
        jac.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&jr);
        let jy = -(d_derot * obs.signed[i]);
        jac.fixed_view_mut::<3, 1>(3 * i, 3).copy_from(&jy);
    }
    let g = obs.penalty.gradient(&p.r, obs.penalty_weight);
    jac.fixed_view_mut::<1, 3>(9, 0).copy_from(&g.transpose());
    Ok(jac)
}

/// Norm of the nine field rows, the reported fit quality.
pub fn field_residual_norm(res: &Residual) -> f64 {
    res.fixed_rows::<9>(0).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn signed_at(beacon: &BeaconSpec, r: &Vec3, yaw: f64) -> [Vec3; 3] {
        let rot = rotation_z(yaw);
        beacon.peak_fields(r).unwrap().map(|b| rot * b)
    }

    fn obs<'a>(beacon: &'a BeaconSpec, signed: &'a [Vec3; 3]) -> Observation<'a> {
        Observation {
            signed,
            beacon,
            penalty: PenaltyConfig::default(),
            penalty_weight: 1.0,
        }
    }

    #[test]
    fn truth_has_zero_residual() {
        let beacon = BeaconSpec::reference();
        let r = Vec3::new(0.3, 0.2, 0.4);
        let signed = signed_at(&beacon, &r, 0.4);
        let res = residual(&PoseParams::new(r, 0.4), &obs(&beacon, &signed)).unwrap();
        assert!(res.fixed_rows::<9>(0).amax() < 1e-9);
        assert_eq!(res[9], 0.0);
    }

    #[test]
    fn penalty_reaches_weight_at_three_metres() {
        let beacon = BeaconSpec::reference();
        let signed = [Vec3::zeros(); 3];
        let mut o = obs(&beacon, &signed);
        o.penalty_weight = 0.7;
        let res = residual(&PoseParams::new(Vec3::new(0.0, 0.0, 3.0), 0.0), &o).unwrap();
        assert!((res[9] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn offset_pose_has_positive_residual() {
        let beacon = BeaconSpec::reference();
        let r = Vec3::new(0.3, 0.2, 0.4);
        let signed = signed_at(&beacon, &r, 0.0);
        let p = PoseParams::new(r + Vec3::new(0.01, 0.0, 0.0), 0.0);
        let res = residual(&p, &obs(&beacon, &signed)).unwrap();
        assert!(field_residual_norm(&res) > 1e-4);
    }

    #[test]
    fn inside_core_is_domain_error() {
        let beacon = BeaconSpec::reference();
        let signed = [Vec3::zeros(); 3];
        let p = PoseParams::new(Vec3::new(0.05, 0.0, 0.0), 0.0);
        assert!(matches!(residual(&p, &obs(&beacon, &signed)), Err(Error::Domain { .. })));
    }

    proptest! {
        #[test]
        fn jacobian_matches_central_differences(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
            yaw in -3.0f64..3.0, scale in 1.0f64..1.4,
        ) {
            let p = PoseParams::new(Vec3::new(x, y, z) * scale * 2.2, yaw);
            prop_assume!(p.r.norm() > 0.3 && (p.r.norm() - 2.5).abs() > 1e-3);
            let beacon = BeaconSpec::reference();
            // Observation taken near the pose keeps both residual terms at the same scale.
            let signed = signed_at(&beacon, &(p.r * 0.9), 0.3);
            let o = obs(&beacon, &signed);
            let jac = residual_jacobian(&p, &o).unwrap();
            let v = p.to_vector();
            for k in 0..4 {
                let h = 1e-6 * v[k].abs().max(1.0);
                let mut a = v;
                let mut b = v;
                a[k] += h;
                b[k] -= h;
                let fd = (residual(&PoseParams::from_vector(&a), &o).unwrap()
                    - residual(&PoseParams::from_vector(&b), &o).unwrap()) / (2.0 * h);
                let scale = jac.column(k).amax().max(fd.amax());
                // 1e-9 absolute covers difference roundoff on small columns.
                prop_assert!((jac.column(k) - fd).amax() < 1e-6 * scale + 1e-9, "k={} jac={} fd={}", k, jac.column(k), fd);
            }
        }
    }
}
