use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scenario::{PathSpec, Scenario};
use crate::error::{Error, Result};
use crate::field::{compose_attitude, measured_field_rotated, rotation_z, Attitude, MagSample, RotationMatrix, Vec3};
use crate::solver::HandshakeFrame;

/// Where the sensor is as a function of stream time.
#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Fixed(Vec3),
    Path(PathSpec),
}

impl Trajectory {
    pub fn position(&self, t: f64) -> Vec3 {
        match self {
            Trajectory::Fixed(p) => *p,
            Trajectory::Path(p) => p.position(t),
        }
    }
}

/// One simulated reading with the navigation attitude and the true position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSample {
    pub sample: MagSample,
    pub nav: Attitude,
    pub truth: Vec3,
}

/// Deterministic sample source. `stream` selects an independent noise sequence
/// for the same seed, so parallel points do not share noise.
#[derive(Debug, Clone)]
pub struct SampleStream<'a> {
    scenario: &'a Scenario,
    trajectory: Trajectory,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    rotation: RotationMatrix,
    index: u64,
    len: u64,
}

impl<'a> SampleStream<'a> {
    pub fn new(scenario: &'a Scenario, trajectory: Trajectory, stream: u64, duration_s: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(stream);
        let noise = Normal::new(0.0, scenario.sensor.noise_std_gauss)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        // Nav attitude is constant, so the sensor stays aligned with the handshake frame.
        let mut rotation = rotation_z(scenario.beacon_yaw_rad);
        if scenario.perturbation.misalignment_enabled {
            rotation = compose_attitude(&scenario.perturbation.misalignment) * rotation;
        }
        let len = (duration_s * scenario.sensor.fs_hz).floor() as u64 + 1;
        Ok(Self {
            scenario,
            trajectory,
            rng,
            noise,
            rotation,
            index: 0,
            len,
        })
    }

    /// Handshake as the vision system would report it at the first sample.
    pub fn handshake(&self) -> HandshakeFrame {
        HandshakeFrame {
            r0_m: self.trajectory.position(0.0),
            beacon_yaw_rad: self.scenario.beacon_yaw_rad,
            nav_attitude: self.scenario.nav_attitude,
        }
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    fn next_sample(&mut self) -> Result<SimSample> {
        let sc = self.scenario;
        let t = self.index as f64 / sc.sensor.fs_hz;
        self.index += 1;
        let truth = self.trajectory.position(t);
        let noise = sc.sensor.noise.then(|| {
            Vec3::new(
                self.noise.sample(&mut self.rng),
                self.noise.sample(&mut self.rng),
                self.noise.sample(&mut self.rng),
            )
        });
        let mut s = measured_field_rotated(&sc.beacon, &self.rotation, &truth, &sc.geomag_gauss, t, noise.as_ref())?;
        s.field = sc.sensor.digitize(&s.field);
        Ok(SimSample {
            sample: s,
            nav: sc.nav_attitude,
            truth,
        })
    }
}

impl Iterator for SampleStream<'_> {
    type Item = Result<SimSample>;

    fn next(&mut self) -> Option<Self::Item> {
        (self.index < self.len).then(|| self.next_sample())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.len - self.index) as usize;
        (n, Some(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{measured_field, BeaconSpec};
    use crate::simulator::{ScenarioKind, SensorSpec, StaticGrid};

    fn scenario() -> Scenario {
        Scenario::new(ScenarioKind::StaticGrid(StaticGrid::reference()))
    }

    #[test]
    fn ideal_sensor_reproduces_the_forward_model() {
        let mut sc = scenario();
        sc.sensor = SensorSpec::ideal();
        let r = Vec3::new(0.2, 0.3, 0.25);
        let stream = SampleStream::new(&sc, Trajectory::Fixed(r), 0, 1.0).unwrap();
        let beacon = BeaconSpec::reference();
        for s in stream {
            let s = s.unwrap();
            let expect = measured_field(&beacon, &Attitude::default(), &r, &sc.geomag_gauss, s.sample.t, None).unwrap();
            assert_eq!(s.sample, expect);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let sc = scenario();
        let r = Vec3::new(0.2, 0.3, 0.25);
        let a: Vec<_> = SampleStream::new(&sc, Trajectory::Fixed(r), 3, 2.0).unwrap().map(|s| s.unwrap()).collect();
        let b: Vec<_> = SampleStream::new(&sc, Trajectory::Fixed(r), 3, 2.0).unwrap().map(|s| s.unwrap()).collect();
        assert_eq!(a, b);
        assert_eq!(a.len(), 401);
        let c: Vec<_> = SampleStream::new(&sc, Trajectory::Fixed(r), 4, 2.0).unwrap().map(|s| s.unwrap()).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn readings_sit_on_the_quantization_grid() {
        let sc = scenario();
        let stream = SampleStream::new(&sc, Trajectory::Fixed(Vec3::new(0.1, 0.1, 0.25)), 0, 0.5).unwrap();
        for s in stream {
            for v in s.unwrap().sample.field.iter() {
                let q = v / sc.sensor.resolution_gauss;
                assert!((q - q.round()).abs() < 1e-6);
                assert!(v.abs() <= sc.sensor.full_scale_gauss);
            }
        }
    }

    #[test]
    fn noise_has_configured_spread() {
        let mut sc = scenario();
        sc.sensor.quantize = false;
        sc.sensor.noise_std_gauss = 0.01;
        let r = Vec3::new(1.5, 1.0, 0.5);
        let mut clean = sc.clone();
        clean.sensor.noise = false;
        let noisy = SampleStream::new(&sc, Trajectory::Fixed(r), 0, 50.0).unwrap();
        let quiet = SampleStream::new(&clean, Trajectory::Fixed(r), 0, 50.0).unwrap();
        let d: Vec<f64> = noisy.zip(quiet).map(|(a, b)| a.unwrap().sample.field.x - b.unwrap().sample.field.x).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std - 0.01).abs() < 0.0005, "{std}");
    }
}
