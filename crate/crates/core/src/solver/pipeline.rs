//! Streaming position pipeline:
//! band-pass, rotate into the handshake frame, lock-in, sign tracking, gate,
//! solve, refine.

use serde::{Deserialize, Serialize};

use super::handshake::HandshakeFrame;
use super::refine::{RefineConfig, RefineOutcome, Refiner};
use super::residual::PoseParams;
use super::solve::{solve_position, PoseEstimate, SolveConfig};
use crate::disambiguation::{
    classify_phase_combo, init_signs_rotated, sector_from_position, CrossingThresholds, Sector,
    SectorTracker, SignState, SignTracker,
};
use crate::dsp::{design_filter, FilterSpec, IirFilter, LiaOutput, LockInBank, LockInChannel};
use crate::error::{Error, Result};
use crate::field::{rotation_z, Attitude, BeaconSpec, MagSample, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandPassConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Prototype order; the digital filter has twice as many poles.
    pub order: usize,
}

impl Default for BandPassConfig {
    fn default() -> Self {
        Self {
            low_hz: 15.0,
            high_hz: 25.0,
            order: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowPassConfig {
    pub cutoff_hz: f64,
    pub order: usize,
}

impl Default for LowPassConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 0.4,
            order: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub bandpass: BandPassConfig,
    pub lowpass: LowPassConfig,
    /// Lock-in warm-up after each handshake (s).
    pub settle_s: f64,
    /// Solve on every n-th settled sample; tracking still runs on all of them.
    pub solve_every: usize,
    pub solve: SolveConfig,
    pub crossing: CrossingThresholds,
    pub refine: RefineConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bandpass: BandPassConfig::default(),
            lowpass: LowPassConfig::default(),
            settle_s: 6.0,
            solve_every: 1,
            solve: SolveConfig::default(),
            crossing: CrossingThresholds::default(),
            refine: RefineConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, fs_hz: f64) -> Result<()> {
        if !(self.settle_s >= 0.0 && self.settle_s.is_finite()) {
            return Err(Error::Config(format!("settle time must be >= 0, got {}", self.settle_s)));
        }
        if self.solve_every == 0 {
            return Err(Error::Config("solve_every must be >= 1".into()));
        }
        FilterSpec::band_pass(self.bandpass.low_hz, self.bandpass.high_hz, self.bandpass.order, fs_hz)
            .validate()?;
        FilterSpec::low_pass(self.lowpass.cutoff_hz, self.lowpass.order, fs_hz).validate()?;
        self.solve.validate()?;
        self.crossing.validate()?;
        self.refine.validate()
    }
}

/// Per-stream tallies of what happened to each sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub samples: u64,
    pub warmup: u64,
    /// Settled samples skipped by `solve_every`.
    pub decimated: u64,
    pub gated: u64,
    pub no_convergence: u64,
    pub outliers: u64,
    pub accepted: u64,
    pub sign_flips: u64,
}

impl PipelineStats {
    pub fn merge(&mut self, o: &PipelineStats) {
        self.samples += o.samples;
        self.warmup += o.warmup;
        self.decimated += o.decimated;
        self.gated += o.gated;
        self.no_convergence += o.no_convergence;
        self.outliers += o.outliers;
        self.accepted += o.accepted;
        self.sign_flips += o.sign_flips;
    }

    /// Samples that were processed but produced no estimate after warm-up.
    pub fn warnings(&self) -> u64 {
        self.gated + self.no_convergence + self.outliers
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    fs_hz: f64,
    /// Beacon as the solver believes it to be.
    beacon: BeaconSpec,
    bandpass: [IirFilter; 3],
    lockin: LockInBank,
    handshake: Option<HandshakeFrame>,
    signs: SignState,
    sign_tracker: SignTracker,
    sectors: SectorTracker,
    refiner: Refiner,
    guess: Option<PoseParams>,
    index: u64,
    settled_seen: u64,
    last_lia: Option<LiaOutput>,
    stats: PipelineStats,
}

impl Pipeline {
    pub fn new(beacon: BeaconSpec, cfg: PipelineConfig, fs_hz: f64) -> Result<Self> {
        beacon.validate()?;
        cfg.validate(fs_hz)?;
        let bp = design_filter(&FilterSpec::band_pass(
            cfg.bandpass.low_hz,
            cfg.bandpass.high_hz,
            cfg.bandpass.order,
            fs_hz,
        ))?;
        let lp = FilterSpec::low_pass(cfg.lowpass.cutoff_hz, cfg.lowpass.order, fs_hz);
        let mut channels = Vec::with_capacity(3);
        for f in beacon.frequencies() {
            channels.push(LockInChannel::new(f, &lp)?.with_upstream_gain(bp.response(f)));
        }
        let channels: [LockInChannel; 3] = channels.try_into().expect("three coils");
        Ok(Self {
            lockin: LockInBank::new(channels, fs_hz, cfg.settle_s),
            bandpass: [bp.clone(), bp.clone(), bp],
            sign_tracker: SignTracker::new(cfg.crossing, fs_hz),
            refiner: Refiner::new(cfg.refine),
            cfg,
            fs_hz,
            beacon,
            handshake: None,
            signs: SignState::uninitialized(),
            sectors: SectorTracker::default(),
            guess: None,
            index: 0,
            settled_seen: 0,
            last_lia: None,
            stats: PipelineStats::default(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    /// Seed signs, sector and initial guess from a vision fix and restart the filters.
    /// The stream clock restarts at zero.
    pub fn handshake(&mut self, frame: HandshakeFrame) -> Result<()> {
        frame.validate()?;
        let signs = init_signs_rotated(&frame.r0_m, &self.beacon, &rotation_z(frame.beacon_yaw_rad))?;
        self.bandpass.iter_mut().for_each(IirFilter::reset);
        self.lockin.reset();
        self.sign_tracker.reset();
        self.refiner.reset();
        self.sectors = SectorTracker::default();
        if let Ok(s) = sector_from_position(&frame.r0_m) {
            self.sectors.seed(s);
        }
        self.signs = signs;
        self.guess = Some(PoseParams::new(frame.r0_m, frame.beacon_yaw_rad));
        self.handshake = Some(frame);
        self.index = 0;
        self.settled_seen = 0;
        self.last_lia = None;
        self.stats = PipelineStats::default();
        Ok(())
    }

    pub fn signs(&self) -> &SignState {
        &self.signs
    }

    pub fn sector(&self) -> Option<Sector> {
        self.sectors.current()
    }

    pub fn last_lia(&self) -> Option<&LiaOutput> {
        self.last_lia.as_ref()
    }

    pub fn stats(&self) -> &PipelineStats {
        &self.stats
    }

    /// Advance by one sample. Returns a smoothed estimate when one is accepted.
    ///
    /// The stream clock is `index / fs` from the handshake; `sample.t` is not used.
    pub fn process_sample(&mut self, sample: &MagSample, nav: &Attitude) -> Result<Option<PoseEstimate>> {
        let frame = self
            .handshake
            .ok_or(Error::NotInitialized("no handshake before the first sample"))?;
        let t = self.index as f64 / self.fs_hz;
        self.index += 1;
        self.stats.samples += 1;

        let filtered = Vec3::new(
            self.bandpass[0].step(sample.field.x),
            self.bandpass[1].step(sample.field.y),
            self.bandpass[2].step(sample.field.z),
        );
        let in_handshake = frame.relative_rotation(nav) * filtered;
        let lia = self.lockin.step(&in_handshake, t);
        self.last_lia = Some(lia);
        if !lia.settled {
            self.stats.warmup += 1;
            return Ok(None);
        }

        let flips = self.sign_tracker.update(&mut self.signs, &lia);
        self.stats.sign_flips += flips.len() as u64;
        if let Ok(combo) = classify_phase_combo(&lia, self.cfg.solve.gate_gauss) {
            self.sectors.update(&combo)?;
        }
        self.settled_seen += 1;
        if !(self.settled_seen - 1).is_multiple_of(self.cfg.solve_every as u64) {
            self.stats.decimated += 1;
            return Ok(None);
        }

        let guess = self.guess.expect("seeded at handshake");
        let solved = match solve_position(&lia, &self.signs, &self.beacon, &guess, &self.cfg.solve) {
            Err(Error::NoConvergence { .. }) => {
                let origin = PoseParams::new(frame.r0_m, frame.beacon_yaw_rad);
                solve_position(&lia, &self.signs, &self.beacon, &origin, &self.cfg.solve)
            }
            other => other,
        };
        let raw = match solved {
            Ok(raw) => raw,
            Err(Error::GatedWeakSignal { .. }) => {
                self.stats.gated += 1;
                return Ok(None);
            }
            Err(Error::NoConvergence { .. } | Error::Domain { .. }) => {
                self.stats.no_convergence += 1;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        match self.refiner.refine(&raw) {
            RefineOutcome::Accepted(est) => {
                self.guess = Some(raw.params());
                self.stats.accepted += 1;
                Ok(Some(est))
            }
            RefineOutcome::Rejected(_) => {
                self.stats.outliers += 1;
                Ok(None)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{measured_field, MagSample};
    use crate::solver::handshake::{handshake_init, MarkerFix};

    fn frame(r0: Vec3) -> HandshakeFrame {
        handshake_init(
            &MarkerFix {
                position: r0,
                beacon_yaw_rad: 0.0,
            },
            &Attitude::default(),
        )
        .unwrap()
    }

    #[test]
    fn samples_before_handshake_are_refused() {
        let mut p = Pipeline::new(BeaconSpec::reference(), PipelineConfig::default(), 200.0).unwrap();
        let s = MagSample {
            t: 0.0,
            field: Vec3::zeros(),
        };
        assert!(matches!(
            p.process_sample(&s, &Attitude::default()),
            Err(Error::NotInitialized(_))
        ));
    }

    #[test]
    fn noiseless_static_stream() {
        let beacon = BeaconSpec::reference();
        let r = Vec3::new(0.3, 0.2, 0.25);
        let mut p = Pipeline::new(beacon.clone(), PipelineConfig::default(), 200.0).unwrap();
        p.handshake(frame(r)).unwrap();
        let geomag = Vec3::new(0.2, 0.13, 0.35);
        let mut last = None;
        for k in 0..(12.0 * 200.0) as usize {
            let t = k as f64 / 200.0;
            let s = measured_field(&beacon, &Attitude::default(), &r, &geomag, t, None).unwrap();
            let out = p.process_sample(&s, &Attitude::default()).unwrap();
            if k < 1200 {
                assert!(out.is_none());
            }
            last = out.or(last);
        }
        let est = last.expect("estimates after settling");
        assert!((est.r - r).norm() < 2e-3, "{:?}", est.r);
        assert_eq!(p.sector().unwrap().id(), 1);
    }
}
