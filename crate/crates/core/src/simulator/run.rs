use rayon::prelude::*;
use serde::Serialize;

use super::generate::{SampleStream, Trajectory};
use super::scenario::{PathSpec, Scenario, ScenarioKind, StaticGrid};
use crate::error::{Error, Result};
use crate::field::Vec3;
use crate::solver::{Pipeline, PipelineConfig, PipelineStats, PoseEstimate};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub truth: Vec3,
    pub count: usize,
    pub mean_estimate: Vec3,
    pub rmse_m: f64,
}

impl PointResult {
    fn new(truth: Vec3, estimates: &[PoseEstimate], truths: &[Vec3]) -> Self {
        let count = estimates.len();
        let mean_estimate = estimates.iter().map(|e| e.r).sum::<Vec3>() / count.max(1) as f64;
        Self {
            truth,
            count,
            mean_estimate,
            rmse_m: rmse(estimates, truths),
        }
    }
}

/// Estimates with the true position at each estimate's time, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub kind: &'static str,
    pub seed: u64,
    pub rmse_m: f64,
    pub points: Vec<PointResult>,
    pub estimates: Vec<PoseEstimate>,
    pub truth: Vec<Vec3>,
    pub stats: PipelineStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub kind: &'static str,
    pub seed: u64,
    pub rmse_m: f64,
    pub estimate_count: usize,
    pub warnings: u64,
    pub stats: PipelineStats,
    pub points: Vec<PointResult>,
}

impl ScenarioResult {
    pub fn summary(&self) -> ScenarioSummary {
        ScenarioSummary {
            kind: self.kind,
            seed: self.seed,
            rmse_m: self.rmse_m,
            estimate_count: self.estimates.len(),
            warnings: self.stats.warnings(),
            stats: self.stats,
            points: self.points.clone(),
        }
    }
}

/// Root-mean-square Euclidean error. NaN when empty.
pub fn rmse(estimates: &[PoseEstimate], truth: &[Vec3]) -> f64 {
    let n = estimates.len().min(truth.len());
    if n == 0 {
        return f64::NAN;
    }
    let ss: f64 = estimates.iter().zip(truth).map(|(e, t)| (e.r - t).norm_squared()).sum();
    (ss / n as f64).sqrt()
}

pub fn run_scenario(scenario: &Scenario, cfg: &PipelineConfig) -> Result<ScenarioResult> {
    scenario.validate()?;
    cfg.validate(scenario.sensor.fs_hz)?;
    match &scenario.kind {
        ScenarioKind::StaticGrid(g) => run_static(scenario, g, cfg),
        ScenarioKind::DynamicPath(p) => run_dynamic(scenario, p, cfg),
    }
}

struct PointRun {
    estimates: Vec<PoseEstimate>,
    stats: PipelineStats,
}

fn run_point(scenario: &Scenario, grid: &StaticGrid, cfg: &PipelineConfig, index: usize) -> Result<PointRun> {
    let truth = grid.points[index];
    let stream = SampleStream::new(scenario, Trajectory::Fixed(truth), index as u64, grid.max_duration_s)?;
    let mut pipe = Pipeline::new(scenario.solver_beacon(), *cfg, scenario.sensor.fs_hz)?;
    pipe.handshake(stream.handshake())?;
    let mut estimates = Vec::with_capacity(grid.solutions_per_point);
    for s in stream {
        let s = s?;
        if let Some(est) = pipe.process_sample(&s.sample, &s.nav)? {
            estimates.push(est);
            if estimates.len() == grid.solutions_per_point {
                break;
            }
        }
    }
    if estimates.len() < grid.solutions_per_point {
        return Err(Error::InsufficientEstimates {
            point: index,
            got: estimates.len(),
            wanted: grid.solutions_per_point,
        });
    }
    Ok(PointRun {
        estimates,
        stats: *pipe.stats(),
    })
}

fn run_static(scenario: &Scenario, grid: &StaticGrid, cfg: &PipelineConfig) -> Result<ScenarioResult> {
    let runs: Vec<PointRun> = (0..grid.points.len())
        .into_par_iter()
        .map(|i| run_point(scenario, grid, cfg, i))
        .collect::<Result<_>>()?;
    let mut out = ScenarioResult {
        kind: scenario.kind.name(),
        seed: scenario.seed,
        rmse_m: f64::NAN,
        points: Vec::with_capacity(runs.len()),
        estimates: Vec::new(),
        truth: Vec::new(),
        stats: PipelineStats::default(),
    };
    for (run, p) in runs.iter().zip(&grid.points) {
        let truths = vec![*p; run.estimates.len()];
        out.points.push(PointResult::new(*p, &run.estimates, &truths));
        out.estimates.extend_from_slice(&run.estimates);
        out.truth.extend(truths);
        out.stats.merge(&run.stats);
    }
    out.rmse_m = rmse(&out.estimates, &out.truth);
    Ok(out)
}

fn run_dynamic(scenario: &Scenario, path: &PathSpec, cfg: &PipelineConfig) -> Result<ScenarioResult> {
    let traj = Trajectory::Path(path.clone());
    let stream = SampleStream::new(scenario, traj.clone(), 0, path.duration_s())?;
    let mut pipe = Pipeline::new(scenario.solver_beacon(), *cfg, scenario.sensor.fs_hz)?;
    pipe.handshake(stream.handshake())?;
    let mut estimates = Vec::new();
    for s in stream {
        let s = s?;
        if let Some(est) = pipe.process_sample(&s.sample, &s.nav)? {
            estimates.push(est);
        }
    }
    if estimates.is_empty() {
        return Err(Error::InsufficientEstimates {
            point: 0,
            got: 0,
            wanted: 1,
        });
    }
    let truth: Vec<Vec3> = estimates.iter().map(|e| traj.position(e.t)).collect();
    let point = PointResult::new(path.waypoints[0], &estimates, &truth);
    Ok(ScenarioResult {
        kind: scenario.kind.name(),
        seed: scenario.seed,
        rmse_m: point.rmse_m,
        points: vec![point],
        estimates,
        truth,
        stats: *pipe.stats(),
    })
}
