use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use magbeacon::calibration::{
    average_by_truth, coil_phase_series, error_metrics, estimate_frequency_offset, offset_calibration,
    STABLE_MISTUNE_HZ,
};
use magbeacon::config::RunConfig;
use magbeacon::io::{self, LoggedSample};
use magbeacon::simulator::{run_scenario, SampleStream, ScenarioKind, Trajectory};
use magbeacon::solver::Pipeline;
use magbeacon::Error;
use serde_json::json;

const EXIT_INPUT: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_RANGE: u8 = 4;

#[derive(Parser)]
#[command(name = "magbeacon", version, about = "EM beacon localization: simulate, replay, calibrate")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Dotted key path into the config, e.g. thresholds.solve.gate_gauss=0.5
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario and write estimates, truth and a result summary.
    Simulate {
        /// Also write the raw sample log and handshake (path scenarios only).
        #[arg(long)]
        emit_samples: bool,
    },
    /// Run the pipeline over a recorded sample log.
    Replay {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        handshake: PathBuf,
    },
    /// Estimate the installation offset from row-aligned truth and estimates.
    CalibrateOffset {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
    },
    /// Measure reference mistuning from the lock-in phase drift of a sample log.
    TuneFrequency {
        #[arg(long)]
        samples: PathBuf,
        /// Stability threshold (Hz).
        #[arg(long, default_value_t = STABLE_MISTUNE_HZ)]
        stable_below_hz: f64,
    },
    /// Error statistics for row-aligned truth and estimates.
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Range { .. } => EXIT_RANGE,
            Error::Config(_)
            | Error::Malformed { .. }
            | Error::Arity { .. }
            | Error::InsufficientData(_)
            | Error::Csv(_)
            | Error::Json(_) => EXIT_INPUT,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn input_error(message: String) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message,
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| input_error(format!("cannot open {}: {e}", path.display())))
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: format!("cannot create {}: {e}", path.display()),
    })
}

/// Input-file errors carry the file name so the failing row can be found.
fn in_file<T>(path: &Path, r: magbeacon::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> CliResult<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    })?;
    std::io::Write::write_all(&mut w, b"\n").map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    })
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| input_error("--config is required for this command".into()))?;
    let mut cfg = RunConfig::load(path, &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn read_pairs(truth: &Path, estimates: &Path) -> CliResult<(Vec<magbeacon::field::Vec3>, Vec<magbeacon::field::Vec3>)> {
    let (_, t) = in_file(truth, io::read_truth(open(truth)?))?;
    let e = in_file(estimates, io::read_estimates(open(estimates)?))?;
    let e = e.into_iter().map(|e| e.r).collect();
    Ok((t, e))
}

fn simulate(cli: &Cli, emit_samples: bool) -> CliResult<()> {
    let cfg = load_config(cli)?;
    let scenario = cfg.scenario()?;
    let dir = &cli.out_dir;
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: format!("cannot create {}: {e}", dir.display()),
    })?;

    if emit_samples {
        let ScenarioKind::DynamicPath(path) = &scenario.kind else {
            return Err(input_error("--emit-samples needs a dynamic_path scenario".into()));
        };
        let stream = SampleStream::new(&scenario, Trajectory::Path(path.clone()), 0, path.duration_s())?;
        io::write_handshake(create(dir, &cfg.output.handshake)?, &stream.handshake())?;
        let samples = stream.map(|s| s.map(|s| LoggedSample::from(&s))).collect::<magbeacon::Result<Vec<_>>>()?;
        io::write_samples(create(dir, &cfg.output.samples)?, samples)?;
    }

    let result = run_scenario(&scenario, &cfg.thresholds)?;
    io::write_estimates(create(dir, &cfg.output.estimates)?, &result.estimates)?;
    let times: Vec<f64> = result.estimates.iter().map(|e| e.t).collect();
    io::write_truth(create(dir, &cfg.output.truth)?, &times, &result.truth)?;
    let estimates: Vec<_> = result.estimates.iter().map(|e| e.r).collect();
    let metrics = error_metrics(&estimates, &result.truth)?;
    write_json(
        dir,
        &cfg.output.result,
        &json!({
            "summary": result.summary(),
            "metrics": {
                "rmse_m": metrics.rmse_m,
                "mean_error_m": metrics.mean_error_m,
                "std_error_m": metrics.std_error_m,
                "max_error_m": metrics.max_error_m,
                "axis_rmse_m": metrics.axis_rmse_m,
                "segment_rmse_m": metrics.segment_rmse_m,
            },
        }),
    )
}

fn replay(cli: &Cli, samples: &Path, handshake: &Path) -> CliResult<()> {
    let cfg = load_config(cli)?;
    let scenario = cfg.scenario()?;
    let frame = in_file(handshake, io::read_handshake(open(handshake)?))?;
    let log = in_file(samples, io::read_samples(open(samples)?, scenario.sensor.fs_hz))?;
    fs::create_dir_all(&cli.out_dir).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: format!("cannot create {}: {e}", cli.out_dir.display()),
    })?;

    let mut pipe = Pipeline::new(scenario.solver_beacon(), cfg.thresholds, scenario.sensor.fs_hz)?;
    pipe.handshake(frame)?;
    let mut estimates = Vec::new();
    for s in &log {
        if let Some(est) = pipe.process_sample(&s.sample, &s.nav)? {
            estimates.push(est);
        }
    }
    io::write_estimates(create(&cli.out_dir, &cfg.output.estimates)?, &estimates)?;
    let stats = *pipe.stats();
    if stats.warnings() > 0 {
        eprintln!(
            "warning: {} samples without an estimate ({} gated, {} unconverged, {} outliers)",
            stats.warnings(),
            stats.gated,
            stats.no_convergence,
            stats.outliers
        );
    }
    write_json(
        &cli.out_dir,
        &cfg.output.result,
        &json!({
            "estimate_count": estimates.len(),
            "warnings": stats.warnings(),
            "stats": stats,
        }),
    )
}

fn calibrate_offset(cli: &Cli, truth: &Path, estimates: &Path) -> CliResult<()> {
    let (t, e) = read_pairs(truth, estimates)?;
    let (points, means) = average_by_truth(&e, &t)?;
    let report = offset_calibration(&points, &means)?;
    fs::create_dir_all(&cli.out_dir).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    })?;
    write_json(&cli.out_dir, "offset.json", &json!(report))
}

fn tune_frequency(cli: &Cli, samples: &Path, stable_below_hz: f64) -> CliResult<()> {
    let cfg = load_config(cli)?;
    let scenario = cfg.scenario()?;
    let log = in_file(samples, io::read_samples(open(samples)?, scenario.sensor.fs_hz))?;
    let mags: Vec<_> = log.iter().map(|s| s.sample).collect();
    let refs = scenario.beacon.frequencies();
    let series = coil_phase_series(&mags, refs, &cfg.thresholds, scenario.sensor.fs_hz)?;
    let mut coils = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let f = estimate_frequency_offset(s, stable_below_hz)?;
        coils.push(json!({
            "coil": i,
            "reference_hz": refs[i],
            "delta_hz": f.delta_hz,
            "suggested_reference_hz": refs[i] + f.delta_hz,
            "stable": f.stable,
            "duration_s": f.duration_s,
        }));
    }
    fs::create_dir_all(&cli.out_dir).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    })?;
    write_json(&cli.out_dir, "frequency.json", &json!({ "coils": coils }))
}

fn metrics(cli: &Cli, truth: &Path, estimates: &Path) -> CliResult<()> {
    let (t, e) = read_pairs(truth, estimates)?;
    let m = error_metrics(&e, &t)?;
    fs::create_dir_all(&cli.out_dir).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    })?;
    write_json(&cli.out_dir, "metrics.json", &json!(m))
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate { emit_samples } => simulate(cli, *emit_samples),
        Command::Replay { samples, handshake } => replay(cli, samples, handshake),
        Command::CalibrateOffset { truth, estimates } => calibrate_offset(cli, truth, estimates),
        Command::TuneFrequency {
            samples,
            stable_below_hz,
        } => tune_frequency(cli, samples, *stable_below_hz),
        Command::Metrics { truth, estimates } => metrics(cli, truth, estimates),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
