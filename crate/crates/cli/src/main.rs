//! Batch harness around the simulation library: `validate` checks a config,
//! `run` executes one experiment to JSON lines, `calibrate` prints a noise
//! scale, and `sweep` runs one experiment per axis value and seed into a CSV
//! summary. Exit code 1 means the configuration was rejected, 2 means a run
//! or write failed at runtime.

use clap::{Args, Parser, Subcommand};
use dpfedbank::config::{parse_config_file, ExperimentConfig};
use dpfedbank::ldp::{calibrate_sigma, CalibrationMode, PrivacyParams};
use dpfedbank::protocol::{run_experiment, write_jsonl, Summary};
use dpfedbank::rng::derive_seed;
use rayon::prelude::*;
use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dpfedbank",
    version,
    about = "Deterministic federated-learning simulations with local differential privacy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write JSON-lines metrics.
    Run(RunArgs),
    /// Parse and validate a config without running anything.
    Validate(ValidateArgs),
    /// Print the Gaussian noise scale for the given privacy parameters.
    Calibrate(CalibrateArgs),
    /// Run one experiment per axis value and seed; write a CSV summary.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for JSON lines; falls back to the config's `out`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config override as key=value (repeatable), e.g. --set privacy.epsilon=2.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Clipping bound C (sensitivity is 2C). Exclusive with --sensitivity.
    #[arg(long)]
    clip: Option<f64>,
    /// Sensitivity Δ directly. Exclusive with --clip.
    #[arg(long)]
    sensitivity: Option<f64>,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Calibration mode: analytic or simple.
    #[arg(long, default_value = "analytic")]
    mode: String,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Swept parameter: epsilon, attack_fraction, or rule.
    #[arg(long)]
    axis: String,
    /// Comma-separated values; parentheses shield commas, so
    /// "mean,multi_krum(2,5)" is two values.
    #[arg(long)]
    values: String,
    /// Experiments per value, with seeds derived from the master seed.
    #[arg(long, default_value_t = 1)]
    seeds: u32,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) => m,
        }
    }
}

fn config_failure(e: impl Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_failure(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Sweep(args) => cmd_sweep(args),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

/// Caps the worker pool when DPFB_THREADS is set.
fn configure_threads() -> Result<(), Failure> {
    match std::env::var("DPFB_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw
                .trim()
                .parse()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| {
                    Failure::Config(format!(
                        "DPFB_THREADS must be a positive integer, got '{raw}'"
                    ))
                })?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(runtime_failure)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = parse_config_file(&args.config, &args.set).map_err(config_failure)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let run = run_experiment(&cfg).map_err(runtime_failure)?;
    let mut buf = Vec::new();
    write_jsonl(&run, &mut buf).map_err(runtime_failure)?;
    match args.out.or_else(|| cfg.out.clone()) {
        Some(path) => write_atomic(&path, &buf).map_err(runtime_failure),
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(runtime_failure),
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    parse_config_file(&args.config, &args.set).map_err(config_failure)?;
    println!("config ok");
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), Failure> {
    let clip = match (args.clip, args.sensitivity) {
        (Some(c), None) => c,
        (None, Some(s)) => s / 2.0,
        _ => {
            return Err(Failure::Config(
                "pass exactly one of --clip and --sensitivity".to_string(),
            ))
        }
    };
    let mode = match args.mode.to_ascii_lowercase().as_str() {
        "analytic" => CalibrationMode::Analytic,
        "simple" => CalibrationMode::Simple,
        other => {
            return Err(Failure::Config(format!(
                "mode must be 'analytic' or 'simple', got '{other}'"
            )))
        }
    };
    let params =
        PrivacyParams::new(args.epsilon, args.delta, clip, mode).map_err(config_failure)?;
    println!("{}", six_significant(calibrate_sigma(&params).sigma));
    Ok(())
}

/// Six significant digits, truncated toward zero.
fn six_significant(v: f64) -> String {
    assert!(v.is_finite() && v > 0.0, "noise scale must be positive");
    let decimals = (5 - v.log10().floor() as i64).max(0) as usize;
    let scale = 10f64.powi(decimals as i32);
    let truncated = (v * scale).floor() / scale;
    format!("{truncated:.decimals$}")
}

struct SweepJob {
    value: String,
    seed_index: u32,
    overrides: Vec<String>,
}

struct SweepRow {
    value: String,
    seed_index: u32,
    seed: u64,
    summary: Summary,
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let base_overrides = args.set;
    let mut base = parse_config_file(&args.config, &base_overrides).map_err(config_failure)?;
    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    let values = split_values(&args.values);
    if values.is_empty() {
        return Err(Failure::Config("sweep values list is empty".to_string()));
    }
    if args.seeds == 0 {
        return Err(Failure::Config("--seeds must be at least 1".to_string()));
    }

    let mut jobs = Vec::new();
    for value in &values {
        let axis_override = axis_override(&args.axis, value, &base)?;
        for seed_index in 0..args.seeds {
            let mut overrides = base_overrides.clone();
            overrides.push(axis_override.clone());
            jobs.push(SweepJob {
                value: value.clone(),
                seed_index,
                overrides,
            });
        }
    }

    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|job| {
            let mut cfg =
                parse_config_file(&args.config, &job.overrides).map_err(config_failure)?;
            cfg.seed = derive_seed(base.seed, job.seed_index as u64);
            cfg.out = None;
            let run = run_experiment(&cfg).map_err(runtime_failure)?;
            Ok(SweepRow {
                value: job.value.clone(),
                seed_index: job.seed_index,
                seed: cfg.seed,
                summary: run.summary,
            })
        })
        .collect::<Result<_, Failure>>()?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "axis",
            "value",
            "seed_index",
            "seed",
            "final_accuracy",
            "final_loss",
            "detection_tpr",
            "detection_fpr",
            "max_cumulative_eps",
        ])
        .map_err(runtime_failure)?;
    for row in &rows {
        let s = &row.summary;
        let max_eps = s
            .cumulative_eps
            .iter()
            .map(|&(_, e)| e)
            .fold(0.0f64, f64::max);
        writer
            .write_record([
                args.axis.clone(),
                row.value.clone(),
                row.seed_index.to_string(),
                row.seed.to_string(),
                opt_cell(s.final_accuracy),
                opt_cell(s.final_loss),
                opt_cell(s.detection_tpr),
                opt_cell(s.detection_fpr),
                max_eps.to_string(),
            ])
            .map_err(runtime_failure)?;
    }
    let bytes = writer.into_inner().map_err(runtime_failure)?;
    match args.out {
        Some(path) => write_atomic(&path, &bytes).map_err(runtime_failure),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(runtime_failure),
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Builds the `--set` style override that pins one axis value.
fn axis_override(axis: &str, value: &str, base: &ExperimentConfig) -> Result<String, Failure> {
    match axis {
        "epsilon" => {
            if !base.privacy.enabled() {
                return Err(Failure::Config(
                    "sweep axis 'epsilon' requires privacy enabled in the base config"
                        .to_string(),
                ));
            }
            let eps: f64 = value.parse().map_err(|_| {
                Failure::Config(format!("epsilon value '{value}' is not a number"))
            })?;
            Ok(format!("privacy.epsilon={eps}"))
        }
        "attack_fraction" => {
            if base.attack.variant == dpfedbank::attack::AttackVariant::None {
                return Err(Failure::Config(
                    "sweep axis 'attack_fraction' requires an attack variant in the base config"
                        .to_string(),
                ));
            }
            let frac: f64 = value.parse().map_err(|_| {
                Failure::Config(format!("attack_fraction value '{value}' is not a number"))
            })?;
            if !(0.0..=1.0).contains(&frac) {
                return Err(Failure::Config(format!(
                    "attack_fraction must lie in [0, 1], got {frac}"
                )));
            }
            let n = base.partition.n_clients();
            let count = (frac * n as f64 + 1e-9).floor() as usize;
            let ids: Vec<String> = (n - count..n).map(|i| i.to_string()).collect();
            Ok(format!("attack.attacker_ids=[{}]", ids.join(",")))
        }
        "rule" => Ok(format!("aggregation.rule={value}")),
        other => Err(Failure::Config(format!(
            "unknown sweep axis '{other}' (expected epsilon, attack_fraction, or rule)"
        ))),
    }
}

/// Splits on commas that are not inside parentheses and trims whitespace.
fn split_values(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for ch in text.chars() {
        match ch {
            '(' => {
                depth += 1;
                current.push(ch);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(ch);
            }
            ',' if depth == 0 => {
                if !current.trim().is_empty() {
                    out.push(current.trim().to_string());
                }
                current.clear();
            }
            _ => current.push(ch),
        }
    }
    if !current.trim().is_empty() {
        out.push(current.trim().to_string());
    }
    out
}

/// Writes via a temp file in the destination directory plus an atomic rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
