//! `posebench`: simulate sessions, generate reference paths, evaluate
//! sessions and re-emit reports.
//!
//! Exit status: 0 on success, 1 when `--gate` is given and a trial fails the
//! requirement gate, 2 on any input or I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use posebench_core::evaluate::evaluate_session;
use posebench_core::ingest::write_pose_log;
use posebench_core::manifest::{parse_manifest, EvalConfig, ReferenceSpec};
use posebench_core::reference::{gen_iso_cube_poses, schedule_with};
use posebench_core::report::{emit_report, load_report, requirement_gate, Format, MetricReport};
use posebench_core::simulator::{
    protocol_reference, resolve_scenarios, scenario_names, write_session, FaultConfig, BUNDLES,
};
use posebench_core::{Error, FrameId, Pose, PoseSeries, Quaternion, Result, Timestamp};

#[derive(Parser)]
#[command(
    name = "posebench",
    version,
    about = "6-DoF tracking evaluation against ground truth"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a preset scenario or bundle into a session directory.
    Simulate(SimulateArgs),
    /// Write a standard reference path (or the static cube poses) as a pose log.
    GenRef(GenRefArgs),
    /// Evaluate a session manifest and write the report.
    Evaluate(EvaluateArgs),
    /// Re-emit (and optionally re-gate) a saved JSON report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct OutputArgs {
    /// Output formats, comma separated.
    #[arg(long, value_delimiter = ',', default_values = ["json", "csv"])]
    format: Vec<FormatArg>,
    /// Exit with status 1 if any trial fails the requirement gate.
    #[arg(long)]
    gate: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset or bundle name; see `--list`.
    #[arg(long, required_unless_present = "list")]
    scenario: Option<String>,
    /// Session seed; overrides `rng_seed` from `--config`.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON fault configuration replacing the preset's (single scenarios only).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "sim")]
    out_dir: PathBuf,
    /// Print the available presets and bundles.
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct GenRefArgs {
    /// DT01, DT02, DT03, DT04-1, DT04-2, or ISO-CUBE for the static poses.
    #[arg(long)]
    protocol: String,
    /// JSON reference spec (shape and placement) replacing the standard one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Traversal speed, mm/s.
    #[arg(long, default_value_t = 10.0)]
    speed: f64,
    /// Sample rate, Hz.
    #[arg(long, default_value_t = 50.0)]
    rate: f64,
    #[arg(long, default_value = "ref")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// JSON evaluation configuration replacing the manifest's.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Saved `report.json`.
    #[arg(long)]
    input: PathBuf,
    /// JSON evaluation configuration whose requirement limits re-gate the report.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

enum Outcome {
    Done,
    GateFailed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::GenRef(a) => gen_ref(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::GateFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes one line to stdout. A closed pipe (`| head`) is not an error.
fn say(line: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        say(p.display());
    }
}

fn simulate(a: SimulateArgs) -> Result<Outcome> {
    if a.list {
        for name in scenario_names() {
            say(name);
        }
        for (name, what) in BUNDLES {
            say(format_args!("{name}\t{what}"));
        }
        return Ok(Outcome::Done);
    }
    let name = a.scenario.unwrap_or_default();
    let mut scenarios = resolve_scenarios(&name)?;
    let mut seed = a.seed.unwrap_or(0);
    if let Some(path) = &a.config {
        if scenarios.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "--config applies to single scenarios, `{name}` has {}",
                scenarios.len()
            )));
        }
        let faults: FaultConfig = read_json(path)?;
        faults.validate()?;
        seed = a.seed.unwrap_or(faults.rng_seed);
        scenarios[0].faults = faults;
    }
    info!(
        "simulating {} trial(s) of `{name}` with seed {seed}",
        scenarios.len()
    );
    let paths = write_session(&a.out_dir, &name, &scenarios, seed)?;
    print_paths(&paths);
    Ok(Outcome::Done)
}

fn gen_ref(a: GenRefArgs) -> Result<Outcome> {
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    let log_path = a.out_dir.join(format!("{}.csv", a.protocol));
    let desc_path = a.out_dir.join(format!("{}.json", a.protocol));
    let descriptor = if a.protocol.eq_ignore_ascii_case("ISO-CUBE") {
        let set = gen_iso_cube_poses(200.0, 45.0)?;
        let samples = set
            .poses
            .iter()
            .enumerate()
            .map(|(k, p)| {
                Pose::new(
                    Timestamp::from_nanos(k as u64 * 1_000_000_000),
                    p.position,
                    p.orientation,
                    FrameId::Reference,
                )
            })
            .collect();
        write_pose_log(
            &log_path,
            &PoseSeries::new(FrameId::Reference, samples, 1.0)?,
        )?;
        json!({
            "protocol_id": set.protocol_id,
            "dims": { "edge": 200.0, "incline_deg": 45.0 },
            "placement": null,
            "poses": set.poses,
        })
    } else {
        let spec: ReferenceSpec = match &a.config {
            Some(p) => read_json(p)?,
            None => protocol_reference(&a.protocol)?,
        };
        let path = spec.build(&a.protocol)?;
        let series = schedule_with(
            &path,
            a.speed,
            a.rate,
            Timestamp::ZERO,
            Quaternion::IDENTITY,
        )?;
        write_pose_log(&log_path, &series)?;
        json!({
            "protocol_id": a.protocol,
            "trajectory": spec.trajectory_name(),
            "dims": spec.shape,
            "placement": spec.placement,
            "frame": path.frame().to_string(),
            "closed": path.closed(),
            "arc_length_mm": path.arc_length(),
            "speed_mm_s": a.speed,
            "rate_hz": a.rate,
            "samples": series.len(),
        })
    };
    let mut text = serde_json::to_string_pretty(&descriptor).map_err(Error::Json)?;
    text.push('\n');
    std::fs::write(&desc_path, text).map_err(|e| Error::Io {
        path: desc_path.clone(),
        source: e,
    })?;
    print_paths(&[log_path, desc_path]);
    Ok(Outcome::Done)
}

fn formats(args: &OutputArgs) -> Vec<Format> {
    args.format
        .iter()
        .map(|f| match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        })
        .collect()
}

/// Emits the report, prints paths and a gate summary, and maps the gate.
fn finish(report: &MetricReport, out_dir: &Path, output: &OutputArgs) -> Result<Outcome> {
    let paths = emit_report(report, out_dir, &formats(output))?;
    print_paths(&paths);
    for f in &report.flags {
        eprintln!("flag {} {:?}: {}", f.trial_id, f.kind, f.detail);
    }
    let failed: Vec<&str> = report
        .gate
        .iter()
        .filter(|g| !g.pass)
        .map(|g| g.trial_id.as_str())
        .collect();
    eprintln!(
        "{} trial(s), {} flag(s), {} failing the requirement gate",
        report.trials.len(),
        report.flags.len(),
        failed.len()
    );
    if output.gate && !failed.is_empty() {
        eprintln!("gate failed: {}", failed.join(", "));
        return Ok(Outcome::GateFailed);
    }
    Ok(Outcome::Done)
}

fn evaluate(a: EvaluateArgs) -> Result<Outcome> {
    let session = parse_manifest(&a.manifest)?;
    let cfg: EvalConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => session.config.clone(),
    };
    cfg.cleaning.validate()?;
    info!(
        "evaluating {} trial(s) from {}",
        session.trials.len(),
        a.manifest.display()
    );
    let report = evaluate_session(&session, &cfg)?;
    finish(&report, &a.out_dir, &a.output)
}

fn report(a: ReportArgs) -> Result<Outcome> {
    let mut report = load_report(&a.input)?;
    if let Some(p) = &a.config {
        let cfg: EvalConfig = read_json(p)?;
        report.config.requirement = cfg.requirement;
        report.gate = requirement_gate(&report, &report.config.requirement);
    }
    finish(&report, &a.out_dir, &a.output)
}
