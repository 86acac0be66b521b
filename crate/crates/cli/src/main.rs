use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landscape_core::experiment::{emit_plots_data, run_experiment, ExperimentConfig, ExperimentKind};
use landscape_core::generators::{generate, GeneratorSpec};
use landscape_core::Error;
use serde_json::Value;

const THREADS_VAR: &str = "LANDSCAPE_LAB_THREADS";

/// Runs landscape experiments from JSON configs.
///
/// Exit status: 0 when every check passes, 1 when a check fails or the run
/// errors, 2 on usage or configuration errors.
#[derive(Debug, Parser)]
#[command(name = "landscape-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare analytic derivatives with central finite differences.
    CheckGrad(RunArgs),
    /// Run an optimizer and check where it ends up.
    Optimize(RunArgs),
    /// Verify analytic stationary points or a landscape inequality.
    Certify(RunArgs),
    /// Classify random and analytic points with the strict-saddle trichotomy.
    LandscapeSweep(RunArgs),
    /// Monte-Carlo check of the sampled inner-product concentration.
    Concentration(RunArgs),
    /// Localization error of the GLM estimator at n and a multiple of n.
    ScalingStudy(RunArgs),
    /// Generate an instance and write it as JSON.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// JSON generator spec.
    #[arg(long, short)]
    spec: PathBuf,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::ConfigParse { .. }
            | Error::UnknownCondition(_)
            | Error::Unsupported { .. }
            | Error::EnumerationTooLarge(_)
            | Error::Json(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::CheckGrad(a) => run(ExperimentKind::CheckGrad, a),
        Command::Optimize(a) => run(ExperimentKind::Optimize, a),
        Command::Certify(a) => run(ExperimentKind::Certify, a),
        Command::LandscapeSweep(a) => run(ExperimentKind::LandscapeSweep, a),
        Command::Concentration(a) => run(ExperimentKind::Concentration, a),
        Command::ScalingStudy(a) => run(ExperimentKind::ScalingStudy, a),
        Command::Generate(a) => generate_instance(a).map(|()| true),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Loads the config, filling in the experiment from the subcommand when the
/// file does not name one.
fn load_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut value = read_json(&args.config)?;
    let Value::Object(map) = &mut value else {
        return Err(Failure::Usage(format!("{}: config must be a JSON object", args.config.display())));
    };
    match map.get("experiment").map(|v| v.as_str()) {
        None => {
            map.insert("experiment".into(), Value::from(kind.name()));
        }
        Some(Some(name)) if name == kind.name() => {}
        Some(other) => {
            return Err(Failure::Usage(format!(
                "config names experiment {}, but the subcommand is {kind}",
                other.map_or_else(|| "<non-string>".to_string(), str::to_string)
            )))
        }
    }
    let mut cfg = ExperimentConfig::from_value(value)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<bool, Failure> {
    let cfg = load_config(kind, &args)?;
    let report = run_experiment(&cfg)?;
    if let Some(dir) = &cfg.output_dir {
        emit_plots_data(&report, dir)?;
    }
    let summary = serde_json::to_string_pretty(&report.summary).map_err(Error::from)?;
    println!("{summary}");
    for note in &report.summary.notes {
        eprintln!("note: {note}");
    }
    if report.summary.passed {
        eprintln!("PASS {kind}: {} rows in {:.2}s", report.per_run_rows.len(), report.wall_time);
    } else {
        for f in &report.summary.failures {
            eprintln!("FAIL {f}");
        }
    }
    Ok(report.summary.passed)
}

fn generate_instance(args: GenerateArgs) -> Result<(), Failure> {
    let value = read_json(&args.spec)?;
    let spec: GeneratorSpec = serde_json::from_value(value).map_err(|e| Failure::Usage(format!("{}: {e}", args.spec.display())))?;
    let inst = generate(&spec)?;
    let text = serde_json::to_string_pretty(&inst).map_err(Error::from)? + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
