use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cotransport_calibration::store::Store;
use cotransport_calibration::{AppState, ServiceConfig};
use cotransport_harness::{emit_batch, run_study, EnvSource, ExperimentSpec, Format, RecordSink, SpecError, Study, StudyError};

const EXIT_CONFIG: u8 = 2;
const EXIT_SIMULATION: u8 = 3;

#[derive(Parser)]
#[command(name = "cotransport", version, about = "Run co-transportation studies or the calibration service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model choice percentages per option.
    Distribution(StudyArgs),
    /// Accumulated objective cost with and without the mode-transition model.
    Coordination(StudyArgs),
    /// True control cost with and without pose optimization.
    Pose(StudyArgs),
    /// Serve the calibration HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct StudyArgs {
    /// Built-in name (env1..env4) or TOML path; repeatable. Default: all built-ins.
    #[arg(long = "env")]
    envs: Vec<String>,
    /// Trials per cell. Default: 20 (coordination), 100 (pose).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameter override, e.g. `--set c_r=12 --set eta=5,15`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Exit with status 3 if any trial fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long = "env")]
    envs: Vec<String>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Session log; in-memory when omitted.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn build_spec(study: Study, envs: &[String], trials: Option<usize>, seed: u64, overrides: &[String]) -> Result<ExperimentSpec, SpecError> {
    let mut spec = ExperimentSpec::new(study);
    spec.envs = envs.iter().map(|e| EnvSource::parse(e)).collect();
    spec.trials = trials.unwrap_or(spec.trials);
    spec.seed = seed;
    for o in overrides {
        spec.set(o)?;
    }
    Ok(spec)
}

fn run(study: Study, args: StudyArgs) -> ExitCode {
    let spec = match build_spec(study, &args.envs, args.trials, args.seed, &args.overrides) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let outcome = match run_study(&spec, &RecordSink::under(args.out.join("records"))) {
        Ok(o) => o,
        Err(StudyError::Spec(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match emit_batch(&[(study, outcome.table)], &args.out, args.format) {
        Ok(paths) => paths.iter().for_each(|p| println!("{}", p.display())),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    for f in &outcome.failures {
        eprintln!("trial {} of {} failed: {}", f.trial, f.cell.join(" / "), f.reason);
    }
    if args.strict && !outcome.failures.is_empty() {
        return ExitCode::from(EXIT_SIMULATION);
    }
    ExitCode::SUCCESS
}

fn serve(args: ServeArgs) -> ExitCode {
    let prepared = (|| -> Result<_, String> {
        let spec = build_spec(Study::Distribution, &args.envs, None, 0, &args.overrides).map_err(|e| e.to_string())?;
        let params = spec.validate().map_err(|e| e.to_string())?;
        let envs = spec.environments().map_err(|e| e.to_string())?;
        Ok((params, envs))
    })();
    let (params, envs) = match prepared {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let store = match &args.store {
        Some(path) => match Store::open(path) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => Store::in_memory(),
    };
    let config = ServiceConfig {
        coordination: params.coordination,
        ..ServiceConfig::default()
    };
    let state = AppState::new(config, envs, store);
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    eprintln!("listening on http://{}", args.addr);
    match runtime.block_on(cotransport_calibration::serve(state, args.addr)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Distribution(a) => run(Study::Distribution, a),
        Command::Coordination(a) => run(Study::Coordination, a),
        Command::Pose(a) => run(Study::Pose, a),
        Command::Serve(a) => serve(a),
    }
}
