use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use dispatchsim::metrics::{emit_report, Format};
use dispatchsim::runner::prepare_workload;
use dispatchsim::workload::write_trace;
use dispatchsim::{run_scenario, Diagnostic, Error, Scenario};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Discrete-event simulator for event dispatching in serverless clusters.
#[derive(Parser)]
#[command(name = "dispatchsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured (strategy, seed) pair and write the report.
    Run(RunArgs),
    /// Like `run`, for two or more strategies, adding a mean row per strategy.
    Compare(RunArgs),
    /// Check a config and print every diagnostic without running.
    Validate(Common),
    /// Write the invocation trace generated for one seed as JSON lines.
    GenerateTrace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Replace the configured seeds; repeatable.
    #[arg(long)]
    seed: Vec<u64>,
    /// Dotted `key=value` override, e.g. `--set cluster.nodes=8`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Report format; repeatable. Defaults to the config's `output.formats`.
    #[arg(long)]
    format: Vec<Format>,
}

enum Failure {
    Config(Vec<Diagnostic>),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigInvalid(d) => Failure::Config(d),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args, false),
        Command::Compare(args) => run(args, true),
        Command::Validate(common) => validate(&common),
        Command::GenerateTrace { common, out } => generate(&common, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(diags)) => {
            eprintln!("invalid configuration:");
            for d in diags {
                eprintln!("  {d}");
            }
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let mut scenario = Scenario::load(&common.config, &common.overrides).map_err(Failure::Config)?;
    if !common.seed.is_empty() {
        scenario.seeds = common.seed.clone();
    }
    Ok(scenario)
}

fn print_warnings(scenario: &Scenario) {
    for d in scenario.diagnostics().iter().filter(|d| !d.is_error()) {
        eprintln!("{d}");
    }
}

fn run(args: RunArgs, compare: bool) -> Result<(), Failure> {
    let mut scenario = load(&args.common)?;
    if let Some(dir) = args.out_dir {
        scenario.output.dir = dir;
    }
    if !args.format.is_empty() {
        scenario.output.formats = args.format;
    }
    if compare {
        let choices = scenario.strategy.choices().map_err(Failure::Config)?;
        if choices.len() < 2 {
            return Err(Failure::Config(vec![Diagnostic::error(
                "strategy.names",
                format!("compare needs at least two strategies, got {}", choices.len()),
            )]));
        }
    }
    print_warnings(&scenario);
    let report = run_scenario(&scenario, compare)?;
    let out = &scenario.output;
    fs::create_dir_all(&out.dir)
        .map_err(|e| Failure::Runtime(format!("creating {}: {e}", out.dir.display())))?;
    for &format in &out.formats {
        let path = out.dir.join(format!("{}.{}", out.name, format.extension()));
        emit_report(&report, format, &path)?;
        info!("wrote {} rows to {}", report.rows.len(), path.display());
        println!("{}", path.display());
    }
    Ok(())
}

fn validate(common: &Common) -> Result<(), Failure> {
    let scenario = load(common)?;
    let diags = scenario.diagnostics();
    if diags.iter().any(Diagnostic::is_error) {
        return Err(Failure::Config(diags));
    }
    for d in &diags {
        println!("{d}");
    }
    if diags.is_empty() {
        println!("ok");
    }
    Ok(())
}

fn generate(common: &Common, out: &Path) -> Result<(), Failure> {
    let scenario = load(common)?;
    let errors = scenario.errors();
    if !errors.is_empty() {
        return Err(Failure::Config(errors));
    }
    let seed = scenario.seeds[0];
    let prepared = prepare_workload(&scenario, seed)?;
    let file = File::create(out).map_err(|e| Failure::Runtime(format!("creating {}: {e}", out.display())))?;
    write_trace(BufWriter::new(file), &prepared.trace, &prepared.catalog)?;
    info!("seed {seed}: {} invocations", prepared.trace.len());
    Ok(())
}
