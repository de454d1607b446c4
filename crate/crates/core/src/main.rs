use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use z3ro::experiment::{execute, exit_code, write_atomic, ExperimentConfig, ExperimentKind, Overrides};

#[derive(Parser)]
#[command(name = "z3ro", version, about = "MRT and Z3RO precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Radiation and directivity patterns of LOS precoders.
    Pattern(RunArgs),
    /// Closed-form array gain of MRT and Z3RO over array sizes.
    ArrayGain(RunArgs),
    /// Monte Carlo SNR/SDR/SNDR over PA back-off.
    BackoffSweep(RunArgs),
    /// Multi-start check that the closed-form optimum is global.
    OracleVerify(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use 10^4 Monte Carlo samples.
    #[arg(long)]
    quick: bool,
}

fn run(kind: ExperimentKind, args: RunArgs) -> z3ro::Result<bool> {
    let cfg = ExperimentConfig::from_path(&args.config)?;
    let overrides = Overrides {
        seed: args.seed,
        samples: args.samples,
        quick: args.quick,
        output: args.out,
    };
    let resolved = cfg.resolve(kind, &overrides)?;
    let outcome = execute(&resolved.plan)?;
    write_atomic(&resolved.output, outcome.csv.as_bytes())?;
    info!("wrote {}", resolved.output.display());
    Ok(outcome.verified)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Pattern(a) => (ExperimentKind::Pattern, a),
        Command::ArrayGain(a) => (ExperimentKind::ArrayGain, a),
        Command::BackoffSweep(a) => (ExperimentKind::BackoffSweep, a),
        Command::OracleVerify(a) => (ExperimentKind::OracleVerify, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("z3ro: verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("z3ro: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
