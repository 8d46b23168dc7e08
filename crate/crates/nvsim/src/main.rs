use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nvsim::commands::{self, Common};
use nvsim::CliError;

#[derive(Parser)]
#[command(name = "nvsim", version, about = "Parallel single-NV measurement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// TOML run configuration
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    #[arg(long, value_name = "N")]
    shots: Option<u64>,
    /// Worker threads [default: $NVSIM_THREADS, else all cores]
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

impl From<Flags> for Common {
    fn from(f: Flags) -> Self {
        Common { config: f.config, seed: f.seed, out: f.out, scenario: f.scenario, shots: f.shots, threads: f.threads }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write records, frames and a summary
    Simulate(#[command(flatten)] Flags),
    /// Fit models, pick thresholds and build correlation matrices from
    /// simulate output
    Analyze {
        /// Simulate output directory, shot file, trajectory, histogram or PGM frame
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Fit the two-mode count model to a histogram or a sample column
    Fit {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Measurement-time tables, scalability curves and the crossover report
    Plan(#[command(flatten)] Flags),
    /// Run the acceptance suite
    Reproduce {
        /// Only these criteria (repeatable)
        #[arg(long, value_name = "ID")]
        only: Vec<u8>,
        #[command(flatten)]
        flags: Flags,
    },
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes")
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(f) => {
            let (out, summary) = commands::simulate(&f.into())?;
            println!("{}", pretty(&summary["results"]));
            eprintln!("wrote {}", out.display());
        }
        Command::Analyze { input, flags } => {
            let (out, report) = commands::analyze(&input, &flags.into())?;
            println!("{}", pretty(&report));
            eprintln!("wrote {}", out.display());
        }
        Command::Fit { input, flags } => println!("{}", pretty(&commands::fit(&input, &flags.into())?)),
        Command::Plan(f) => {
            let (out, report) = commands::plan(&f.into())?;
            println!("{}", pretty(&report));
            eprintln!("wrote {}", out.display());
        }
        Command::Reproduce { only, flags } => {
            commands::reproduce(&flags.into(), &only)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
