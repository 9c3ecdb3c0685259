use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tractor_mpc_cli::commands::{cmd_bench, cmd_simulate, cmd_validate};
use tractor_mpc_cli::CliError;

#[derive(Parser)]
#[command(
    name = "tractor-mpc",
    version,
    about = "Tractor-trailer trajectory tracking simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop experiment and write steps.csv, metrics.json and plot data.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `noise.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the configured trajectory and print the report.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Time the controller step and print a JSON report.
    Bench {
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        /// Control horizons to time; defaults to the configured one.
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, seed, out } => {
            match cmd_simulate(&config, seed, out.as_deref()) {
                Ok(o) => {
                    println!("wrote {} rows to {}", o.rows, o.out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Validate { config } => match cmd_validate(&config) {
            Ok(report) => {
                print!("{report}");
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    fail(&CliError::ValidationFailed)
                }
            }
            Err(e) => fail(&e),
        },
        Command::Bench {
            reps,
            horizons,
            config,
        } => match cmd_bench(config.as_deref(), reps, &horizons) {
            Ok(report) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}
