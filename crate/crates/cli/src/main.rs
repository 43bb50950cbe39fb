use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddprep_cli::config::parse_config;
use ddprep_cli::runner::{run_experiment, RunRequest};
use ddprep_cli::{coefficient_table, registry, resolve_sequence};

#[derive(Parser)]
#[command(name = "ddprep", version, about = "Dynamical decoupling of dissipative state preparation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Continue from the partial results of an interrupted run.
        #[arg(long)]
        resume: bool,
    },
    /// List registered experiments.
    List,
    /// Print Magnus coefficients for a sequence tag or a file of normalized pulse times.
    Coefficients { sequence: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::List => {
            print!("{}", registry::listing());
            ExitCode::SUCCESS
        }
        Command::Coefficients { sequence } => match resolve_sequence(&sequence).and_then(|s| coefficient_table(&s)) {
            Ok(t) => {
                print!("{}", t.to_csv());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::Run { config, out, seed, workers, resume } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            let cfg = match parse_config(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(1);
                }
            };
            match run_experiment(&cfg, &RunRequest { out_dir: out, seed, workers, resume }) {
                Ok(summary) => {
                    for c in &summary.checks {
                        eprintln!("check {}: {} (target {}) {}", c.name, c.value, c.target, if c.pass { "ok" } else { "FAILED" });
                    }
                    println!("{}", summary.csv.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
