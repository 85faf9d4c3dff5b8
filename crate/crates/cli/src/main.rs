use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adjsim_cli::scenario::{parse_scenario_seeded, Scenario, ScenarioError};
use adjsim_cli::{emit_tables, emit_trace, run};

/// Deterministic simulator for adjacency-matrix based sleep/wake scheduling
/// in clustered sensor networks.
#[derive(Parser)]
#[command(name = "adjsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: sessions, membership events, energy accounting.
    Run {
        /// Scenario file.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print the full summary.
        #[arg(long)]
        summary: bool,
    },
    /// Print the setup-phase tables (and head tables after each membership
    /// event in dynamic mode).
    Tables {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Parse and validate a scenario, reporting every problem.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_PARSE: u8 = 2;

fn load(path: &PathBuf, seed: Option<u64>) -> Result<Scenario, u8> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(EXIT_PARSE);
        }
    };
    match parse_scenario_seeded(&text, seed) {
        Ok(s) => Ok(s),
        Err(ScenarioError::Parse { line, message }) => {
            eprintln!("parse error: line {line}: {message}");
            Err(EXIT_PARSE)
        }
        Err(ScenarioError::Semantic { issues }) => {
            for issue in issues {
                eprintln!("validation error: {issue}");
            }
            Err(EXIT_VALIDATION)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { scenario, seed, trace, summary } => {
            match load(&scenario, seed) {
                Err(code) => code,
                Ok(s) => {
                    let output = run(&s);
                    if let Some(path) = trace {
                        if let Err(e) = fs::write(&path, emit_trace(&output.trace)) {
                            eprintln!("error: cannot write {}: {e}", path.display());
                            return ExitCode::from(EXIT_PARSE);
                        }
                    }
                    if summary {
                        print!("{}", output.summary);
                    } else {
                        let delivered =
                            output.summary.sessions.iter().filter(|x| x.delivered).count();
                        println!(
                            "sessions: {} run, {} delivered, {} skipped",
                            output.summary.sessions.len(),
                            delivered,
                            output.summary.skipped_sessions
                        );
                    }
                    0
                }
            }
        }
        Command::Tables { scenario } => match load(&scenario, None) {
            Err(code) => code,
            Ok(s) => {
                print!("{}", emit_tables(&s));
                0
            }
        },
        Command::Validate { scenario } => match load(&scenario, None) {
            Err(code) => code,
            Ok(_) => {
                println!("ok");
                0
            }
        },
    };
    ExitCode::from(code)
}
