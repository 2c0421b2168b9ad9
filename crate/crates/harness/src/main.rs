use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use e112_harness::{generate, load_scenario, run};

#[derive(Parser)]
#[command(name = "e112-harness", about = "Drive scenarios against an e112 server and score the outcome")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file against a server started with fault injection.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "http://127.0.0.1:8112")]
        endpoint: String,
        /// Write the JSON report here as well as to stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Write the seeded flood drill scenario.
    Generate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(s) => {
                println!("ok: {} users, {} steps", s.population.len(), s.timeline.len());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
        Command::Generate { seed, out } => {
            let text = serde_json::to_string_pretty(&generate::flood(seed)).expect("scenario serializes");
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, text + "\n") {
                        eprintln!("{}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                }
                None => println!("{text}"),
            }
            ExitCode::SUCCESS
        }
        Command::Run { scenario, endpoint, report } => {
            let scenario = match load_scenario(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            let r = match run(&scenario, &endpoint) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("run aborted: {e}");
                    return ExitCode::from(3);
                }
            };
            let text = serde_json::to_string_pretty(&r).expect("report serializes");
            println!("{text}");
            if let Some(path) = report {
                if let Err(e) = std::fs::write(&path, text + "\n") {
                    eprintln!("{}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            let failed: Vec<_> = r.failed_assertions().collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for a in failed {
                    eprintln!("FAILED {} (t={}): {}", a.name, a.t, a.detail);
                }
                ExitCode::from(1)
            }
        }
    }
}
