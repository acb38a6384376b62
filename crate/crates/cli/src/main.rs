use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use sphere_equilibria_cli::{run, RunOptions};

#[derive(Parser)]
#[command(name = "sphere-eq", version, about = "Run equilibrium-counting experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Master seed; overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "sphere-eq-out")]
        out_dir: PathBuf,
        /// Reject unknown config keys and fail on unsaturated Monte Carlo instances.
        #[arg(long)]
        strict: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": e.to_string(), "exit_code": 2 } }));
            return ExitCode::from(2);
        }
    };
    let Command::Run {
        config,
        seed,
        threads,
        out_dir,
        strict,
    } = cli.command;
    let opts = RunOptions {
        config,
        seed,
        threads,
        out_dir,
        strict,
    };
    match run(&opts) {
        Ok(report) => {
            for key in &report.unknown_keys {
                eprintln!("{}", json!({ "warning": { "kind": "unknown-key", "key": key } }));
            }
            for f in &report.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
