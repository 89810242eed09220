//! `raise`: validate content, play scenarios headless, aggregate survey
//! responses and run the world server.
//!
//! Exit codes: 0 success, 1 validation or domain errors, 2 usage error,
//! 3 I/O or environment error.

mod play;
mod serve;
mod stats;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The inputs were read but are wrong; the report was already printed.
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "raise", version, about = "Headless virtual-world learning environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check scenario files or content pack directories.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Print a JSON array of reports.
        #[arg(long)]
        json: bool,
        /// Treat warnings as failures.
        #[arg(long)]
        strict: bool,
    },
    /// Run a scenario to its end with a scripted or generated policy.
    Play {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `random`, `first_choice`, or `scripted <inputs.json>`.
        #[arg(long, num_args = 1..=2, value_names = ["POLICY", "FILE"], default_value = "random")]
        policy: Vec<String>,
        #[arg(long)]
        locale: Option<String>,
        /// Event log destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the input list, loadable by `--policy scripted`.
        #[arg(long)]
        record_inputs: Option<PathBuf>,
    },
    /// Aggregate survey responses.
    Stats {
        instrument: PathBuf,
        responses: PathBuf,
        #[arg(long = "item")]
        items: Vec<String>,
        /// `never_rarely`, `often_always`, or comma-separated values.
        #[arg(long = "bucket")]
        buckets: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Serve the world protocol over WebSocket until interrupted.
    Serve {
        #[arg(long, env = "RAISE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "RAISE_CONTENT_DIR", default_value = "content")]
        content_dir: PathBuf,
        #[arg(long, env = "RAISE_DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Seeds session seeds and ids; wall-clock derived when absent.
        #[arg(long)]
        boot_seed: Option<u64>,
    },
}

/// Writes to stdout; a closed pipe ends output quietly.
pub fn emit(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(CliError::Io(format!("stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate {
            paths,
            json,
            strict,
        } => validate::run(&paths, json, strict),
        Command::Play {
            scenario,
            seed,
            policy,
            locale,
            out,
            record_inputs,
        } => play::run(&play::PlayArgs {
            scenario,
            seed,
            policy,
            locale,
            out,
            record_inputs,
        }),
        Command::Stats {
            instrument,
            responses,
            items,
            buckets,
            json,
        } => stats::run(&instrument, &responses, &items, &buckets, json),
        Command::Serve {
            port,
            content_dir,
            data_dir,
            host,
            boot_seed,
        } => serve::run(&host, port, &content_dir, &data_dir, boot_seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let text = e.to_string();
            if !text.is_empty() {
                eprintln!("raise: {text}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
