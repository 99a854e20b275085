//! Command-line front end: loads a JSON run configuration, dispatches one
//! command and writes CSV/JSON artifacts into the output directory.
//!
//! Exit status: 0 success, 1 validation failure, 2 regime or budget error,
//! 3 assertion failure in a verify command. Errors go to stderr as JSON.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use qpdual::error::ErrorClass;
use qpdual::exec::{with_jobs, Exec};
use qpdual::QpError;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "qpdual", version, about = "Dual-lattice spectral checks for quasi-periodic operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, default_value = "configs/golden.json")]
    config: PathBuf,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, conflicts_with = "faithful")]
    desk: bool,
    #[arg(long, global = true)]
    faithful: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    Validate,
    Band,
    Gaps,
    Geometry,
    TrajBound,
    VerifyForward,
    VerifyInverse,
    Selftest,
}

fn fail(e: &QpError) -> ExitCode {
    let code = match e.class() {
        ErrorClass::Validation => 1,
        ErrorClass::Regime => 2,
        ErrorClass::Assertion => 3,
    };
    eprintln!("{}", json!({"error": e.kind(), "message": e.to_string(), "exit": code}));
    ExitCode::from(code)
}

fn run(cli: &Cli) -> Result<commands::Outcome, QpError> {
    let mut cfg = config::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.desk {
        cfg.ladder.regime = "desk".into();
    }
    if cli.faithful {
        cfg.ladder.regime = "faithful".into();
    }
    let seed = cfg.seed;
    let model = cfg.build()?;
    let exec = if cli.jobs == Some(1) { Exec::Sequential } else { Exec::default() };
    let out = &cli.out;
    with_jobs(cli.jobs, || match cli.command {
        Command::Validate => commands::validate(&model, out),
        Command::Band => commands::band_cmd(&model, out, exec),
        Command::Gaps => commands::gaps(&model, out, exec),
        Command::Geometry => commands::geometry(&model, out),
        Command::TrajBound => commands::traj_bound(&model, out),
        Command::VerifyForward => commands::verify_forward_cmd(&model, out, exec),
        Command::VerifyInverse => commands::verify_inverse_cmd(&model, out, exec),
        Command::Selftest => commands::selftest(&model, out, seed),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            println!("{}", serde_json::to_string_pretty(&o.summary).expect("json values serialize"));
            if o.pass {
                ExitCode::SUCCESS
            } else {
                fail(&QpError::Assertion("verification failed; see the report in the output directory".into()))
            }
        }
        Err(e) => fail(&e),
    }
}
