//! `dyadkit`: synth → extract → encode → train → eval → report, plus
//! gradient checks and file validation.

mod args;
mod check;
mod config;
mod pipeline;
mod train;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::RunConfig;

/// A command failure and its exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    /// Bad flags, arguments or configuration (exit code 2).
    pub fn usage(message: impl fmt::Display) -> Self {
        Failure { code: 2, message: message.to_string() }
    }

    /// Invalid data or a failed check (exit code 1).
    pub fn failed(message: impl fmt::Display) -> Self {
        Failure { code: 1, message: message.to_string() }
    }
}

pub type CmdResult = Result<(), Failure>;

fn run(cli: Cli) -> CmdResult {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.resolve(cli.seed, None);
    if let Some(jobs) = cli.jobs.or(cfg.jobs) {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot start {jobs} workers: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => pipeline::synth(a, cfg),
        Command::Extract(a) => pipeline::extract(a),
        Command::Encode(a) => pipeline::encode(a),
        Command::Train(a) => train::train(a, cfg),
        Command::Eval(a) => train::eval(a, cfg),
        Command::Report(a) => train::report(a),
        Command::Gradcheck(a) => check::gradcheck(a, cli.seed),
        Command::Validate(a) => check::validate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
