//! `irischain`: synthetic iris data, LSH probes, a simulated permissioned
//! ledger and the vaccination passport protocol on top of it.
//!
//! Exit codes: 0 success, 1 runtime error, 2 invalid input, 3 a measured
//! value missed its bound (or a stored chain failed verification).

mod config;
mod eval;
mod lsh;
mod node;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use irischain::harness::HarnessError;
use irischain::passport::PassportError;

use crate::config::FileConfig;

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Check(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid input: {m}"),
            Self::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

/// Fails with exit code 3 unless `ok`.
pub fn check(ok: bool, what: impl FnOnce() -> String) -> anyhow::Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Check(what()).into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "irischain", version, about)]
pub struct Cli {
    /// Seed for every random draw; overrides seeds from the config file
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// TOML file with [synth], [eval], [security], [round_trip], [scenario] sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic iris dataset
    Synth(eval::SynthArgs),
    /// FAR/FRR sweeps, security probes and protocol round trips
    #[command(subcommand)]
    Eval(eval::EvalCommand),
    /// Scripted multi-node protocol runs
    #[command(subcommand)]
    Scenario(eval::ScenarioCommand),
    /// Locality-sensitive hash tools and probes
    #[command(subcommand)]
    Lsh(lsh::LshCommand),
    /// Simulated permissioned ledger kept in a state directory
    #[command(subcommand)]
    Ledger(node::LedgerCommand),
    /// Passport protocol operations against a ledger state directory
    #[command(subcommand)]
    Passport(node::PassportCommand),
}

pub struct Ctx {
    pub seed: Option<u64>,
    pub config: FileConfig,
}

impl Ctx {
    pub fn seed_or(&self, fallback: u64) -> u64 {
        self.seed.unwrap_or(fallback)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        config: FileConfig::load(cli.config.as_deref())?,
    };
    match cli.command {
        Command::Synth(a) => eval::synth(&ctx, a),
        Command::Eval(c) => eval::run(&ctx, c),
        Command::Scenario(c) => eval::scenario(&ctx, c),
        Command::Lsh(c) => lsh::run(&ctx, c),
        Command::Ledger(c) => node::ledger(&ctx, c),
        Command::Passport(c) => node::passport(&ctx, c),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return match f {
            Failure::Validation(_) => 2,
            Failure::Check(_) => 3,
        };
    }
    if let Some(h) = err.downcast_ref::<HarnessError>() {
        return if h.is_validation() { 2 } else { 1 };
    }
    match err.downcast_ref::<PassportError>() {
        Some(PassportError::Validation(_) | PassportError::DuplicateEnrollment(_)) => 2,
        _ if err.downcast_ref::<serde_json::Error>().is_some() => 2,
        _ => 1,
    }
}

/// A reader such as `head` closed our stdout early.
fn broken_pipe(err: &anyhow::Error) -> bool {
    err.chain()
        .filter_map(|e| e.downcast_ref::<std::io::Error>())
        .any(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
