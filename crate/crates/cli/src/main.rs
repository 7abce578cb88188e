//! `graspkit` command-line entry points.
//!
//! Exit codes: 0 on success, 1 on internal errors, 2 on usage errors and
//! missing inputs.

mod affordance;
mod evaluate;
mod recognize;
mod stow;
mod synth;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "graspkit", version, about = "Affordance grasping, pick planning and product recognition pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute suction and grasp affordance maps and ranked proposals for one scene.
    Affordance(affordance::Args),
    /// Top-1 / 1% / 5% / 10% precision of a method over a labelled dataset.
    Evaluate(evaluate::Args),
    /// Run a simulated stow episode and log every attempt.
    Stow(stow::Args),
    /// Train the known/novel recognition models and run the 1-vs-20 benchmark.
    Recognize(recognize::Args),
    /// Write a synthetic labelled scene dataset.
    SynthDataset(synth::Args),
}

/// An input problem the user can fix; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn require_dir(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} is not a directory", path.display())))
    }
}

pub fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Missing or malformed inputs are usage errors; anything else is internal.
pub fn eval_error(e: graspkit::evaluation::EvalError, context: &str) -> anyhow::Error {
    use graspkit::evaluation::EvalError;
    match e {
        EvalError::Missing(p) => usage(format!("missing input {}", p.display())),
        e @ EvalError::Format(_) => usage(format!("{context}: {e}")),
        e => anyhow::Error::new(e).context(context.to_string()),
    }
}

/// Reads a JSON config file, or the default when no path is given.
pub fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&PathBuf>, what: &str) -> anyhow::Result<T> {
    path.map_or_else(|| Ok(T::default()), |p| read_json_file(p, what))
}

pub fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> anyhow::Result<T> {
    require_file(path, what)?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{what} {}: {e}", path.display())))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Affordance(a) => affordance::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Stow(a) => stow::run(a),
        Command::Recognize(a) => recognize::run(a),
        Command::SynthDataset(a) => synth::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
