//! `qftscat`: run one numerical experiment from a JSON config.
//!
//! Exit codes: 0 when the run's checks pass, 2 when they fail or a numerical
//! error occurs, 1 for bad input.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(s) => write!(f, "config error: {s}"),
            CliError::Io(s) => write!(f, "i/o error: {s}"),
            CliError::Numerical(s) => write!(f, "numerical error: {s}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "qftscat", version, about = "Scattering amplitudes from form factors of a generalized free field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seeds in the `fit` and `truncate_demo` sections.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Connected S-matrix amplitude with quadrature self-consistency checks.
    Amplitude,
    /// Finite-time LSZ pairing and its large-time limit.
    Converge,
    /// Polynomial fit of a transfer function on the kinematic region.
    Fit,
    /// Gram matrix, metric operator and continuity constant.
    Gram,
    /// Truncation round trip on random kernel families.
    TruncateDemo,
    /// Principal-value limit of the oscillatory kernel.
    Pvdemo,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Amplitude => "amplitude",
            Command::Converge => "converge",
            Command::Fit => "fit",
            Command::Gram => "gram",
            Command::TruncateDemo => "truncate-demo",
            Command::Pvdemo => "pvdemo",
        }
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut loaded = config::load(path)?;
    if let Some(seed) = cli.seed {
        if let Some(f) = &mut loaded.config.fit {
            f.settings.seed = seed;
        }
        if let Some(t) = &mut loaded.config.truncate_demo {
            t.seed = seed;
        }
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let outcome = match cli.command {
        Command::Amplitude => commands::amplitude(&loaded),
        Command::Converge => commands::converge(&loaded),
        Command::Fit => commands::fit(&loaded),
        Command::Gram => commands::gram(&loaded),
        Command::TruncateDemo => commands::truncate_demo(&loaded),
        Command::Pvdemo => commands::pvdemo(&loaded),
    }?;
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let digest = Sha256::digest(&loaded.bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let envelope = json!({
        "command": cli.command.name(),
        "version": qftscat::VERSION,
        "config_sha256": hex,
        "seed": cli.seed,
        "pass": outcome.pass,
        "result": outcome.result,
    });
    output::write_json(&cli.out.join("result.json"), &envelope)?;
    outcome.tables.write(&cli.out)?;
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QFTSCAT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => {
            log::info!("{}: pass", cli.command.name());
            ExitCode::SUCCESS
        }
        Ok(false) => {
            eprintln!("{}: checks failed, see {}", cli.command.name(), cli.out.join("result.json").display());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
