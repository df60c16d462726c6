//! Command-line front end of the experiment runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowlab::lab::{self, ExperimentConfig, RunWriter};
use flowlab::Error;

#[derive(Debug, Parser)]
#[command(name = "flowlab", version, about = "Suspension flows, time changes and entropy estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config; defaults apply to every omitted field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` of the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all outputs are independent of this.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Flat function tables and the shell bound check.
    Flatfn,
    /// Entropy of the base map, its suspension and configured time changes.
    Entropy,
    /// Recurrence constants and the ball measure bound.
    Recurrence,
    /// Cocycle and inversion checks of a clock.
    Timechange,
    /// Flat against quadratic time change of the same suspension.
    Dichotomy,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Flatfn => "flatfn",
            Command::Entropy => "entropy",
            Command::Recurrence => "recurrence",
            Command::Timechange => "timechange",
            Command::Dichotomy => "dichotomy",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_divergence() {
        3
    } else if matches!(e, Error::Config { .. } | Error::InvalidInput(_) | Error::OutOfDomain { .. } | Error::Json(_)) {
        2
    } else {
        1
    }
}

fn execute(cli: &Cli) -> Result<String, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config { field: "output_dir".into(), message: "set it or pass --out".into() })?;
    cfg.output_dir = Some(dir.clone());
    cfg.validate()?;
    let w = RunWriter::new(&dir, cli.command.name(), &cfg)?;
    let summary = match cli.command {
        Command::Flatfn => serde_json::to_string_pretty(&lab::cmd_flatfn(&cfg, w)?),
        Command::Entropy => serde_json::to_string_pretty(&lab::cmd_entropy(&cfg, w)?),
        Command::Recurrence => serde_json::to_string_pretty(&lab::cmd_recurrence(&cfg, w)?),
        Command::Timechange => serde_json::to_string_pretty(&lab::cmd_timechange(&cfg, w)?),
        Command::Dichotomy => serde_json::to_string_pretty(&lab::cmd_dichotomy(&cfg, w)?),
    }?;
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
