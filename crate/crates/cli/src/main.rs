//! `morphflow` command-line front end.
//!
//! Every subcommand writes its artifacts, prints a JSON run report on stdout
//! and exits with 0 on success, 2 on invalid input and 1 on internal errors.

mod args;
mod commands;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use args::{Cli, Command, ConfigFile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] morphflow::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_owned(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            _ => 1,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cli.threads.or(config.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }

    let start = Instant::now();
    let name = cli.command.name();
    let (mut report, path) = match cli.command {
        Command::Decompose(a) => commands::decompose(config.apply(name, a)?)?,
        Command::Flow(a) => commands::flow(config.apply(name, a)?)?,
        Command::Metrics(a) => commands::metrics(config.apply(name, a)?)?,
        Command::Strain(a) => commands::strain(config.apply(name, a)?)?,
        Command::Scanline(a) => commands::scanline(config.apply(name, a)?)?,
        Command::Synth(a) => commands::synth(config.apply(name, a)?)?,
    };
    report.seconds = start.elapsed().as_secs_f64();

    let json = report.to_json();
    if let Some(path) = path {
        std::fs::write(&path, &json).map_err(|e| CliError::io(&path, e))?;
    }
    print!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
