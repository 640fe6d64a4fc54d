mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Bad invocation or configuration; exits with status 1. Every other
/// failure (I/O, decoding, mismatched data) exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("FDIF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("FDIF_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Filter { inputs, output, run } => commands::filter(&inputs, &output, &run.resolve()?),
        Command::Detect { inputs, output, model, run } => {
            commands::detect(&inputs, &output, model.as_deref(), &run.resolve()?)
        }
        Command::Train { images, truth, output, run } => commands::train(&images, &truth, &output, &run.resolve()?),
        Command::Eval { pred, truth, output, run } => {
            commands::evaluate(&pred, &truth, output.as_deref(), &run.resolve()?)
        }
        Command::Stylize { input, output, run } => commands::stylize(&input, &output, &run.resolve()?),
        Command::Bench { size, repeats, run } => commands::bench(size, repeats, &run.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
