//! `ubm`: solve, simulate and cross-check moments of unitary Brownian motion.

mod commands;
mod settings;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use settings::{Flags, Settings};

#[derive(Parser)]
#[command(
    name = "ubm",
    version,
    about = "Moment laboratory for unitary Brownian motion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the partitions of k
    Partitions {
        #[arg(value_parser = clap::value_parser!(u32).range(1..))]
        k: u32,
        #[command(flatten)]
        flags: Flags,
    },
    /// Exact moments from the free-limit or finite-d ODE systems (CSV)
    Moments(Flags),
    /// Monte Carlo estimates on U(nd) (JSON lines)
    Simulate(Flags),
    /// Monte Carlo bias against the free value over several d (CSV)
    Compare(Flags),
    /// Schürmann triple checks (JSON)
    Schurmann(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Partitions { .. } => "partitions",
            Command::Moments(_) => "moments",
            Command::Simulate(_) => "simulate",
            Command::Compare(_) => "compare",
            Command::Schurmann(_) => "schurmann",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Partitions { flags, .. }
            | Command::Moments(flags)
            | Command::Simulate(flags)
            | Command::Compare(flags)
            | Command::Schurmann(flags) => flags,
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let started = Instant::now();
    let flags = cli.command.flags().clone();
    let mut s = Settings::resolve(&flags)?;
    let output = match &cli.command {
        Command::Partitions { k, .. } => commands::partitions(*k)?,
        Command::Moments(_) => commands::moments(&mut s)?,
        Command::Simulate(_) => commands::simulate(&mut s)?,
        Command::Compare(_) => commands::compare(&mut s)?,
        Command::Schurmann(_) => commands::schurmann(&mut s)?,
    };
    let mut outputs = Vec::new();
    match &flags.out {
        Some(path) => {
            fs::write(path, &output.text)
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            outputs.push(path.display().to_string());
        }
        None => {
            std::io::stdout()
                .write_all(output.text.as_bytes())
                .map_err(|e| e.to_string())?;
        }
    }
    let mut config = s.to_map().clone();
    if let Command::Partitions { k, .. } = &cli.command {
        config.insert("k".into(), k.to_string());
    }
    let manifest = json!({
        "command": cli.command.name(),
        "config": config,
        "seed": s.raw("seed").and_then(|v| v.parse::<u64>().ok()),
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "outputs": outputs,
        "summary": output.summary,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
    match &flags.out {
        Some(path) => {
            let mut name = path.as_os_str().to_owned();
            name.push(".manifest.json");
            let mpath = Path::new(&name);
            fs::write(mpath, text + "\n")
                .map_err(|e| format!("cannot write {}: {e}", mpath.display()))?;
        }
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
