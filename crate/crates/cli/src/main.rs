use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rangenav_cli::{cmd_audit, cmd_observe, cmd_simulate, cmd_sweep, CliError, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "rangenav",
    version,
    about = "Single-range-aided inertial navigation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noise seed, overriding `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the truth and sensor log.
    Simulate(Common),
    /// Run the Riccati observer and attitude filter and write estimates and a summary.
    Observe(Common),
    /// Evaluate the observability margins over sliding windows.
    Audit(Common),
    /// Repeat the observer run over `sweep_values` of `sweep_param`.
    Sweep(Common),
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(common) => print_files(&cmd_simulate(&load(&common)?)?),
        Command::Observe(common) => {
            let (files, summary) = cmd_observe(&load(&common)?)?;
            print_files(&files);
            print!("{}", summary.to_key_values());
            if let Some(secs) = summary.wall_time_s {
                println!("wall_time_s={secs:.3}");
            }
        }
        Command::Audit(common) => {
            let (files, report) = cmd_audit(&load(&common)?)?;
            print_files(&files);
            println!("windows={} all margins above threshold", report.rows.len());
        }
        Command::Sweep(common) => {
            let (files, rows) = cmd_sweep(&load(&common)?)?;
            print_files(&files);
            println!("{} grid points", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
