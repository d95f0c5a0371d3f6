use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use platform_sim::report::report_command;
use platform_sim::runner::{run_command, RunOptions};
use platform_sim::scenario::{parse_config, ScenarioGrid};
use platform_sim::{ConfigError, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "platsim", version, about = "Simulate adaptive platform trials with a shared control arm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a scenario file and write the outputs.
    Run {
        /// Scenario file (TOML).
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the base design's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the base design's replicate count.
        #[arg(long)]
        replicates: Option<u32>,
        /// Worker threads; defaults to one per core.
        #[arg(long)]
        threads: Option<usize>,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Write a per-replicate event log for every scenario.
        #[arg(long)]
        verbose_events: bool,
    },
    /// Join finished scenarios into one table.
    Report {
        /// Output directory of a run, or a single scenario directory.
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Parse a scenario file and list the scenarios it expands to.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

fn load(path: &PathBuf) -> Result<(Vec<u8>, ScenarioGrid), Error> {
    let bytes = fs::read(path)
        .map_err(|e| ConfigError::Parse(format!("cannot read {}: {e}", path.display())))?;
    let grid = parse_config(&bytes)?;
    Ok((bytes, grid))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            replicates,
            threads,
            force,
            verbose_events,
        } => {
            let (bytes, mut grid) = load(&config)?;
            if let Some(seed) = seed {
                grid.base.master_seed = seed;
            }
            if let Some(r) = replicates {
                grid.base.replicates = r;
            }
            grid.expand()?;
            let opts = RunOptions {
                threads,
                force,
                verbose_events,
                ..RunOptions::new(out)
            };
            let manifest = run_command(&grid, &bytes, &opts)?;
            for s in &manifest.scenarios {
                println!(
                    "{}  {}  {} replicates, {} failed, {:.1}s",
                    s.scenario_id, s.label, s.replicates, s.failed_replicates, s.wall_clock_seconds
                );
            }
            println!("wrote {}", opts.out_dir.display());
        }
        Command::Report { dir, format } => {
            let table = report_command(&dir)?;
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            match format {
                Format::Text => print!("{}", table.to_text()),
                Format::Csv => print!("{}", table.to_csv()?),
            }
        }
        Command::Validate { config } => {
            let (_, grid) = load(&config)?;
            let scenarios = grid.expand()?;
            println!("{}: {} scenario(s)", config.display(), scenarios.len());
            for s in &scenarios {
                println!("{}  {}", s.id, s.label());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
