//! Command-line front end: runs scenarios, compares strategies, validates
//! configs, and generates synthetic spot price traces.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nimbus_core::runner::{self, RunOptions, RunnerError};
use nimbus_core::scenario::load_scenario;
use nimbus_core::simkernel::RngFactory;
use nimbus_core::traces;

#[derive(Parser)]
#[command(name = "nimbus", about = "Deterministic cloud storage/compute cost simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report files.
    Run {
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for summary.txt and the CSV outputs.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Override the virtual-time guard.
        #[arg(long)]
        max_virtual_days: Option<u64>,
    },
    /// Run several scenarios and print the strategy comparison table
    /// (the first scenario is the savings baseline).
    Compare {
        #[arg(required = true, num_args = 2..)]
        scenarios: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        max_virtual_days: Option<u64>,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
    /// Generate a synthetic spot price trace CSV.
    GenTraces {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = TraceKind::RandomWalk)]
        kind: TraceKind,
        #[arg(long, default_value = "m4.xlarge")]
        instance_type: String,
        /// Base price in $/hour (per-region multipliers apply on top).
        #[arg(long, default_value_t = 0.05)]
        base_price: f64,
        /// Spike price for the adversarial kind.
        #[arg(long, default_value_t = 0.30)]
        spike_price: f64,
        /// Spike start offsets in seconds (adversarial kind).
        #[arg(long, value_delimiter = ',', default_values_t = [7200u64, 23400])]
        spike_at: Vec<u64>,
        /// Spike duration in seconds.
        #[arg(long, default_value_t = 300)]
        spike_secs: u64,
        /// Trace length in hours (random-walk kind).
        #[arg(long, default_value_t = 720)]
        hours: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceKind {
    Flat,
    RandomWalk,
    Adversarial,
}

fn fail(err: &RunnerError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, seed, out_dir, max_virtual_days } => {
            let opts = RunOptions {
                seed,
                out_dir: Some(out_dir.clone()),
                max_virtual_days,
                strict: false,
            };
            match runner::run(&scenario, &opts) {
                Ok(report) => {
                    print!("{}", nimbus_core::report::summary(&report));
                    println!("outputs written to {}", out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Compare { scenarios, seed, out_dir, max_virtual_days } => {
            let opts = RunOptions { seed, out_dir, max_virtual_days, strict: false };
            match runner::compare(&scenarios, &opts) {
                Ok((table, _)) => {
                    print!("{table}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(s) => {
                println!("{}: ok ({} experiment, seed {})", s.name, s.kind.label(), s.seed);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::GenTraces {
            out,
            kind,
            instance_type,
            base_price,
            spike_price,
            spike_at,
            spike_secs,
            hours,
            seed,
        } => {
            let regions = traces::default_regions();
            let rows = match kind {
                TraceKind::Flat => traces::generate_flat(&regions, &instance_type, base_price),
                TraceKind::RandomWalk => traces::generate_random_walk(
                    &regions,
                    &instance_type,
                    base_price,
                    hours,
                    &RngFactory::new(seed),
                ),
                TraceKind::Adversarial => traces::generate_adversarial(
                    &regions,
                    &instance_type,
                    base_price,
                    spike_price,
                    &spike_at,
                    spike_secs,
                ),
            };
            let text = traces::write_trace_csv(&rows);
            if let Err(e) = std::fs::write(&out, text) {
                eprintln!("error: cannot write {}: {e}", out.display());
                return ExitCode::from(2);
            }
            println!("wrote {} rows to {}", rows.len(), out.display());
            ExitCode::SUCCESS
        }
    }
}
