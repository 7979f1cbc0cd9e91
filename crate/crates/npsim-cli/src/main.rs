//! `npsim` command line: run scenario experiments and policy comparisons.
//!
//! Exit codes: 0 success (and comparison predicate true when applicable),
//! 1 configuration error, 2 internal audit failure, 3 comparison predicate
//! false.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use npsim::runner::{compare, run_one, write_outputs, RunOutput};
use npsim::scenario::{load_scenario, Scenario};
use npsim::sim::SimOptions;
use npsim::time::SimTime;

#[derive(Parser)]
#[command(name = "npsim", version, about = "Network-processor pipeline simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy listed in the scenario; write per-run reports.
    Run(RunArgs),
    /// Run two or more policies on identical traffic and compare them.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file.
    scenario: PathBuf,
    /// Directory for report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the per-packet event log (large for long runs).
    #[arg(long)]
    event_log: bool,
    /// Override the scenario's snapshot interval, in milliseconds.
    #[arg(long, value_name = "MS")]
    snapshot_interval: Option<u64>,
}

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_AUDIT: u8 = 2;
const EXIT_PREDICATE: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::from(EXIT_OK);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let code = match cli.command {
        Command::Run(args) => execute(&args, false),
        Command::Compare(args) => execute(&args, true),
    };
    ExitCode::from(code)
}

fn load(args: &RunArgs) -> Result<Scenario, u8> {
    let text = std::fs::read_to_string(&args.scenario).map_err(|e| {
        eprintln!("npsim: cannot read {}: {e}", args.scenario.display());
        EXIT_CONFIG
    })?;
    let mut scenario = load_scenario(&text).map_err(|e| {
        eprintln!("npsim: {}: {e}", args.scenario.display());
        EXIT_CONFIG
    })?;
    if let Some(ms) = args.snapshot_interval {
        scenario.snapshot_interval = SimTime::from_millis(ms);
    }
    Ok(scenario)
}

fn execute(args: &RunArgs, comparing: bool) -> u8 {
    let scenario = match load(args) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if comparing && scenario.policies.len() < 2 {
        eprintln!("npsim: compare needs at least two `policy =` entries in the scenario");
        return EXIT_CONFIG;
    }

    let stem = args
        .scenario
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    let opts = SimOptions {
        event_log: args.event_log,
    };

    // Run policies one at a time so finished outputs survive a failed run.
    let mut outputs: Vec<RunOutput> = Vec::new();
    for &policy in &scenario.policies {
        match run_one(&scenario, policy, &opts) {
            Ok(out) => {
                println!(
                    "{}: generated {} transmitted {} dropped {}",
                    out.summary.policy,
                    out.summary.generated,
                    out.summary.transmitted,
                    out.summary.dropped
                );
                outputs.push(out);
            }
            Err(e) => {
                eprintln!("npsim: {} run failed: {e}", policy.as_str());
                if let Err(io) = write_outputs(&args.out, &stem, &outputs, None) {
                    eprintln!("npsim: writing partial outputs failed: {io}");
                }
                return EXIT_AUDIT;
            }
        }
    }

    let report = comparing.then(|| compare(&outputs));
    if let Err(e) = write_outputs(&args.out, &stem, &outputs, report.as_ref()) {
        eprintln!("npsim: writing outputs failed: {e}");
        return EXIT_CONFIG;
    }

    if let Some(report) = &report {
        for delta in &report.deltas {
            if delta.class == "ef" {
                if let Some(d) = delta.loss_rate_delta {
                    println!(
                        "ef loss delta {} vs {}: {d:+.6}",
                        delta.policy_a, delta.policy_b
                    );
                }
            }
        }
        match report.anaqm_beats_red_on_ef_loss {
            Some(true) => println!("predicate: anaqm EF loss < red EF loss: true"),
            Some(false) => {
                println!("predicate: anaqm EF loss < red EF loss: false");
                return EXIT_PREDICATE;
            }
            None => {}
        }
    }
    EXIT_OK
}
