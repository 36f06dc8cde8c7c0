use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eulertop_cli::config::SweepConfig;
use eulertop_cli::{commands, load_with, parse_values, CliError, Overrides};

#[derive(Parser)]
#[command(
    name = "eulertop",
    version,
    about = "Integrable deformations of the Euler top"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seed for the sampled checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent sweep runs.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured system and write the trajectory and report.
    Simulate(Common),
    /// Check the field identities and the drift of the configured run.
    Verify(Common),
    /// Print the synthesized vector field.
    Derive(Common),
    /// Simulate over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary (defaults to the config's `sweep.parameter`).
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values (defaults to the config's `sweep.values`).
        #[arg(long, allow_hyphen_values = true)]
        values: Option<String>,
    },
}

fn run(cmd: Command) -> Result<bool, CliError> {
    let common = match &cmd {
        Command::Simulate(c) | Command::Verify(c) | Command::Derive(c) => c,
        Command::Sweep { common, .. } => common,
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        workers: common.workers,
    };
    let loaded = load_with(&common.config, &overrides)?;
    match cmd {
        Command::Simulate(_) => {
            let out = commands::simulate(&loaded)?;
            let r = &out.report;
            println!("{}: {} samples to t = {}", r.system, r.samples, r.t_final);
            println!(
                "max drift {:.3e} ({:?})",
                r.drift.worst_drift(),
                r.termination
            );
            if let Some(d) = &r.detail {
                println!("stopped: {d}");
            }
            println!("wrote {}", out.dir.display());
            Ok(out.completed())
        }
        Command::Verify(_) => {
            let report = commands::verify(&loaded)?;
            print!("{}", report.table());
            Ok(report.passed)
        }
        Command::Derive(_) => {
            print!("{}", commands::derive(&loaded)?.render());
            Ok(true)
        }
        Command::Sweep { param, values, .. } => {
            let base = loaded.config.sweep.clone();
            let parameter = param
                .or_else(|| base.as_ref().map(|s| s.parameter.clone()))
                .ok_or_else(|| CliError::Run("sweep needs --param or a [sweep] section".into()))?;
            let values = match values {
                Some(text) => parse_values(&text).map_err(CliError::Run)?,
                None => base.as_ref().map(|s| s.values.clone()).unwrap_or_default(),
            };
            let workers = common_workers(&overrides, base.as_ref());
            let outcome = commands::sweep(
                &loaded,
                &SweepConfig {
                    parameter,
                    values,
                    workers,
                },
            )?;
            println!(
                "{:>12} {:>22} {:>12} {:>12}",
                outcome.parameter, "termination", "max_drift", "deviation"
            );
            for r in &outcome.rows {
                let flag = if r.flagged { "  guarded" } else { "" };
                println!(
                    "{:>12} {:>22?} {:>12.3e} {:>12.3e}{flag}",
                    r.value, r.termination, r.max_drift, r.deviation
                );
            }
            if !outcome.monotone {
                println!("deviation is not monotone in |{}|", outcome.parameter);
            }
            println!("wrote {}", outcome.summary.display());
            Ok(outcome.passed())
        }
    }
}

fn common_workers(overrides: &Overrides, base: Option<&SweepConfig>) -> usize {
    overrides.workers.or(base.map(|s| s.workers)).unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
