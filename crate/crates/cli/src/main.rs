use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use baas_sim::PolicyId;
use baas_sim_cli::{
    compare_command, load_config, parse_policy_list, run_command, CliError, SimConfig,
};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

/// Discrete-event simulator for cloud task scheduling with blockchain lease
/// allocation.
#[derive(Parser, Debug)]
#[command(name = "baas-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one policy; writes tasks.csv and comparison.csv
    Run {
        /// JSON config file
        #[arg(long)]
        config: PathBuf,
        /// fcfs | sjf | priority | hybrid (defaults to the config's `policy`)
        #[arg(long)]
        policy: Option<String>,
        /// Override the workload generator seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory
        #[arg(long, env = "BAAS_SIM_OUT")]
        out: Option<PathBuf>,
    },
    /// Simulate several policies on one workload; writes comparison.csv and comparison.svg
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated policy names
        #[arg(long, default_value = "fcfs,sjf,priority,hybrid")]
        policies: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "BAAS_SIM_OUT")]
        out: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>, config: &SimConfig) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.out_dir.clone()).ok_or_else(|| {
        CliError::Usage("no output directory: pass --out or set BAAS_SIM_OUT".into())
    })
}

/// Returns the summary text to print on success.
fn execute(cmd: Command) -> Result<String, CliError> {
    let mut text = String::new();
    match cmd {
        Command::Run {
            config,
            policy,
            seed,
            out,
        } => {
            let config = load_config(&config)?;
            let policy = match policy {
                Some(name) => name
                    .parse::<PolicyId>()
                    .map_err(|e| CliError::Usage(e.to_string()))?,
                None => config
                    .policy
                    .ok_or_else(|| CliError::Usage("no policy: pass --policy".into()))?,
            };
            let out = out_dir(out, &config)?;
            let summary = run_command(&config, policy, seed, &out)?;
            let r = &summary.run.report;
            let _ = writeln!(
                text,
                "{}: {} tasks, avg wait {} ms, max wait {} ms, makespan {} ms, load cov {}, starved {}",
                r.policy,
                r.n_tasks,
                r.avg_wait_fixed3(),
                r.max_wait_ms,
                r.makespan_ms,
                r.load_cov_fixed3(),
                r.starved_count
            );
            for f in &summary.files {
                let _ = writeln!(text, "wrote {}", f.display());
            }
        }
        Command::Compare {
            config,
            policies,
            seed,
            out,
        } => {
            let policies = parse_policy_list(&policies)?;
            let config = load_config(&config)?;
            let out = out_dir(out, &config)?;
            let summary = compare_command(&config, &policies, seed, &out)?;
            let _ = writeln!(
                text,
                "{:<10} {:>8} {:>16} {:>12} {:>14} {:>9} {:>8}",
                "policy",
                "tasks",
                "avg_wait_ms",
                "max_wait_ms",
                "makespan_ms",
                "load_cov",
                "starved"
            );
            for r in &summary.reports {
                let _ = writeln!(
                    text,
                    "{:<10} {:>8} {:>16} {:>12} {:>14} {:>9} {:>8}",
                    r.policy.name(),
                    r.n_tasks,
                    r.avg_wait_fixed3(),
                    r.max_wait_ms,
                    r.makespan_ms,
                    r.load_cov_fixed3(),
                    r.starved_count
                );
            }
            for f in &summary.files {
                let _ = writeln!(text, "wrote {}", f.display());
            }
        }
    }
    Ok(text)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli.command) {
        Ok(text) => {
            // a closed stdout (e.g. piped into `head`) is not an error
            let _ = std::io::stdout().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
