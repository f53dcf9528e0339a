use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedgas::incentive::RewardPools;
use fedgas::scenario::{self, SimulateOptions};

#[derive(Parser)]
#[command(
    name = "fedgas",
    about = "Federated gas-usage forecasting simulator with contribution-aware rewards",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scenario's synthetic datasets as CSV files plus a manifest.
    GenData {
        /// Scenario config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the CSV files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario end to end and write the report bundle.
    Simulate {
        /// Scenario config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's output_dir, then out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Keep full payload bytes in the transcript, not just digests.
        #[arg(long)]
        full_transcript: bool,
    },
    /// Normalize and allocate rewards from precomputed scores (no training).
    Evaluate {
        /// CSV of `participant,quality,contribution` rows.
        #[arg(long)]
        scores: PathBuf,
        /// Total reward pool for data quality.
        #[arg(long)]
        r_data: f64,
        /// Total reward pool for model contribution.
        #[arg(long)]
        r_model: f64,
        /// Optional path for the evaluation report JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretty-print an existing report.json.
    Report {
        /// Path to a report.json written by `simulate`.
        #[arg(long)]
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> fedgas::Result<()> {
    match cli.command {
        Command::GenData { config, out } => {
            let manifest = scenario::cmd_gen_data(&config, &out)?;
            println!("wrote datasets and {}", manifest.display());
        }
        Command::Simulate {
            config,
            out,
            seed,
            full_transcript,
        } => {
            let options = SimulateOptions {
                out_dir: out,
                seed_override: seed,
                full_transcript,
            };
            let report = scenario::cmd_simulate(&config, &options)?;
            println!("wrote {}", report.display());
        }
        Command::Evaluate {
            scores,
            r_data,
            r_model,
            out,
        } => {
            let pools = RewardPools { r_data, r_model };
            let report = scenario::cmd_evaluate(&scores, &pools)?;
            for card in &report.scorecards {
                println!(
                    "{}: quality {:.4} -> share {:.4} -> reward {:.4}; contribution {:.4} -> share {:.4} -> reward {:.4}",
                    card.participant,
                    card.quality,
                    card.quality_norm,
                    card.r_quality,
                    card.contribution,
                    card.contribution_norm,
                    card.r_contribution,
                );
            }
            println!(
                "total paid: {:.4} (data) + {:.4} (model)",
                report.totals.paid_data, report.totals.paid_model
            );
            if let Some(path) = out {
                let mut text = serde_json::to_string_pretty(&report)?;
                text.push('\n');
                std::fs::write(&path, text)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Report { report } => {
            print!("{}", scenario::cmd_report(&report)?);
        }
    }
    Ok(())
}
