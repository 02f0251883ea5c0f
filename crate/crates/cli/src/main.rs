//! `expreg` — exponent regions and scheme simulation for distributed
//! hypothesis testing against independence.

mod commands;
mod config;
mod csvio;

use clap::{Parser, Subcommand};
use commands::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "expreg",
    about = "Type-II error-exponent regions for one sensor broadcasting to two decision centers",
    version
)]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (stdout when omitted). `simulate` also writes
    /// `<out>.summary.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config log base (bits|nats|auto).
    #[arg(long, global = true)]
    log_base: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Best single-channel exponent at one or more common-link rates.
    Eta {
        /// Decision center (1 or 2).
        #[arg(long)]
        receiver: usize,
        /// Rate budget; repeat for a grid.
        #[arg(long = "rate", required = true)]
        rates: Vec<f64>,
    },
    /// Pareto frontier of an exponents region.
    Region {
        /// maxrate | expected-common | no-rate-sharing | expected-full
        #[arg(long)]
        which: String,
    },
    /// Monte Carlo simulation of the coding scheme (config `sim` section, or
    /// `sim_family` for an exponent fit over blocklengths).
    Simulate,
    /// Oracle-vs-optimizer and region-consistency checks; failures are report
    /// content, not process errors.
    Validate,
}

fn write_output(path: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| {
            CliError::Input(format!("cannot write {}: {e}", p.display()))
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Ok(threads) = std::env::var("EXPREG_WORKERS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Input("--config <path> is required".into()))?;
    let mut loaded = config::InstanceConfig::load(&config_path.display().to_string())?;
    if let Some(seed) = cli.seed {
        loaded.settings.seed = seed;
        loaded.raw.seed = seed;
    }
    if let Some(base) = &cli.log_base {
        loaded.log_base = match base.as_str() {
            "bits" => Some(expreg_core::LogBase::Bits),
            "nats" => Some(expreg_core::LogBase::Nats),
            "auto" => None,
            other => return Err(CliError::Input(format!("log base '{other}'"))),
        };
    }
    if loaded.note.renormalized {
        eprintln!(
            "note: pmf total was {:.12}; renormalized",
            loaded.note.original_sum
        );
    }

    match &cli.command {
        Command::Eta { receiver, rates } => {
            let doc = commands::cmd_eta(&loaded, *receiver, rates.clone())?;
            write_output(&cli.out, &doc.render())
        }
        Command::Region { which } => {
            let doc = commands::cmd_region(&loaded, which)?;
            write_output(&cli.out, &doc.render())
        }
        Command::Simulate => {
            let (doc, summary) = commands::cmd_simulate(&loaded)?;
            write_output(&cli.out, &doc.render())?;
            let summary_text = serde_json::to_string_pretty(&summary)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            match &cli.out {
                Some(p) => {
                    let mut sp = p.clone();
                    sp.set_extension("summary.json");
                    std::fs::write(&sp, summary_text).map_err(|e| {
                        CliError::Input(format!("cannot write {}: {e}", sp.display()))
                    })
                }
                None => {
                    println!("{summary_text}");
                    Ok(())
                }
            }
        }
        Command::Validate => {
            let report = commands::cmd_validate(&loaded)?;
            write_output(&cli.out, &report)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
