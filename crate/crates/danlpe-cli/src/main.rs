//! Experiment driver. Every subcommand takes a TOML config and runs
//! batch work against it; there is no interactive mode.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use danlpe::config::load_config;
use danlpe::eval::Method;
use danlpe::runner::{
    cmd_estimate, cmd_featurize, cmd_generate, cmd_report, cmd_train, RunContext,
};
use danlpe::Error;

#[derive(Parser)]
#[command(name = "danlpe", version, about = "Label-shift-aware domain adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Write artifacts here instead of the config's out_dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Run only this seed. Artifacts embed the modified config's hash,
    /// so report the same way.
    #[arg(long = "seed", value_name = "N")]
    seed_override: Option<u64>,

    /// Run only these methods (comma separated, e.g. "dnn,dan_lpe").
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    method: Option<Vec<Method>>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic task out as dataset files.
    Generate(Common),
    /// Featurize raw review corpora into dataset files.
    Featurize(Common),
    /// Train every configured method across every seed.
    Train(Common),
    /// Estimate target proportions from a saved network checkpoint.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file holding the classifier to estimate with.
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Aggregate this config's run artifacts into report tables.
    Report(Common),
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

fn config_failure(error: Error) -> Failure {
    Failure { code: 2, error }
}

fn runtime_failure(error: Error) -> Failure {
    Failure { code: 1, error }
}

/// Loads the config, applies the CLI overrides, and re-validates, so an
/// override can never smuggle in a state the config file could not.
fn load_context(common: &Common) -> Result<RunContext, Failure> {
    let mut config = load_config(&common.config).map_err(config_failure)?;
    if let Some(seed) = common.seed_override {
        config.experiment.seeds = vec![seed];
    }
    if let Some(methods) = &common.method {
        config.experiment.methods = methods.clone();
    }
    config.validate().map_err(config_failure)?;
    Ok(match &common.out {
        Some(dir) => RunContext::with_out_dir(config, dir.clone()),
        None => RunContext::new(config),
    })
}

fn fmt_proportions(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", cells.join(", "))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(common) => {
            let ctx = load_context(&common)?;
            let paths = cmd_generate(&ctx).map_err(runtime_failure)?;
            for path in paths {
                println!("wrote {}", path.display());
            }
        }
        Command::Featurize(common) => {
            let ctx = load_context(&common)?;
            let paths = cmd_featurize(&ctx).map_err(runtime_failure)?;
            for path in paths {
                println!("wrote {}", path.display());
            }
        }
        Command::Train(common) => {
            let ctx = load_context(&common)?;
            let outcomes = cmd_train(&ctx).map_err(runtime_failure)?;
            for outcome in outcomes {
                let mut line =
                    format!("{} seed {}", outcome.method, outcome.seed);
                if let Some(acc) = outcome.target_accuracy {
                    line.push_str(&format!(" accuracy {acc:.4}"));
                }
                if let Some(f1) = outcome.target_macro_f1 {
                    line.push_str(&format!(" macro-f1 {f1:.4}"));
                }
                if let Some(estimate) = &outcome.estimate {
                    line.push_str(&format!(" estimate {}", fmt_proportions(estimate.as_slice())));
                }
                println!("{line}");
            }
            println!("artifacts in {}", ctx.out_dir.display());
        }
        Command::Estimate { common, checkpoint } => {
            let ctx = load_context(&common)?;
            let estimate = cmd_estimate(&ctx, &checkpoint).map_err(runtime_failure)?;
            println!("source prior {}", fmt_proportions(estimate.alpha_hat.as_slice()));
            println!(
                "estimate {} (loss {:.6e}, {} steps)",
                fmt_proportions(estimate.gamma_lpe.as_slice()),
                estimate.estimation_loss,
                estimate.lpe_steps
            );
            match &estimate.bbse {
                Some(bbse) => println!(
                    "confusion inversion {}{}",
                    fmt_proportions(bbse.beta_hat.as_slice()),
                    if bbse.clipped { " (clipped)" } else { "" }
                ),
                None => println!("confusion inversion skipped: system ill-conditioned"),
            }
        }
        Command::Report(common) => {
            let ctx = load_context(&common)?;
            let paths = cmd_report(&ctx).map_err(runtime_failure)?;
            let table = std::fs::read_to_string(&paths[1])
                .map_err(|e| runtime_failure(Error::Io(e)))?;
            print!("{table}");
            for path in paths {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
