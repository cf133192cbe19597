//! Command-line harness: generate synthetic sessions, train the shape
//! estimator, evaluate sensor accuracy, run the closed-loop suites, and
//! assemble the report.

use clap::{Parser, Subcommand};
use foilctl_core::harness::{
    cmd_control, cmd_evaluate, cmd_generate, cmd_report, cmd_train, RunConfig,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "foilctl", version, about = "Simulated e-skin foil shape-control testbed")]
struct Cli {
    /// Configuration file (key = value with [section] headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts and manifests.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the root seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the training epoch budget from the config.
    #[arg(long, global = true)]
    epochs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a logging session and write the capacitance + marker logs.
    Generate,
    /// Align the logs, train the estimator, and save model + report.
    Train,
    /// Measure sensor accuracy on held-out logs (generated if not given).
    Evaluate,
    /// Run the step staircase and the waveform tracking grid.
    Control,
    /// Merge evaluate + control artifacts into a single report.
    Report,
}

fn run(cli: &Cli) -> foilctl_core::Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(epochs) = cli.epochs {
        config.train.epochs = epochs;
    }

    match cli.command {
        Command::Generate => {
            let out = cmd_generate(&config, &cli.out)?;
            println!(
                "wrote {} capacitance frames and {} marker rows under {}",
                out.frames,
                out.marker_rows,
                cli.out.display()
            );
        }
        Command::Train => {
            let out = cmd_train(&config, &cli.out)?;
            println!(
                "trained on {} pairs ({} dropped); {} epochs, best validation loss {:.3e} at epoch {}",
                out.pairs, out.dropped, out.epochs_run, out.best_val_loss, out.best_epoch
            );
            println!("model: {}", out.model_path.display());
        }
        Command::Evaluate => {
            let out = cmd_evaluate(&config, &cli.out)?;
            println!(
                "sensor error over {} samples: tip mean {:.3}% / max {:.3}% of foil length",
                out.samples, out.report.overall_tip.mean, out.report.overall_tip.max
            );
            println!("report: {}", out.json_path.display());
        }
        Command::Control => {
            let out = cmd_control(&config, &cli.out)?;
            println!(
                "ran {} closed-loop records; step rise mean {:.2} s, worst plateau error {:.3}%",
                out.record_paths.len(),
                out.summary.step.rise_mean_s,
                out.summary.step.plateau_max_percent
            );
            for cell in &out.summary.grid {
                println!(
                    "  {} p2p={}% T={}s: NRMSE {:.4}",
                    cell.waveform, cell.peak_to_peak_percent, cell.period_s, cell.nrmse_truth
                );
            }
            println!("summary: {}", out.summary_json.display());
        }
        Command::Report => {
            let out = cmd_report(&config, &cli.out)?;
            println!("report: {}", out.json_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
