use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mudec_cli::config::ModelKind;
use mudec_cli::error::EXIT_OK;
use mudec_cli::{pipeline, plot, PipelineConfig, Precision, Result};

#[derive(Debug, Parser)]
#[command(name = "mudec", version, about = "HD-sEMG motor-unit decomposition and force decoding")]
struct Cli {
    /// TOML config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-trial stages.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory of the stage.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate EMG, force and ground-truth spikes for every trial.
    Synth,
    /// Fit the decomposition on the training trials and extract neural drives.
    Decompose {
        #[arg(long)]
        data: PathBuf,
    },
    /// Align drives with conditioned force and fit standardization.
    Dataset {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        drives: PathBuf,
    },
    /// Train a decoder and evaluate it on the test trials.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Overrides `model.kind` from the config.
        #[arg(long)]
        model: Option<ModelKind>,
    },
    /// Evaluate a checkpoint on selected trials (test split by default).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',')]
        trials: Option<Vec<String>>,
    },
    /// Render predicted vs. measured force from an eval directory.
    Plot {
        #[arg(long)]
        eval: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Synth => {
            pipeline::synth(&cfg, out, cli.jobs)?;
        }
        Command::Decompose { data } => {
            let report = pipeline::decompose(&cfg, data, out, cli.jobs)?;
            print!("{}", report.render());
        }
        Command::Dataset { data, drives } => {
            let ds = pipeline::dataset(&cfg, data, drives, out)?;
            println!("{} trials, features {:?}", ds.trials.len(), ds.feature_labels);
        }
        Command::Train { dataset, model } => {
            if let Some(kind) = model {
                cfg.model.kind = *kind;
            }
            let report = pipeline::train(&cfg, dataset, out, Precision::from_env()?)?;
            println!(
                "{}: best epoch {} of {}, test RMSE / r {}",
                report.model,
                report.fit.best_epoch,
                report.fit.epochs.len(),
                report.test.summary()
            );
        }
        Command::Eval { checkpoint, dataset, trials } => {
            let report = pipeline::eval(checkpoint, dataset, trials.as_deref(), out, cfg.train.batch_size)?;
            print!("{}", pipeline::render_metrics(&report));
        }
        Command::Plot { eval } => {
            for path in plot::plot(eval, out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
