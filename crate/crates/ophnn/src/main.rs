//! Thin command-line front end over [`ophnn::cli`].

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ophnn::cli::{cmd_datagen, cmd_eval, cmd_simulate, cmd_train, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ophnn", version, about = "Port-Hamiltonian neural network system identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate dataset files from an experiment config.
    Datagen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on generated (or imported) dataset files.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding train.csv and val.csv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from an earlier checkpoint (keeps epoch numbering).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Simulate a checkpoint over dataset files and write report + traces.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// One or more dataset CSV files.
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Test-time integrator (defaults to the training scheme).
        #[arg(long)]
        scheme: Option<String>,
        /// Rate ratio n: the record is sampled at the training period / n.
        #[arg(long, default_value_t = 1)]
        ratio: usize,
    },
    /// Simulate the configured truth system only (no model).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> ophnn::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run() -> ophnn::Result<()> {
    match Cli::parse().command {
        Command::Datagen { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            cmd_datagen(&cfg, &out)?;
        }
        Command::Train {
            config,
            data,
            out,
            seed,
            resume,
        } => {
            let cfg = load_config(&config, seed)?;
            cmd_train(&cfg, &data, &out, resume.as_deref())?;
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            scheme,
            ratio,
        } => {
            cmd_eval(&checkpoint, &data, &out, scheme.as_deref(), ratio)?;
        }
        Command::Simulate { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            cmd_simulate(&cfg, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
