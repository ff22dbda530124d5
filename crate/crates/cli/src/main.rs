//! `cubeseg`: config-driven runner for the cube-house segmentation
//! benchmark. One TOML file describes a run; the subcommands take it from
//! dataset generation through training, evaluation, prediction panels and
//! cross-model comparison.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cubeseg_core::datapipe::DataError;
use cubeseg_core::models::ModelError;
use cubeseg_core::scenegen::{SceneError, Split};
use cubeseg_core::trainer::TrainError;

#[derive(Parser)]
#[command(name = "cubeseg", version, about = "cube-house segmentation benchmark")]
struct Cli {
    /// Root that every relative path (configs, datasets, outputs) resolves
    /// against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the dataset, expand it with augmentations and assign splits.
    Generate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Train the configured model; writes checkpoints, history and curves.
    Train {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on one split and write the metrics report.
    Evaluate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_split)]
        split: Split,
    },
    /// Merge metrics reports into one ranked comparison table.
    Compare {
        /// Metrics report JSON files, one per row.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Where the comparison table (json/txt/png) goes.
        #[arg(long, default_value = "reports")]
        out_dir: PathBuf,
    },
    /// Segment one image with a trained checkpoint and save a panel image.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Optional ground-truth mask for a three-panel composite.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(format!("{other:?} is not one of train, val, test")),
    }
}

/// Errors grouped into exit-code categories so scripts can tell a bad
/// config from a diverged run.
#[derive(Debug)]
pub enum CliError {
    /// 3: config file problems and invalid settings
    Config(String),
    /// 4: datasets and their files
    Data(String),
    /// 5: checkpoint loading and compatibility
    Checkpoint(String),
    /// 6: training failures (divergence)
    Train(String),
    /// 7: other I/O
    Io(String),
}

impl CliError {
    fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Train(_) => "train",
            CliError::Io(_) => "io",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Checkpoint(_) => 5,
            CliError::Train(_) => 6,
            CliError::Io(_) => 7,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Data(m)
            | CliError::Checkpoint(m)
            | CliError::Train(m)
            | CliError::Io(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error ({}): {}", self.category(), self.message())
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config { .. } => CliError::Config(e.to_string()),
            ModelError::Checkpoint { .. } | ModelError::BadCheckpoint { .. } => {
                CliError::Checkpoint(e.to_string())
            }
            ModelError::Shape { .. } => CliError::Data(e.to_string()),
            ModelError::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Train(e.to_string()),
            TrainError::Config { .. } | TrainError::Mismatch { .. } => {
                CliError::Config(e.to_string())
            }
            TrainError::Data(inner) => inner.into(),
            TrainError::Model(inner) => inner.into(),
            TrainError::Scene(inner) => inner.into(),
            TrainError::Metrics(_) => CliError::Data(e.to_string()),
            TrainError::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workdir = &cli.workdir;
    let result = match &cli.command {
        Command::Generate { config } => commands::generate(workdir, config),
        Command::Train { config } => commands::train(workdir, config),
        Command::Evaluate {
            config,
            checkpoint,
            split,
        } => commands::evaluate(workdir, config, checkpoint, *split),
        Command::Compare { reports, out_dir } => commands::compare(workdir, reports, out_dir),
        Command::Predict {
            checkpoint,
            image,
            truth,
            out,
        } => commands::predict(workdir, checkpoint, image, truth.as_deref(), out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
