//! `instfield` command-line pipelines.

mod commands;
mod config;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use report::Report;

/// Config errors exit with 2, pipeline errors with 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Pipeline(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Pipeline(m) => write!(f, "pipeline error: {m}"),
        }
    }
}

impl From<instfield_core::Error> for CliError {
    fn from(e: instfield_core::Error) -> Self {
        CliError::Pipeline(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "instfield", version, about = "Multi-view instance field pipelines")]
struct Cli {
    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set", global = true)]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic multi-view dataset.
    Synth,
    /// Train the instance field on a dataset.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Cluster a trained field into view-consistent masks.
    Cluster {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Temporal mIoU and success rate of masks against a dataset.
    TrackEval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Open-vocabulary segmentation scores of masks.
    OvsegEval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Depth and point-cloud scores of a predicted dataset.
    ReconEval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Propagate masks through the views of a dataset as video frames.
    CurateVideo {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Refine projected 3D annotations with matched proposals.
    CurateRgbd {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("IGGT_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("IGGT_LAB_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Pipeline(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.sets, cli.seed)?;
    commands::validate(&cfg)?;
    let out = cli.out.ok_or_else(|| CliError::Config("--out is required".into()))?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::Pipeline(format!("cannot create {}: {e}", out.display())))?;
    let report: Report = match &cli.command {
        Command::Synth => commands::synth(&cfg, &out)?,
        Command::Train { input } => commands::train_cmd(&cfg, existing(input)?, &out)?,
        Command::Cluster { input } => commands::cluster_cmd(&cfg, existing(input)?, &out)?,
        Command::TrackEval { input, gt } => commands::track_eval(existing(input)?, existing(gt)?)?,
        Command::OvsegEval { input, gt } => commands::ovseg_eval(&cfg, existing(input)?, existing(gt)?, &out)?,
        Command::ReconEval { input, gt } => commands::recon_eval(&cfg, existing(input)?, existing(gt)?)?,
        Command::CurateVideo { input } => commands::curate_video(&cfg, existing(input)?, &out)?,
        Command::CurateRgbd { input } => commands::curate_rgbd(&cfg, existing(input)?, &out)?,
    };
    report.write(&out, &cfg)
}

fn existing(p: &Path) -> Result<&Path, CliError> {
    if p.is_dir() {
        Ok(p)
    } else {
        Err(CliError::Pipeline(format!("input directory {} does not exist", p.display())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                CliError::Config(_) => 2,
                CliError::Pipeline(_) => 3,
            })
        }
    }
}
