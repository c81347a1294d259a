mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latentvad::scoring::Metric;
use toml::{Table, Value};

use config::{set_path, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] latentvad::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Runtime(latentvad::Error::Config(_)) => 2,
            _ => 3,
        }
    }

    pub fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.to_string(),
            source,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "latentvad", version, about = "Video anomaly detection by latent-code prediction")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset: ucsd_ped1, ucsd_ped2, avenue, shanghaitech, moving_mnist
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output (run) directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long, global = true, value_parser = parse_metric)]
    metric: Option<Metric>,
    /// Normalization window in frames (0 = whole video)
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Write localized error regions (loads the decoder)
    #[arg(long, global = true)]
    localize: bool,
    /// Write PNG plots
    #[arg(long, global = true)]
    plots: bool,
    #[arg(long, global = true)]
    train_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    test_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Temporal subsampling factor
    #[arg(long, global = true)]
    stride: Option<usize>,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: latentvad::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on the training split
    Train,
    /// Score test videos (or stream one video) with a trained checkpoint
    Score {
        /// Score one video online; `-` reads a y4m stream from stdin
        #[arg(long)]
        stream: Option<PathBuf>,
    },
    /// Frame-level AUC of checkpoints, or of an existing scores CSV
    Eval {
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Robustness sweep over brightness, rain and blur
    Sweep,
    /// Train and test at several temporal subsampling factors
    Lowfps {
        #[arg(long, value_delimiter = ',')]
        d: Vec<usize>,
    },
    /// Streaming throughput, cached vs naive
    Bench {
        /// Video directory or y4m file
        #[arg(long)]
        video: PathBuf,
    },
    /// Write a synthetic moving-object dataset
    Synth,
    /// Moving-digit experiment: train on normal digits, evaluate anomaly axes
    MnistExp,
}

impl Common {
    fn overrides(&self) -> Table {
        let mut t = Table::new();
        let mut set = |k: &str, v: Value| set_path(&mut t, k, v);
        if let Some(s) = self.seed {
            set("seed", Value::Integer(s as i64));
            set("schedule.seed", Value::Integer(s as i64));
        }
        if let Some(o) = &self.out {
            set("out", Value::String(o.display().to_string()));
        }
        if let Some(m) = self.metric {
            set("scoring.metric", Value::String(m.as_str().into()));
        }
        if let Some(w) = self.window {
            set("scoring.window", Value::Integer(w as i64));
        }
        if let Some(s) = self.stride {
            set("scoring.stride", Value::Integer(s as i64));
        }
        if self.localize {
            set("scoring.localize", Value::Boolean(true));
        }
        if self.plots {
            set("plots", Value::Boolean(true));
        }
        for (key, p) in [("data.train", &self.train_dir), ("data.test", &self.test_dir), ("data.labels", &self.labels)] {
            if let Some(p) = p {
                set(key, Value::String(p.display().to_string()));
            }
        }
        if let Some(e) = self.epochs {
            set("schedule.total_epochs", Value::Integer(e as i64));
        }
        t
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = &cli.common;
    let mut overrides = common.overrides();
    if let Command::Lowfps { d } = &cli.command {
        if !d.is_empty() {
            set_path(&mut overrides, "lowfps.d", Value::Array(d.iter().map(|&v| Value::Integer(v as i64)).collect()));
        }
    }
    let cfg = RunConfig::resolve(common.preset.as_deref(), common.config.as_deref(), overrides)?;
    let ckpts = &common.checkpoint;
    match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Score { stream } => commands::score(&cfg, ckpts, stream.as_deref()),
        Command::Eval { scores } => commands::eval(&cfg, ckpts, scores.as_deref()),
        Command::Sweep => commands::sweep(&cfg, ckpts),
        Command::Lowfps { .. } => commands::lowfps(&cfg),
        Command::Bench { video } => commands::bench(&cfg, ckpts, &video),
        Command::Synth => commands::synth(&cfg),
        Command::MnistExp => commands::mnist(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
