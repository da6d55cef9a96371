//! Experiment harness around `ossl-core`: configuration, run directories
//! and the `ossl` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ossl", version, about = "Open-set self-learning experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Explicit flags override the config
/// file, which overrides the defaults.
#[derive(Debug, Args)]
pub struct Common {
    /// TOML experiment configuration.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override any configuration field, e.g. `--set adapt.mu=0.6`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Root directory for run directories.
    #[arg(long, env = "OSSL_OUTPUT_ROOT", global = true)]
    pub output_root: Option<PathBuf>,
    /// Exact run directory (instead of one derived under the output root).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for data generation, source training and adaptation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated seed list for sweep and ablate.
    #[arg(long, value_delimiter = ',', global = true)]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub epoch_max: Option<usize>,
    #[arg(long, global = true)]
    pub lr_extractor: Option<f64>,
    #[arg(long, global = true)]
    pub frozen_extractor: bool,
    #[arg(long, global = true)]
    pub no_margin: bool,
    #[arg(long, global = true)]
    pub no_injection: bool,
    /// max-logit, max-softmax or detector.
    #[arg(long, global = true)]
    pub score_kind: Option<String>,
    /// More log output (repeatable).
    #[arg(long, short, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test dataset files.
    GenData,
    /// Train the closed-set starting point.
    TrainSource,
    /// Adapt a starting point on the test set.
    Adapt {
        /// Starting-point checkpoint; trained from the config when absent.
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (adapted bundle or starting point).
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Adapt over a mu × gamma grid for every seed.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        mu_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        gamma_grid: Option<Vec<f64>>,
    },
    /// Toggle injection, margin loss and extractor freezing.
    Ablate {
        #[arg(long, value_delimiter = ',')]
        injection: Option<Vec<usize>>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::GenData => "gen-data",
            Self::TrainSource => "train-source",
            Self::Adapt { .. } => "adapt",
            Self::Evaluate { .. } => "evaluate",
            Self::Sweep { .. } => "sweep",
            Self::Ablate { .. } => "ablate",
        }
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    format!("[{}]", v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))
}

fn quoted(p: &std::path::Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

impl Cli {
    /// Flags translated to `key=value` overrides, applied after `--set`.
    pub fn overrides(&self) -> Vec<String> {
        let c = &self.common;
        let mut o = c.overrides.clone();
        if let Some(root) = &c.output_root {
            o.push(format!("output_root={}", quoted(root)));
        }
        if let Some(s) = c.seed {
            o.extend([format!("dataset.seed={s}"), format!("source.seed={s}"), format!("adapt.seed={s}")]);
        }
        if let Some(s) = &c.seeds {
            o.push(format!("seeds={}", list(s)));
        }
        if let Some(p) = &c.train {
            o.push(format!("data.train={}", quoted(p)));
        }
        if let Some(p) = &c.test {
            o.push(format!("data.test={}", quoted(p)));
        }
        let f64s = [("adapt.mu", c.mu), ("adapt.gamma", c.gamma), ("adapt.lr_extractor", c.lr_extractor)];
        for (key, v) in f64s {
            if let Some(v) = v {
                o.push(format!("{key}={}", toml::Value::Float(v)));
            }
        }
        if let Some(e) = c.epoch_max {
            o.push(format!("adapt.epoch_max={e}"));
        }
        if c.frozen_extractor {
            o.push("adapt.frozen_extractor=true".into());
        }
        if c.no_margin {
            o.push("adapt.enable_margin=false".into());
        }
        if c.no_injection {
            o.push("adapt.enable_injection=false".into());
        }
        if let Some(k) = &c.score_kind {
            o.push(format!("eval.score_kind={}", toml::Value::String(k.clone())));
        }
        match &self.command {
            Command::Sweep { mu_grid, gamma_grid } => {
                if let Some(g) = mu_grid {
                    o.push(format!("sweep.mu={}", list(g)));
                }
                if let Some(g) = gamma_grid {
                    o.push(format!("sweep.gamma={}", list(g)));
                }
            }
            Command::Ablate { injection: Some(k) } => o.push(format!("ablate.injection={}", list(k))),
            _ => {}
        }
        o
    }

    pub fn config(&self) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::load(self.common.config.as_deref(), &self.overrides())
    }

    pub fn run(&self) -> Result<PathBuf, CliError> {
        let config = self.config()?;
        let out = self.common.out.as_deref();
        match &self.command {
            Command::GenData => commands::gen_data(&config, out),
            Command::TrainSource => commands::train_source(&config, out),
            Command::Adapt { start } => commands::adapt(&config, out, start.as_deref()),
            Command::Evaluate { checkpoint } => commands::evaluate(&config, out, checkpoint),
            Command::Sweep { .. } => commands::sweep(&config, out),
            Command::Ablate { .. } => commands::ablate(&config, out),
        }
    }
}
