//! The `ummu` command line: `train`, `eval`, `ablate` and `synth`.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Result;

pub use commands::{
    ablation_configs, cmd_ablate, cmd_eval, cmd_synth, cmd_train, load_splits, sidecar_path, test_report,
    train_model, AblationReport, AblationRow, EpochRecord, Splits, SynthSidecar, TrainOutcome, TrainingLog,
    ABLATION_REPORT, ABLATION_TABLE, CHECKPOINT, DISABLED_KEY, DISABLED_LABEL, EVAL_BUCKETS, EVAL_REPORT,
    TRAINING_LOG,
};
pub use config::{RunConfig, KEYS};

#[derive(Debug, Parser)]
#[command(name = "ummu", version, about = "Temporal link prediction with embedding-level augmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// `key = value` configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Repeatable `KEY=VALUE` override applied after the file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl CommonArgs {
    /// File, then overrides, then the dedicated flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the train split; write training_log.json and checkpoint.bin.
    Train(CommonArgs),
    /// Evaluate a checkpoint on the test split; write eval_report.json and eval_buckets.csv.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Train and evaluate every variant plus the disabled baseline.
    Ablate(CommonArgs),
    /// Write a synthetic stream as CSV with a JSON sidecar.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        /// Destination CSV (default: OUT/synth.csv).
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
}

/// Runs one parsed command and returns a short summary line.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Train(common) => {
            let cfg = common.resolve()?;
            let out = cmd_train(&cfg)?;
            let last = out.log.epochs.last().map(|e| e.train_loss);
            Ok(format!(
                "trained {} epochs (final loss {}), wrote {}",
                out.log.epochs.len(),
                last.map_or("n/a".to_string(), |l| format!("{l:.5}")),
                cfg.out.display()
            ))
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.resolve()?;
            let r = cmd_eval(&cfg, &checkpoint)?;
            Ok(format!("test AP {:.4}, MRR {:.4} over {} events", r.ap, r.mrr, r.n_events))
        }
        Command::Ablate(common) => {
            let cfg = common.resolve()?;
            let r = cmd_ablate(&cfg)?;
            let mut s = String::new();
            for row in &r.rows {
                s.push_str(&format!("{:<8} AP {:.4}  MRR {:.4}\n", row.label, row.report.ap, row.report.mrr));
            }
            s.push_str(&format!("wrote {}", cfg.out.join(ABLATION_TABLE).display()));
            Ok(s)
        }
        Command::Synth { common, csv } => {
            let cfg = common.resolve()?;
            let path = csv.unwrap_or_else(|| cfg.out.join("synth.csv"));
            let stream = cmd_synth(&cfg.synth_spec(), &path)?;
            Ok(format!("wrote {} events to {}", stream.len(), path.display()))
        }
    }
}
