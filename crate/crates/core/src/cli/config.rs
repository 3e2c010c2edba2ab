//! `key = value` run configuration.
//!
//! ```text
//! # comments run to end of line
//! data.path = wikipedia.csv
//! train.embed_dim = 16
//! ummu.variant = no_m
//! ```
//!
//! Without `data.path` the run uses a synthetic stream built from the
//! `synth.*` keys. Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::synthgen::SynthSpec;
use crate::tgraph::SplitSpec;
use crate::ummu::UmmuConfig;

pub const KEYS: &[&str] = &[
    "data.path",
    "synth.n_src",
    "synth.n_dst",
    "synth.n_events",
    "synth.feature_dim",
    "synth.n_regimes",
    "synth.drift_rate",
    "synth.noise_std",
    "synth.seed",
    "split.train",
    "split.val",
    "split.test",
    "train.embed_dim",
    "train.batch_size",
    "train.epochs",
    "train.learning_rate",
    "train.dropout",
    "train.time_dim",
    "ummu.enabled",
    "ummu.alpha",
    "ummu.apply_prob",
    "ummu.sigma_floor",
    "ummu.hook_layer",
    "ummu.variant",
    "eval.k_neg",
    "eval.n_buckets",
    "seed",
    "out",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub data_path: Option<PathBuf>,
    pub synth: SynthSpec,
    /// `None` means "same as the run seed".
    pub synth_seed: Option<u64>,
    pub split: [f64; 3],
    pub train: TrainConfig,
    pub ummu: UmmuConfig,
    pub k_neg: usize,
    pub n_buckets: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_path: None,
            synth: SynthSpec::default(),
            synth_seed: None,
            split: [0.1, 0.1, 0.8],
            train: TrainConfig::default(),
            ummu: UmmuConfig::default(),
            k_neg: 50,
            n_buckets: 10,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "data.path" => self.data_path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "synth.n_src" => self.synth.n_src = parse(key, v)?,
            "synth.n_dst" => self.synth.n_dst = parse(key, v)?,
            "synth.n_events" => self.synth.n_events = parse(key, v)?,
            "synth.feature_dim" => self.synth.feature_dim = parse(key, v)?,
            "synth.n_regimes" => self.synth.n_regimes = parse(key, v)?,
            "synth.drift_rate" => self.synth.drift_rate = parse(key, v)?,
            "synth.noise_std" => self.synth.noise_std = parse(key, v)?,
            "synth.seed" => self.synth_seed = Some(parse(key, v)?),
            "split.train" => self.split[0] = parse(key, v)?,
            "split.val" => self.split[1] = parse(key, v)?,
            "split.test" => self.split[2] = parse(key, v)?,
            "train.embed_dim" => self.train.embed_dim = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.dropout" => self.train.dropout = parse(key, v)?,
            "train.time_dim" => self.train.time_dim = parse(key, v)?,
            "ummu.enabled" => self.ummu.enabled = parse_bool(key, v)?,
            "ummu.alpha" => self.ummu.alpha = parse(key, v)?,
            "ummu.apply_prob" => self.ummu.apply_prob = parse(key, v)?,
            "ummu.sigma_floor" => self.ummu.sigma_floor = parse(key, v)?,
            "ummu.hook_layer" => self.ummu.hook_layer = parse(key, v)?,
            "ummu.variant" => self.ummu.variant = parse(key, v)?,
            "eval.k_neg" => self.k_neg = parse(key, v)?,
            "eval.n_buckets" => self.n_buckets = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => {
                return Err(Error::Config(format!(
                    "unknown key {other:?}; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(e))))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies a `KEY=VALUE` command-line override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
        self.set(k, v)
    }

    /// The synthetic spec with its seed resolved.
    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            seed: self.synth_seed.unwrap_or(self.seed),
            ..self.synth.clone()
        }
    }

    /// The training section with the run seed filled in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        SplitSpec::new(self.split[0], self.split[1], self.split[2]).map_err(|e| Error::Config(strip_prefix(e)))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.ummu.validate().map_err(|e| Error::Config(strip_prefix(e)))?;
        self.split_spec()?;
        if self.data_path.is_none() {
            self.synth_spec().validate().map_err(|e| Error::Config(strip_prefix(e)))?;
        }
        if self.k_neg == 0 {
            return Err(Error::Config("eval.k_neg must be at least 1".into()));
        }
        if self.n_buckets == 0 {
            return Err(Error::Config("eval.n_buckets must be at least 1".into()));
        }
        Ok(())
    }

    /// Fully resolved configuration, as embedded in every report.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "data.path": self.data_path.as_ref().map(|p| p.display().to_string()),
            "synth": if self.data_path.is_none() { serde_json::to_value(self.synth_spec()).ok() } else { None },
            "split": self.split,
            "train": self.train_config(),
            "ummu": self.ummu,
            "eval.k_neg": self.k_neg,
            "eval.n_buckets": self.n_buckets,
            "seed": self.seed,
            "version": crate::VERSION,
            "rng_algorithm": crate::numcore::RNG_ALGORITHM,
        })
    }
}

/// Drops the variant prefix ("configuration error: ") from an error message.
fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) | Error::Domain(m) | Error::Contract(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override() {
        let mut c = RunConfig::default();
        c.apply_text("# demo\ntrain.embed_dim = 16  # small\n\nummu.variant = no_m\nseed=4\n")
            .unwrap();
        assert_eq!(c.train.embed_dim, 16);
        assert_eq!(c.ummu.variant, crate::ummu::Variant::NoM);
        c.apply_override("train.embed_dim=32").unwrap();
        assert_eq!(c.train.embed_dim, 32);
        assert_eq!(c.synth_spec().seed, 4);
        assert_eq!(c.train_config().seed, 4);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_text("train.embed = 3"), Err(Error::Config(m)) if m.contains("line 1")));
        assert!(c.apply_text("just words").is_err());
        assert!(c.apply_override("train.epochs").is_err());
        assert!(c.apply_override("train.epochs=many").is_err());
        assert!(c.apply_override("ummu.enabled=maybe").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.split = [0.5, 0.5, 0.5];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.ummu.alpha = 0.0;
        assert!(c.validate().is_err());
    }
}
