//! Memory-based temporal link predictor hosting the augmentation hooks.
//!
//! Each event `(src, dst, t, e)` is encoded from the current memories of its
//! endpoints, its features and the time since the source was last touched.
//! The encoder output is projected into fresh source and destination
//! memories, and a small MLP decoder scores `(src, candidate)` pairs.

mod adam;
mod checkpoint;
mod encoder;
mod memory;
mod params;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use encoder::{
    bce_loss, bce_loss_on_tape, encode_batch, encode_pairs, pair_inputs, score_links, time_encode, BatchEncoding,
    LiveNoise, NoNoise, NoiseRecord, NoiseSource, PairEmbedding, ReplayNoise, PROB_CLAMP,
};
pub use memory::MemoryState;
pub use params::{ModelDims, ModelParams, ParamVars, PARAM_NAMES};
pub use train::{batch_loss, batch_step, score_candidates, train_epoch, StepOutput, TrainStreams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub seed: u64,
    pub time_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 100,
            batch_size: 200,
            epochs: 10,
            learning_rate: 1e-3,
            dropout: 0.1,
            seed: 0,
            time_dim: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::Config("train.embed_dim must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("train.dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "train.learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn dims(&self, feature_dim: usize) -> ModelDims {
        ModelDims {
            embed_dim: self.embed_dim,
            feature_dim,
            time_dim: self.time_dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_bounds() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { embed_dim: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { dropout: 1.0, ..Default::default() },
            TrainConfig { learning_rate: f64::NAN, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }
}
