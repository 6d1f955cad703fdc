use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use gav_core::{GenConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Truncation for scoring; the checkpoint's `max_len` when unset.
    pub max_len: Option<usize>,
    pub sweep_lengths: Vec<usize>,
    pub shuffle_trials: usize,
    pub search_threshold: f32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            max_len: None,
            sweep_lengths: vec![1, 3, 5, 10, 20, 30, 40, 60],
            shuffle_trials: 5,
            search_threshold: 0.8,
        }
    }
}

/// Everything a command may need; loaded from JSON, then overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// `datagen.images` is the training split size.
    pub datagen: GenConfig,
    pub test_images: usize,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            datagen: GenConfig::default(),
            test_images: 400,
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.datagen.seed = seed;
        self.train.seed = seed;
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"train": {"steps": 7}, "test_images": 3}"#).unwrap();
        let c = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(c.train.steps, 7);
        assert_eq!(c.test_images, 3);
        assert_eq!(c.train.batch_images, 8);
        assert_eq!(c.datagen, GenConfig::default());
    }

    #[test]
    fn nested_partial_model_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"train": {"model": {"kind": "no_attention", "decoder": {"hidden": 64}}}}"#).unwrap();
        let c = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(c.train.model.kind, gav_core::ModelKind::NoAttention);
        assert_eq!(c.train.model.decoder.hidden, 64);
        assert_eq!(c.train.model.decoder.embed_dim, 32);
        assert_eq!(c.train.model.max_len, 40);
    }

    #[test]
    fn seed_reaches_every_module() {
        let mut c = RunConfig::default();
        c.set_seed(9);
        assert_eq!((c.seed, c.datagen.seed, c.train.seed), (9, 9, 9));
    }
}
