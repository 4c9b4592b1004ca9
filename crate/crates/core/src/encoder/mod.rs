//! Pair-scoring backends.
//!
//! A [`PairScorer`] maps (premise, hypothesis) pairs to entailment
//! probabilities and can be fine-tuned on a [`PairDataset`]. Two backends
//! ship: a pretrained-transformer adapter driven through an external Python
//! process (the full-scale configuration) and a deterministic toy backend
//! used by every desk-scale test. Training is exclusive (one owner mutates
//! the scorer); scoring a trained scorer is read-only.

mod tokenizer;
mod toy;
mod transformer;

pub use tokenizer::{encode_pair, EncodedPair, Tokenizer, WhitespaceTokenizer, SEP_ID, START_ID};
pub use toy::{bag_embedding, bce_grad, bce_loss, pair_features, ToyPairScorer, TOY_BACKEND_ID};
pub use transformer::{TransformerPairScorer, PYTHON_ENV_VAR, TRANSFORMER_BACKEND_ID};

/// Source of the bundled Python driver, exposed so other subprocess-backed
/// components can share one on-disk copy.
pub fn transformer_driver_source() -> &'static str {
    transformer::DRIVER_SRC
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::pairs::PairDataset;

/// Fine-tuning hyperparameters. Loss is fixed to binary cross-entropy on a
/// single sigmoid logit; the optimizer is AdamW on both backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub max_len: usize,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_weight_decay() -> f64 {
    0.01
}

impl TrainConfig {
    /// The full-scale configuration: batch 64, lr 2e-5, 1000 warmup steps,
    /// epochs filled per dataset (3 for snips/atis, 4 elsewhere).
    pub fn full_scale_default(dataset_id: &str) -> Self {
        let epochs = crate::corpus::presets::preset(dataset_id)
            .map(|p| p.default_epochs)
            .unwrap_or(4);
        TrainConfig {
            epochs,
            batch_size: 64,
            learning_rate: 2e-5,
            warmup_steps: 1000,
            max_len: 64,
            weight_decay: 0.01,
            seed: 0,
        }
    }

    /// Hyperparameters suited to the toy backend's linear model.
    pub fn toy_default() -> Self {
        TrainConfig {
            epochs: 12,
            batch_size: 16,
            learning_rate: 0.2,
            warmup_steps: 20,
            max_len: 64,
            weight_decay: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        if self.max_len < 8 {
            return Err(Error::Validation("max_len must be at least 8".into()));
        }
        Ok(())
    }
}

/// Linear warmup to `base_lr` over `warmup` steps, then linear decay to zero
/// at `total` steps.
pub fn lr_at_step(step: usize, total: usize, warmup: usize, base_lr: f64) -> f64 {
    if warmup > 0 && step < warmup {
        return base_lr * step as f64 / warmup as f64;
    }
    if total <= warmup {
        return base_lr;
    }
    let remaining = total.saturating_sub(step) as f64;
    base_lr * (remaining / (total - warmup) as f64).clamp(0.0, 1.0)
}

/// What a fit run reports back.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_mean_loss: Vec<f64>,
    pub step_lrs: Vec<f64>,
    pub warnings: Vec<String>,
}

/// A fine-tunable entailment scorer. Scores always lie in [0, 1] and are
/// deterministic once training has completed.
pub trait PairScorer: Send {
    fn backend_id(&self) -> &'static str;
    fn is_trained(&self) -> bool;

    /// Fine-tune on entailment pairs. The train set must contain both
    /// target classes.
    fn fit(&mut self, train_set: &PairDataset, config: &TrainConfig) -> Result<TrainLog>;

    /// Entailment probability per (premise, hypothesis) pair,
    /// order-preserving and batch-invariant.
    fn score(&self, pairs: &[(String, String)]) -> Result<Vec<f64>>;

    /// Persist to a directory, embedding the manifest hash when the run is
    /// part of a tracked pipeline.
    fn save(&self, dir: &Path, manifest_hash: Option<&str>) -> Result<()>;
}

/// Common artifact metadata written next to backend parameter files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactMeta {
    pub backend_id: String,
    pub tokenizer: String,
    pub config: Option<TrainConfig>,
    pub content_hash: String,
    pub manifest_hash: Option<String>,
}

pub(crate) const META_FILE: &str = "metadata.json";

pub(crate) fn write_meta(dir: &Path, meta: &ArtifactMeta) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(META_FILE), serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}

pub(crate) fn read_meta(dir: &Path) -> Result<ArtifactMeta> {
    let path = dir.join(META_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::Load {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Hash of the backend parameter payload; checked on load.
pub(crate) fn content_hash_of(bytes: &[u8]) -> String {
    sha256_hex(bytes)
}

/// Load any saved scorer, dispatching on the artifact's backend id.
pub fn load_scorer(dir: &Path) -> Result<Box<dyn PairScorer>> {
    let meta = read_meta(dir)?;
    match meta.backend_id.as_str() {
        TOY_BACKEND_ID => Ok(Box::new(ToyPairScorer::load(dir)?)),
        TRANSFORMER_BACKEND_ID => Ok(Box::new(TransformerPairScorer::load(dir)?)),
        other => Err(Error::IncompatibleArtifact(format!(
            "unknown backend id '{other}' in {}",
            dir.display()
        ))),
    }
}

/// The manifest hash a saved artifact claims to descend from.
pub fn artifact_manifest_hash(dir: &Path) -> Result<Option<String>> {
    Ok(read_meta(dir)?.manifest_hash)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_warms_up_then_decays() {
        let total = 110;
        let warmup = 10;
        let lr = 2e-5;
        assert_eq!(lr_at_step(0, total, warmup, lr), 0.0);
        assert!((lr_at_step(5, total, warmup, lr) - lr * 0.5).abs() < 1e-18);
        assert_eq!(lr_at_step(warmup, total, warmup, lr), lr);
        // linear decay afterwards, extrapolating to zero at `total`
        let a = lr_at_step(60, total, warmup, lr);
        let b = lr_at_step(85, total, warmup, lr);
        assert!(a > b && b > 0.0);
        let slope = (b - a) / 25.0;
        let zero_at = 60.0 - a / slope;
        assert!((zero_at - total as f64).abs() < 1e-6);
    }

    #[test]
    fn schedule_handles_degenerate_shapes() {
        // no warmup
        assert_eq!(lr_at_step(0, 10, 0, 1.0), 1.0);
        assert_eq!(lr_at_step(9, 10, 0, 1.0), 0.1);
        // warmup covering the whole run
        assert_eq!(lr_at_step(5, 10, 20, 1.0), 0.25);
    }

    #[test]
    fn full_scale_defaults_resolve_epochs_per_dataset() {
        assert_eq!(TrainConfig::full_scale_default("snips").epochs, 3);
        assert_eq!(TrainConfig::full_scale_default("atis").epochs, 3);
        assert_eq!(TrainConfig::full_scale_default("banking77").epochs, 4);
        assert_eq!(TrainConfig::full_scale_default("nlue").epochs, 4);
        assert_eq!(TrainConfig::full_scale_default("clinc150").epochs, 4);
        let cfg = TrainConfig::full_scale_default("clinc150");
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.learning_rate, 2e-5);
        assert_eq!(cfg.warmup_steps, 1000);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = TrainConfig::toy_default();
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::toy_default();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::toy_default();
        cfg.max_len = 4;
        assert!(cfg.validate().is_err());
    }
}
