//! Deterministic lightweight backend.
//!
//! Premise and hypothesis are embedded as means of sign-hashed token
//! vectors (each token deterministically maps to a ±1/√d vector), combined
//! as `[u; v; |u−v|; u⊙v]`, and fed to a single linear layer. Because a
//! shared token contributes its elementwise square to `u⊙v`, token overlap
//! shows up as a dimension-uniform positive signal, which is what lets the
//! model generalize to hypothesis labels never seen in training.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    content_hash_of, lr_at_step, read_meta, write_meta, ArtifactMeta, PairScorer, Tokenizer,
    TrainConfig, TrainLog, WhitespaceTokenizer,
};
use crate::error::{Error, Result};
use crate::hashing::{fnv1a64, splitmix64};
use crate::pairs::PairDataset;

pub const TOY_BACKEND_ID: &str = "toy";
pub const DEFAULT_DIM: usize = 64;
const PARAMS_FILE: &str = "params.json";

/// Deterministic ±1/√d vector for a token.
fn token_vector(token: &str, dim: usize) -> Vec<f64> {
    let scale = 1.0 / (dim as f64).sqrt();
    let base = fnv1a64(token);
    (0..dim)
        .map(|j| {
            let h = splitmix64(base ^ (j as u64).wrapping_mul(0x9e3779b97f4a7c15));
            if h & 1 == 1 {
                scale
            } else {
                -scale
            }
        })
        .collect()
}

/// Mean of the text's token vectors; all-zero for token-free text.
pub fn bag_embedding(text: &str, dim: usize) -> Vec<f64> {
    let tokenizer = WhitespaceTokenizer;
    let tokens = tokenizer.tokenize(text);
    let mut acc = vec![0.0; dim];
    if tokens.is_empty() {
        return acc;
    }
    for t in &tokens {
        for (a, x) in acc.iter_mut().zip(token_vector(t, dim)) {
            *a += x;
        }
    }
    let inv = 1.0 / tokens.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    acc
}

/// `[u; v; |u−v|; u⊙v]` feature vector of a pair, length `4 * dim`.
pub fn pair_features(premise: &str, hypothesis: &str, dim: usize) -> Vec<f64> {
    let u = bag_embedding(premise, dim);
    let v = bag_embedding(hypothesis, dim);
    let mut features = Vec::with_capacity(4 * dim);
    features.extend_from_slice(&u);
    features.extend_from_slice(&v);
    features.extend(u.iter().zip(&v).map(|(a, b)| (a - b).abs()));
    features.extend(u.iter().zip(&v).map(|(a, b)| a * b));
    features
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Binary cross-entropy of a single example under weights `w`, bias `b`.
/// Numerically stable for large |logit|.
pub fn bce_loss(w: &[f64], b: f64, x: &[f64], y: f64) -> f64 {
    let z = dot(w, x) + b;
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Analytic gradient of [`bce_loss`] with respect to `(w, b)`.
pub fn bce_grad(w: &[f64], b: f64, x: &[f64], y: f64) -> (Vec<f64>, f64) {
    let z = dot(w, x) + b;
    let residual = sigmoid(z) - y;
    (x.iter().map(|xi| residual * xi).collect(), residual)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ToyParams {
    dim: usize,
    weights: Vec<f64>,
    bias: f64,
    trained: bool,
}

/// The deterministic scorer. `allow_untrained` permits scoring before `fit`
/// (probabilities are then a constant 0.5), used only by pipeline tests.
#[derive(Debug, Clone)]
pub struct ToyPairScorer {
    dim: usize,
    weights: Vec<f64>,
    bias: f64,
    trained: bool,
    allow_untrained: bool,
}

impl Default for ToyPairScorer {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl ToyPairScorer {
    pub fn new(dim: usize) -> Self {
        ToyPairScorer {
            dim,
            weights: vec![0.0; 4 * dim],
            bias: 0.0,
            trained: false,
            allow_untrained: false,
        }
    }

    pub fn allow_untrained(mut self, allow: bool) -> Self {
        self.allow_untrained = allow;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = read_meta(dir)?;
        if meta.backend_id != TOY_BACKEND_ID {
            return Err(Error::IncompatibleArtifact(format!(
                "artifact at {} has backend '{}', expected '{TOY_BACKEND_ID}'",
                dir.display(),
                meta.backend_id
            )));
        }
        let path = dir.join(PARAMS_FILE);
        let bytes = std::fs::read(&path).map_err(|e| Error::Load {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if content_hash_of(&bytes) != meta.content_hash {
            return Err(Error::Integrity(format!(
                "parameter file {} does not match the artifact's content hash",
                path.display()
            )));
        }
        let params: ToyParams = serde_json::from_slice(&bytes)?;
        if params.weights.len() != 4 * params.dim {
            return Err(Error::Integrity(format!(
                "parameter vector has length {}, expected {}",
                params.weights.len(),
                4 * params.dim
            )));
        }
        Ok(ToyPairScorer {
            dim: params.dim,
            weights: params.weights,
            bias: params.bias,
            trained: params.trained,
            allow_untrained: false,
        })
    }

    fn score_one(&self, premise: &str, hypothesis: &str) -> f64 {
        let x = pair_features(premise, hypothesis, self.dim);
        sigmoid(dot(&self.weights, &x) + self.bias)
    }
}

impl PairScorer for ToyPairScorer {
    fn backend_id(&self) -> &'static str {
        TOY_BACKEND_ID
    }

    fn is_trained(&self) -> bool {
        self.trained
    }

    fn fit(&mut self, train_set: &PairDataset, config: &TrainConfig) -> Result<TrainLog> {
        config.validate()?;
        let n = train_set.pairs.len();
        if n == 0 {
            return Err(Error::Validation("training set is empty".into()));
        }
        let n_entailed = train_set.count_entailed();
        if n_entailed == 0 || n_entailed == n {
            return Err(Error::Validation(
                "training set must contain both entailed and not-entailed pairs".into(),
            ));
        }

        let mut log = TrainLog::default();
        let batch = if config.batch_size > n {
            log.warnings.push(format!(
                "batch_size {} exceeds the {} training pairs; running one batch per epoch",
                config.batch_size, n
            ));
            n
        } else {
            config.batch_size
        };

        let features: Vec<Vec<f64>> = train_set
            .pairs
            .iter()
            .map(|p| pair_features(&p.premise, &p.hypothesis, self.dim))
            .collect();
        let targets: Vec<f64> = train_set.pairs.iter().map(|p| p.target.as_f64()).collect();

        let steps_per_epoch = n.div_ceil(batch);
        let total_steps = steps_per_epoch * config.epochs;
        let n_params = 4 * self.dim;

        // AdamW state; decay is decoupled and skips the bias.
        let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
        let mut m = vec![0.0f64; n_params];
        let mut v = vec![0.0f64; n_params];
        let (mut mb, mut vb) = (0.0f64, 0.0f64);

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut step = 0usize;

        for _epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(batch) {
                let mut grad_w = vec![0.0f64; n_params];
                let mut grad_b = 0.0f64;
                let mut batch_loss = 0.0f64;
                for &i in chunk {
                    let (gw, gb) = bce_grad(&self.weights, self.bias, &features[i], targets[i]);
                    for (acc, g) in grad_w.iter_mut().zip(gw) {
                        *acc += g;
                    }
                    grad_b += gb;
                    batch_loss += bce_loss(&self.weights, self.bias, &features[i], targets[i]);
                }
                let inv = 1.0 / chunk.len() as f64;
                for g in &mut grad_w {
                    *g *= inv;
                }
                grad_b *= inv;
                epoch_loss += batch_loss;

                let lr = lr_at_step(step, total_steps, config.warmup_steps, config.learning_rate);
                log.step_lrs.push(lr);
                step += 1;
                let t = step as f64;
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                for j in 0..n_params {
                    m[j] = beta1 * m[j] + (1.0 - beta1) * grad_w[j];
                    v[j] = beta2 * v[j] + (1.0 - beta2) * grad_w[j] * grad_w[j];
                    let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
                    self.weights[j] -= lr * (update + config.weight_decay * self.weights[j]);
                }
                mb = beta1 * mb + (1.0 - beta1) * grad_b;
                vb = beta2 * vb + (1.0 - beta2) * grad_b * grad_b;
                self.bias -= lr * (mb / bc1) / ((vb / bc2).sqrt() + eps);
            }
            log.epoch_mean_loss.push(epoch_loss / n as f64);
        }

        self.trained = true;
        Ok(log)
    }

    fn score(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        if !self.trained && !self.allow_untrained {
            return Err(Error::Validation(
                "scorer is untrained; fit it first (or opt in with allow_untrained for pipeline tests)"
                    .into(),
            ));
        }
        Ok(pairs.iter().map(|(p, h)| self.score_one(p, h)).collect())
    }

    fn save(&self, dir: &Path, manifest_hash: Option<&str>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let params = ToyParams {
            dim: self.dim,
            weights: self.weights.clone(),
            bias: self.bias,
            trained: self.trained,
        };
        let bytes = serde_json::to_vec(&params)?;
        std::fs::write(dir.join(PARAMS_FILE), &bytes)?;
        write_meta(
            dir,
            &ArtifactMeta {
                backend_id: TOY_BACKEND_ID.to_string(),
                tokenizer: WhitespaceTokenizer.id().to_string(),
                config: None,
                content_hash: content_hash_of(&bytes),
                manifest_hash: manifest_hash.map(str::to_string),
            },
        )
    }
}
