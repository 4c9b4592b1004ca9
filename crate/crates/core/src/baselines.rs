//! Comparison methods: nearest-prototype classification over a fine-tuned
//! encoder, and the encoder-distance zero-shot family (label-name nearest
//! neighbour). External methods that are not reimplemented here are carried
//! as a static reference-score table for report rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::corpus::{IntentLabel, UtteranceRecord};
use crate::encoder::{TrainConfig, PYTHON_ENV_VAR};
use crate::error::{Error, Result};
use crate::predict::{Prediction, Regime};

/// Deterministic text → vector encoder.
pub trait SentenceEmbedder: Send {
    fn embedder_id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Hashed bag-of-tokens embedder; no training, used for tests and as the
/// desk-scale stand-in for external sentence encoders.
#[derive(Debug, Clone, Copy)]
pub struct ToyBagEmbedder {
    pub dim: usize,
}

impl Default for ToyBagEmbedder {
    fn default() -> Self {
        ToyBagEmbedder { dim: 64 }
    }
}

impl SentenceEmbedder for ToyBagEmbedder {
    fn embedder_id(&self) -> String {
        format!("toy-bag-{}", self.dim)
    }
    fn dimension(&self) -> usize {
        self.dim
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| crate::encoder::bag_embedding(t, self.dim)).collect())
    }
}

/// Embedder backed by a supervised intent classifier fine-tuned on the
/// seen-class data; the embedding is the class-logit readout. This is the
/// toy analogue of "fine-tune the encoder on the base classes, then embed".
#[derive(Debug, Clone)]
pub struct ToyClassifierEmbedder {
    dim: usize,
    labels: Vec<IntentLabel>,
    // row-major |labels| x dim plus per-class bias
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl ToyClassifierEmbedder {
    pub fn labels(&self) -> &[IntentLabel] {
        &self.labels
    }
}

/// Multinomial logistic regression on hashed bag embeddings.
pub fn fit_toy_classifier(
    records: &[UtteranceRecord],
    dim: usize,
    config: &TrainConfig,
) -> Result<ToyClassifierEmbedder> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::Validation("classifier training set is empty".into()));
    }
    // id-sorted so training order is independent of caller ordering
    let mut records: Vec<&UtteranceRecord> = records.iter().collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let records = records;
    let labels: Vec<IntentLabel> =
        records.iter().map(|r| r.label.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if labels.len() < 2 {
        return Err(Error::Validation(
            "classifier training set must contain at least 2 classes".into(),
        ));
    }
    let index: BTreeMap<&str, usize> =
        labels.iter().enumerate().map(|(i, l)| (l.raw_name.as_str(), i)).collect();

    let features: Vec<Vec<f64>> = records
        .iter()
        .map(|r| crate::encoder::bag_embedding(&r.text, dim))
        .collect();
    let targets: Vec<usize> = records.iter().map(|r| index[r.label.raw_name.as_str()]).collect();

    let n = records.len();
    let n_classes = labels.len();
    let batch = config.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let total_steps = steps_per_epoch * config.epochs;

    let mut weights = vec![0.0f64; n_classes * dim];
    let mut biases = vec![0.0f64; n_classes];
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0f64; n_classes * dim];
    let mut v = vec![0.0f64; n_classes * dim];
    let mut mb = vec![0.0f64; n_classes];
    let mut vb = vec![0.0f64; n_classes];

    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut grad_w = vec![0.0f64; n_classes * dim];
            let mut grad_b = vec![0.0f64; n_classes];
            for &i in chunk {
                let x = &features[i];
                // softmax over class logits
                let logits: Vec<f64> = (0..n_classes)
                    .map(|c| {
                        biases[c]
                            + weights[c * dim..(c + 1) * dim]
                                .iter()
                                .zip(x)
                                .map(|(w, xi)| w * xi)
                                .sum::<f64>()
                    })
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                for c in 0..n_classes {
                    let p = exps[c] / total;
                    let residual = p - if targets[i] == c { 1.0 } else { 0.0 };
                    grad_b[c] += residual;
                    for (g, xi) in grad_w[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                        *g += residual * xi;
                    }
                }
            }
            let inv = 1.0 / chunk.len() as f64;
            let lr = crate::encoder::lr_at_step(
                step,
                total_steps,
                config.warmup_steps,
                config.learning_rate,
            );
            step += 1;
            let t = step as f64;
            let bc1 = 1.0 - beta1.powf(t);
            let bc2 = 1.0 - beta2.powf(t);
            for j in 0..n_classes * dim {
                let g = grad_w[j] * inv;
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
                weights[j] -= lr * (update + config.weight_decay * weights[j]);
            }
            for c in 0..n_classes {
                let g = grad_b[c] * inv;
                mb[c] = beta1 * mb[c] + (1.0 - beta1) * g;
                vb[c] = beta2 * vb[c] + (1.0 - beta2) * g * g;
                biases[c] -= lr * (mb[c] / bc1) / ((vb[c] / bc2).sqrt() + eps);
            }
        }
    }

    Ok(ToyClassifierEmbedder { dim, labels, weights, biases })
}

impl SentenceEmbedder for ToyClassifierEmbedder {
    fn embedder_id(&self) -> String {
        format!("toy-classifier-{}x{}", self.labels.len(), self.dim)
    }
    fn dimension(&self) -> usize {
        self.labels.len()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts
            .iter()
            .map(|t| {
                let x = crate::encoder::bag_embedding(t, self.dim);
                (0..self.labels.len())
                    .map(|c| {
                        self.biases[c]
                            + self.weights[c * self.dim..(c + 1) * self.dim]
                                .iter()
                                .zip(&x)
                                .map(|(w, xi)| w * xi)
                                .sum::<f64>()
                    })
                    .collect()
            })
            .collect())
    }
}

/// External sentence encoder reached through the bundled Python driver
/// (`embed` mode); `model_id` is a hub id or local checkpoint path.
#[derive(Debug, Clone)]
pub struct PythonEmbedder {
    pub model_id: String,
    pub cache_dir: PathBuf,
    pub dimension_hint: usize,
}

impl SentenceEmbedder for PythonEmbedder {
    fn embedder_id(&self) -> String {
        format!("python:{}", self.model_id)
    }
    fn dimension(&self) -> usize {
        self.dimension_hint
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        std::fs::create_dir_all(&self.cache_dir)?;
        let driver = self.cache_dir.join("transformer_driver.py");
        if !driver.exists() {
            std::fs::write(&driver, crate::encoder::transformer_driver_source())?;
        }
        let texts_path = self.cache_dir.join("embed_texts.json");
        std::fs::write(&texts_path, serde_json::to_vec(texts)?)?;
        let out_path = self.cache_dir.join("embed_out.json");
        let python = std::env::var(PYTHON_ENV_VAR).unwrap_or_else(|_| "python3".into());
        let output = Command::new(&python)
            .arg(&driver)
            .args([
                "embed",
                "--model",
                &self.model_id,
                "--texts",
                texts_path.to_str().unwrap(),
                "--out",
                out_path.to_str().unwrap(),
            ])
            .output()
            .map_err(|e| Error::Training(format!("failed to launch {python}: {e}")))?;
        if !output.status.success() {
            return Err(Error::Training(format!(
                "embed driver failed: {}",
                String::from_utf8_lossy(&output.stderr)
            )));
        }
        Ok(serde_json::from_slice(&std::fs::read(&out_path)?)?)
    }
}

/// Supervised intent-classification fine-tune through the Python driver
/// (`classify-train` mode); returns an embedder over the fine-tuned
/// checkpoint. Used by the prototype baseline on the transformer backend.
pub fn fit_transformer_classifier(
    records: &[UtteranceRecord],
    model_id: &str,
    config: &TrainConfig,
    cache_dir: &std::path::Path,
) -> Result<PythonEmbedder> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::Validation("classifier training set is empty".into()));
    }
    std::fs::create_dir_all(cache_dir)?;
    let driver = cache_dir.join("transformer_driver.py");
    if !driver.exists() {
        std::fs::write(&driver, crate::encoder::transformer_driver_source())?;
    }
    let records_path = cache_dir.join("classifier_records.jsonl");
    {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(&records_path)?);
        for r in records {
            let row = serde_json::json!({"text": r.text, "label": r.label.raw_name});
            writeln!(f, "{row}")?;
        }
    }
    let config_path = cache_dir.join("classifier_config.json");
    std::fs::write(&config_path, serde_json::to_vec_pretty(config)?)?;
    let out_dir = cache_dir.join("classifier");
    std::fs::create_dir_all(&out_dir)?;

    let python = std::env::var(PYTHON_ENV_VAR).unwrap_or_else(|_| "python3".into());
    let output = Command::new(&python)
        .arg(&driver)
        .args([
            "classify-train",
            "--records",
            records_path.to_str().unwrap(),
            "--config",
            config_path.to_str().unwrap(),
            "--model-id",
            model_id,
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .map_err(|e| Error::Training(format!("failed to launch {python}: {e}")))?;
    if !output.status.success() {
        return Err(Error::Training(format!(
            "classify-train driver failed: {}",
            String::from_utf8_lossy(&output.stderr)
        )));
    }
    Ok(PythonEmbedder {
        model_id: out_dir.join("checkpoint").to_string_lossy().into_owned(),
        cache_dir: cache_dir.to_path_buf(),
        dimension_hint: 768,
    })
}

/// Per-class mean embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub label: IntentLabel,
    pub vector: Vec<f64>,
    pub support_count: usize,
}

fn mean_embedding(embedder: &dyn SentenceEmbedder, records: &[&UtteranceRecord]) -> Result<Vec<f64>> {
    // id-sorted so the floating-point sum does not depend on how the caller
    // ordered the records (restored bundles order by corpus position)
    let mut records: Vec<&UtteranceRecord> = records.to_vec();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let texts: Vec<String> = records.iter().map(|r| r.text.clone()).collect();
    let vectors = embedder.embed(&texts)?;
    let dim = vectors.first().map(|v| v.len()).unwrap_or(0);
    let mut acc = vec![0.0; dim];
    for v in &vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let inv = 1.0 / vectors.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    Ok(acc)
}

/// Build one prototype per label of the regime's inference space: novel
/// labels from the support set, seen labels (generalized regimes only) from
/// the full seen-train set.
pub fn proto_fit(
    embedder: &dyn SentenceEmbedder,
    seen_train: &[UtteranceRecord],
    support: &[UtteranceRecord],
    partition: &crate::corpus::LabelSpacePartition,
    regime: Regime,
) -> Result<Vec<Prototype>> {
    if regime.is_zero_shot() {
        return Err(Error::Validation(
            "the prototypical baseline needs a support set; zero-shot regimes have none".into(),
        ));
    }
    let mut prototypes = Vec::new();
    for label in &partition.novel {
        let members: Vec<&UtteranceRecord> =
            support.iter().filter(|r| r.label == *label).collect();
        if members.is_empty() {
            return Err(Error::MissingPrototype(label.raw_name.clone()));
        }
        prototypes.push(Prototype {
            label: label.clone(),
            vector: mean_embedding(embedder, &members)?,
            support_count: members.len(),
        });
    }
    if regime.is_generalized() {
        for label in &partition.seen {
            let members: Vec<&UtteranceRecord> =
                seen_train.iter().filter(|r| r.label == *label).collect();
            if members.is_empty() {
                return Err(Error::MissingPrototype(label.raw_name.clone()));
            }
            prototypes.push(Prototype {
                label: label.clone(),
                vector: mean_embedding(embedder, &members)?,
                support_count: members.len(),
            });
        }
    }
    prototypes.sort_by(|a, b| a.label.raw_name.cmp(&b.label.raw_name));
    Ok(prototypes)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn nearest_by_negated_distance(
    utterance: &UtteranceRecord,
    candidates: &[(&IntentLabel, f64)],
) -> Prediction {
    // candidates arrive sorted by raw name; strict '>' keeps the
    // lexicographically smallest raw name on ties.
    let mut best = 0usize;
    for (j, (_, score)) in candidates.iter().enumerate().skip(1) {
        if *score > candidates[best].1 {
            best = j;
        }
    }
    Prediction {
        utterance_id: utterance.id.clone(),
        true_label: utterance.label.clone(),
        predicted: candidates[best].0.clone(),
        per_label_scores: candidates
            .iter()
            .map(|(l, s)| (l.raw_name.clone(), *s))
            .collect(),
    }
}

/// Classify by nearest prototype (Euclidean); scores are negated distances
/// so argmax semantics match the entailment predictor.
pub fn proto_predict(
    prototypes: &[Prototype],
    utterances: &[UtteranceRecord],
    embedder: &dyn SentenceEmbedder,
) -> Result<Vec<Prediction>> {
    if prototypes.is_empty() {
        return Err(Error::Validation("no prototypes to classify against".into()));
    }
    let texts: Vec<String> = utterances.iter().map(|r| r.text.clone()).collect();
    let vectors = embedder.embed(&texts)?;
    let mut sorted: Vec<&Prototype> = prototypes.iter().collect();
    sorted.sort_by(|a, b| a.label.raw_name.cmp(&b.label.raw_name));

    let mut out = Vec::with_capacity(utterances.len());
    for (u, v) in utterances.iter().zip(&vectors) {
        for p in &sorted {
            if p.vector.len() != v.len() {
                return Err(Error::Validation(format!(
                    "prototype '{}' has dimension {} but the embedding has {}",
                    p.label.raw_name,
                    p.vector.len(),
                    v.len()
                )));
            }
        }
        let candidates: Vec<(&IntentLabel, f64)> =
            sorted.iter().map(|p| (&p.label, -euclidean(&p.vector, v))).collect();
        out.push(nearest_by_negated_distance(u, &candidates));
    }
    Ok(out)
}

/// Zero-shot encoder-distance baseline: assign each utterance the label
/// whose surface-form embedding is nearest. No training stage.
pub fn zsddn_predict(
    embedder: &dyn SentenceEmbedder,
    utterances: &[UtteranceRecord],
    label_space: &BTreeSet<IntentLabel>,
) -> Result<Vec<Prediction>> {
    if label_space.is_empty() {
        return Err(Error::Validation("zs-ddn label space is empty".into()));
    }
    let labels: Vec<&IntentLabel> = label_space.iter().collect();
    let label_texts: Vec<String> = labels.iter().map(|l| l.surface_form.clone()).collect();
    let label_vectors = embedder.embed(&label_texts)?;
    let texts: Vec<String> = utterances.iter().map(|r| r.text.clone()).collect();
    let vectors = embedder.embed(&texts)?;

    let mut out = Vec::with_capacity(utterances.len());
    for (u, v) in utterances.iter().zip(&vectors) {
        let candidates: Vec<(&IntentLabel, f64)> = labels
            .iter()
            .zip(&label_vectors)
            .map(|(l, lv)| (*l, -euclidean(lv, v)))
            .collect();
        out.push(nearest_by_negated_distance(u, &candidates));
    }
    Ok(out)
}

/// One externally reported score row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScore {
    pub dataset: String,
    pub method: String,
    pub regime: Regime,
    pub shots: usize,
    pub f1_percent: f64,
}

#[derive(Deserialize)]
struct ReferenceFile {
    #[allow(dead_code)]
    note: String,
    #[allow(dead_code)]
    excluded: serde_json::Value,
    rows: Vec<ReferenceScore>,
}

const REFERENCE_SCORES_JSON: &str = include_str!("../assets/reference_scores.json");

/// The bundled reference-score table.
pub fn reference_scores() -> Vec<ReferenceScore> {
    let file: ReferenceFile =
        serde_json::from_str(REFERENCE_SCORES_JSON).expect("bundled reference table parses");
    file.rows
}

/// Reference rows matching a (dataset, regime, shots) cell.
pub fn reference_rows_for(dataset: &str, regime: Regime, shots: usize) -> Vec<ReferenceScore> {
    reference_scores()
        .into_iter()
        .filter(|r| r.dataset == dataset && r.regime == regime && r.shots == shots)
        .collect()
}

/// Copy of the disclaimer that must accompany rendered reference rows.
pub fn reference_note() -> String {
    let file: ReferenceFile =
        serde_json::from_str(REFERENCE_SCORES_JSON).expect("bundled reference table parses");
    file.note
}
