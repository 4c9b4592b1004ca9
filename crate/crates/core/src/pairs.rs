//! Entailment-pair construction and negative downsampling.
//!
//! Every labeled utterance expands into one pair per candidate label: the
//! utterance is the premise, the label's surface form is the hypothesis,
//! and the target says whether the label is the utterance's true intent.
//! One utterance over label space Y yields exactly 1 entailed and |Y|−1
//! not-entailed pairs, so negatives are downsampled before fine-tuning.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{IntentLabel, UtteranceRecord};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;

/// Binary entailment target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntailmentTarget {
    NotEntailed = 0,
    Entailed = 1,
}

impl EntailmentTarget {
    pub fn as_f64(self) -> f64 {
        match self {
            EntailmentTarget::NotEntailed => 0.0,
            EntailmentTarget::Entailed => 1.0,
        }
    }
}

/// One premise/hypothesis training or inference unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliPair {
    pub premise: String,
    pub hypothesis: String,
    pub target: EntailmentTarget,
    pub origin_id: String,
    pub hypothesis_label: IntentLabel,
}

/// A pair set plus the label space it was built over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub pairs: Vec<NliPair>,
    pub label_space: BTreeSet<IntentLabel>,
    pub downsample_ratio: Option<f64>,
    pub seed: u64,
}

impl PairDataset {
    pub fn count_entailed(&self) -> usize {
        self.pairs.iter().filter(|p| p.target == EntailmentTarget::Entailed).count()
    }

    pub fn count_not_entailed(&self) -> usize {
        self.pairs.len() - self.count_entailed()
    }
}

/// How negatives are chosen during downsampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeSampling {
    /// Uniform over all not-entailed pairs (default).
    #[default]
    Global,
    /// Ablation mode: a per-utterance quota of round(ratio) negatives.
    PerUtterance,
}

/// Expand records into the full pair grid over `label_space`.
///
/// Output order is (origin id, hypothesis raw name), so repeated calls are
/// identical.
pub fn to_pairs(
    records: &[UtteranceRecord],
    label_space: &BTreeSet<IntentLabel>,
) -> Result<PairDataset> {
    if label_space.len() < 2 {
        return Err(Error::Validation(format!(
            "pair construction needs at least 2 labels, got {}",
            label_space.len()
        )));
    }
    for r in records {
        if !label_space.contains(&r.label) {
            return Err(Error::Validation(format!(
                "record '{}' has label '{}' outside the pair label space",
                r.id, r.label.raw_name
            )));
        }
    }

    let mut sorted: Vec<&UtteranceRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let mut pairs = Vec::with_capacity(sorted.len() * label_space.len());
    for r in sorted {
        for label in label_space {
            let target = if *label == r.label {
                EntailmentTarget::Entailed
            } else {
                EntailmentTarget::NotEntailed
            };
            pairs.push(NliPair {
                premise: r.text.clone(),
                hypothesis: label.surface_form.clone(),
                target,
                origin_id: r.id.clone(),
                hypothesis_label: label.clone(),
            });
        }
    }
    Ok(PairDataset {
        pairs,
        label_space: label_space.clone(),
        downsample_ratio: None,
        seed: 0,
    })
}

/// Half-away-from-zero rounding, fixed across platforms.
pub fn round_half_away(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        (x + 0.5).floor() as usize
    }
}

/// Downsample not-entailed pairs to `ratio` times the entailed count.
///
/// All entailed pairs are retained; negatives are sampled without
/// replacement and keep their original relative order.
pub fn downsample_negatives(dataset: &PairDataset, ratio: f64, seed: u64) -> Result<PairDataset> {
    downsample_negatives_with(dataset, ratio, seed, NegativeSampling::Global)
}

pub fn downsample_negatives_with(
    dataset: &PairDataset,
    ratio: f64,
    seed: u64,
    mode: NegativeSampling,
) -> Result<PairDataset> {
    if ratio.is_nan() || ratio <= 0.0 {
        return Err(Error::Validation(format!("downsample ratio must be positive, got {ratio}")));
    }

    let keep_indices: BTreeSet<usize> = match mode {
        NegativeSampling::Global => {
            let negatives: Vec<usize> = dataset
                .pairs
                .iter()
                .enumerate()
                .filter(|(_, p)| p.target == EntailmentTarget::NotEntailed)
                .map(|(i, _)| i)
                .collect();
            let n_entailed = dataset.pairs.len() - negatives.len();
            let want = round_half_away(ratio * n_entailed as f64).min(negatives.len());
            let mut shuffled = negatives;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            shuffled.shuffle(&mut rng);
            shuffled.into_iter().take(want).collect()
        }
        NegativeSampling::PerUtterance => {
            let mut by_origin: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, p) in dataset.pairs.iter().enumerate() {
                if p.target == EntailmentTarget::NotEntailed {
                    by_origin.entry(p.origin_id.as_str()).or_default().push(i);
                }
            }
            let quota = round_half_away(ratio);
            let mut keep = BTreeSet::new();
            for (origin, mut indices) in by_origin {
                let want = quota.min(indices.len());
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, origin));
                indices.shuffle(&mut rng);
                keep.extend(indices.into_iter().take(want));
            }
            keep
        }
    };

    let pairs: Vec<NliPair> = dataset
        .pairs
        .iter()
        .enumerate()
        .filter(|(i, p)| p.target == EntailmentTarget::Entailed || keep_indices.contains(i))
        .map(|(_, p)| p.clone())
        .collect();
    Ok(PairDataset {
        pairs,
        label_space: dataset.label_space.clone(),
        downsample_ratio: Some(ratio),
        seed,
    })
}

/// Concatenate seen pairs with optional support pairs and shuffle
/// deterministically. Zero-shot fine-tuning passes `None`.
pub fn build_finetune_set(
    seen_pairs: &PairDataset,
    support_pairs: Option<&PairDataset>,
    shuffle_seed: u64,
) -> PairDataset {
    let mut pairs = seen_pairs.pairs.clone();
    let mut label_space = seen_pairs.label_space.clone();
    if let Some(sp) = support_pairs {
        pairs.extend(sp.pairs.iter().cloned());
        label_space.extend(sp.label_space.iter().cloned());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    pairs.shuffle(&mut rng);
    PairDataset {
        pairs,
        label_space,
        downsample_ratio: seen_pairs.downsample_ratio,
        seed: shuffle_seed,
    }
}

#[derive(Serialize, Deserialize)]
struct PairRow<'a> {
    premise: &'a str,
    hypothesis: &'a str,
    target: u8,
    origin_id: &'a str,
    hypothesis_label: &'a str,
}

/// Serialize a pair set as JSONL for training outside the toolkit.
pub fn write_pairs_jsonl(path: &Path, dataset: &PairDataset) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in &dataset.pairs {
        let row = PairRow {
            premise: &p.premise,
            hypothesis: &p.hypothesis,
            target: p.target as u8,
            origin_id: &p.origin_id,
            hypothesis_label: &p.hypothesis_label.raw_name,
        };
        serde_json::to_writer(&mut f, &row)?;
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

/// Read a pair set back from JSONL.
pub fn read_pairs_jsonl(path: &Path) -> Result<PairDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut pairs = Vec::new();
    let mut label_space = BTreeSet::new();
    for (line_no, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct OwnedRow {
            premise: String,
            hypothesis: String,
            target: u8,
            origin_id: String,
            hypothesis_label: String,
        }
        let row: OwnedRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no + 1,
            reason: e.to_string(),
        })?;
        let target = match row.target {
            0 => EntailmentTarget::NotEntailed,
            1 => EntailmentTarget::Entailed,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no + 1,
                    reason: format!("target must be 0 or 1, got {other}"),
                })
            }
        };
        let label = IntentLabel::with_surface(&row.hypothesis_label, &row.hypothesis)?;
        label_space.insert(label.clone());
        pairs.push(NliPair {
            premise: row.premise,
            hypothesis: row.hypothesis,
            target,
            origin_id: row.origin_id,
            hypothesis_label: label,
        });
    }
    Ok(PairDataset { pairs, label_space, downsample_ratio: None, seed: 0 })
}
