//! Argmax intent prediction over a regime's label space.
//!
//! For every query utterance, all (utterance, label-surface) pairs are
//! scored in one flat batch and the label with the highest entailment
//! probability wins. Novel-only regimes score against the novel labels,
//! generalized regimes against the joint space.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{IntentLabel, SplitBundle, UtteranceRecord};
use crate::encoder::PairScorer;
use crate::error::{Error, Result};

/// The four evaluation regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Fsid,
    Gfsid,
    Zsid,
    Gzsid,
}

impl Regime {
    /// Zero-shot regimes forbid a support set.
    pub fn is_zero_shot(self) -> bool {
        matches!(self, Regime::Zsid | Regime::Gzsid)
    }

    /// Generalized regimes predict over seen ∪ novel.
    pub fn is_generalized(self) -> bool {
        matches!(self, Regime::Gfsid | Regime::Gzsid)
    }

    pub fn parse(s: &str) -> Result<Regime> {
        match s.to_lowercase().as_str() {
            "fsid" => Ok(Regime::Fsid),
            "gfsid" => Ok(Regime::Gfsid),
            "zsid" => Ok(Regime::Zsid),
            "gzsid" => Ok(Regime::Gzsid),
            other => Err(Error::Config(format!(
                "unknown regime '{other}' (expected fsid|gfsid|zsid|gzsid)"
            ))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::Fsid => "fsid",
            Regime::Gfsid => "gfsid",
            Regime::Zsid => "zsid",
            Regime::Gzsid => "gzsid",
        };
        write!(f, "{s}")
    }
}

/// One prediction with its full per-label score map for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub utterance_id: String,
    pub true_label: IntentLabel,
    pub predicted: IntentLabel,
    /// Keyed by raw label name; covers exactly the inference label space.
    pub per_label_scores: BTreeMap<String, f64>,
}

/// The label space a regime infers over.
pub fn regime_label_space(bundle: &SplitBundle, regime: Regime) -> BTreeSet<IntentLabel> {
    if regime.is_generalized() {
        bundle.partition.joint()
    } else {
        bundle.partition.novel.clone()
    }
}

/// The query records a regime evaluates: the bundle's query pool restricted
/// to the regime's label space.
pub fn regime_query(bundle: &SplitBundle, regime: Regime) -> Vec<UtteranceRecord> {
    let space = regime_label_space(bundle, regime);
    bundle.query.iter().filter(|r| space.contains(&r.label)).cloned().collect()
}

/// Score every utterance against every label and take the argmax.
///
/// Ties break to the lexicographically smallest raw name and are logged.
pub fn predict(
    scorer: &dyn PairScorer,
    utterances: &[UtteranceRecord],
    label_space: &BTreeSet<IntentLabel>,
) -> Result<Vec<Prediction>> {
    if label_space.is_empty() {
        return Err(Error::Validation("prediction label space is empty".into()));
    }
    let labels: Vec<&IntentLabel> = label_space.iter().collect();

    // One flat batch over the whole (utterance x label) grid; the scorer is
    // batch-invariant so chunking is a throughput detail.
    let mut flat = Vec::with_capacity(utterances.len() * labels.len());
    for u in utterances {
        for l in &labels {
            flat.push((u.text.clone(), l.surface_form.clone()));
        }
    }
    let scores = scorer.score(&flat)?;
    debug_assert_eq!(scores.len(), flat.len());

    let mut out = Vec::with_capacity(utterances.len());
    for (i, u) in utterances.iter().enumerate() {
        let row = &scores[i * labels.len()..(i + 1) * labels.len()];
        let mut best = 0usize;
        let mut tied = false;
        for (j, s) in row.iter().enumerate().skip(1) {
            if *s > row[best] {
                best = j;
                tied = false;
            } else if *s == row[best] {
                tied = true;
            }
        }
        if tied {
            log::debug!(
                "tie while predicting '{}': kept '{}'",
                u.id,
                labels[best].raw_name
            );
        }
        let per_label_scores: BTreeMap<String, f64> = labels
            .iter()
            .zip(row)
            .map(|(l, s)| (l.raw_name.clone(), *s))
            .collect();
        out.push(Prediction {
            utterance_id: u.id.clone(),
            true_label: u.label.clone(),
            predicted: labels[best].clone(),
            per_label_scores,
        });
    }
    Ok(out)
}

/// Regime-aware prediction over a split bundle.
pub fn predict_regime(
    scorer: &dyn PairScorer,
    bundle: &SplitBundle,
    regime: Regime,
) -> Result<Vec<Prediction>> {
    if regime.is_zero_shot() && !bundle.support.is_empty() {
        return Err(Error::Validation(format!(
            "{regime} forbids a support set but the bundle carries {} support records",
            bundle.support.len()
        )));
    }
    if !regime.is_zero_shot() && bundle.shots == 0 {
        return Err(Error::Validation(format!(
            "{regime} needs a support set but the bundle was built with K=0"
        )));
    }
    let space = regime_label_space(bundle, regime);
    let query = regime_query(bundle, regime);
    predict(scorer, &query, &space)
}

/// Write predictions as a JSONL trace.
pub fn write_trace(path: &Path, predictions: &[Prediction]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in predictions {
        let row = serde_json::json!({
            "utterance_id": p.utterance_id,
            "true_label": p.true_label.raw_name,
            "predicted": p.predicted.raw_name,
            "scores": p.per_label_scores,
        });
        writeln!(f, "{row}")?;
    }
    f.flush()?;
    Ok(())
}

/// Read a JSONL trace back (labels are reconstructed with default surfaces).
pub fn read_trace(path: &Path) -> Result<Vec<Prediction>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (line_no, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        #[derive(Deserialize)]
        struct Row {
            utterance_id: String,
            true_label: String,
            predicted: String,
            scores: BTreeMap<String, f64>,
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no + 1,
            reason: e.to_string(),
        })?;
        out.push(Prediction {
            utterance_id: row.utterance_id,
            true_label: IntentLabel::new(&row.true_label)?,
            predicted: IntentLabel::new(&row.predicted)?,
            per_label_scores: row.scores,
        });
    }
    Ok(out)
}
