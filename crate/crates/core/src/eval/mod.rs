//! F1 computation and experiment reports.

pub mod experiments;
pub mod plot;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::IntentLabel;
use crate::error::{Error, Result};
use crate::predict::{Prediction, Regime};

/// Metric fragment produced by [`compute_f1`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    pub n_query: usize,
}

/// Per-class precision/recall/F1 with the 0/0 → 0 convention.
///
/// Macro-F1 averages over the *full* label space (classes absent from both
/// gold and predictions contribute 0); micro-F1 comes from global TP/FP/FN
/// counts and equals accuracy on single-label traces.
pub fn compute_f1(
    predictions: &[Prediction],
    label_space: &BTreeSet<IntentLabel>,
) -> Result<F1Scores> {
    if predictions.is_empty() {
        return Err(Error::Validation("cannot score an empty prediction trace".into()));
    }
    let names: BTreeSet<&str> = label_space.iter().map(|l| l.raw_name.as_str()).collect();
    for p in predictions {
        if !names.contains(p.true_label.raw_name.as_str()) {
            return Err(Error::Validation(format!(
                "gold label '{}' is outside the label space",
                p.true_label.raw_name
            )));
        }
        if !names.contains(p.predicted.raw_name.as_str()) {
            return Err(Error::Validation(format!(
                "predicted label '{}' is outside the label space",
                p.predicted.raw_name
            )));
        }
    }

    let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fn_: BTreeMap<&str, usize> = BTreeMap::new();
    for p in predictions {
        let gold = p.true_label.raw_name.as_str();
        let pred = p.predicted.raw_name.as_str();
        if gold == pred {
            *tp.entry(gold).or_insert(0) += 1;
        } else {
            *fp.entry(pred).or_insert(0) += 1;
            *fn_.entry(gold).or_insert(0) += 1;
        }
    }

    // F1 in integer-count form, 2tp/(2tp+fp+fn): identical to the
    // harmonic mean of precision and recall under the 0/0 -> 0 convention,
    // and exact in floating point (micro-F1 lands bitwise on accuracy for
    // single-label traces).
    let f1_of = |tp_c: usize, fp_c: usize, fn_c: usize| {
        let denom = 2 * tp_c + fp_c + fn_c;
        if denom == 0 {
            0.0
        } else {
            (2 * tp_c) as f64 / denom as f64
        }
    };
    let mut per_class_f1 = BTreeMap::new();
    let mut macro_sum = 0.0;
    for name in &names {
        let f1 = f1_of(
            tp.get(name).copied().unwrap_or(0),
            fp.get(name).copied().unwrap_or(0),
            fn_.get(name).copied().unwrap_or(0),
        );
        macro_sum += f1;
        per_class_f1.insert((*name).to_string(), f1);
    }
    let f1_macro = macro_sum / names.len() as f64;

    let tp_total: usize = tp.values().sum();
    let fp_total: usize = fp.values().sum();
    let fn_total: usize = fn_.values().sum();
    let f1_micro = f1_of(tp_total, fp_total, fn_total);

    Ok(F1Scores { f1_macro, f1_micro, per_class_f1, n_query: predictions.len() })
}

/// One run's complete result record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub dataset_id: String,
    pub method: String,
    pub regime: Regime,
    pub shots: usize,
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    pub n_query: usize,
    pub split_manifest_hash: String,
    pub config_snapshot: serde_json::Value,
}

impl EvalReport {
    pub fn new(
        dataset_id: &str,
        method: &str,
        regime: Regime,
        shots: usize,
        scores: F1Scores,
        split_manifest_hash: &str,
        config_snapshot: serde_json::Value,
    ) -> Self {
        EvalReport {
            dataset_id: dataset_id.to_string(),
            method: method.to_string(),
            regime,
            shots,
            f1_macro: scores.f1_macro,
            f1_micro: scores.f1_micro,
            per_class_f1: scores.per_class_f1,
            n_query: scores.n_query,
            split_manifest_hash: split_manifest_hash.to_string(),
            config_snapshot,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
