//! Canonical intent-dataset records, label partitions, and split construction.
//!
//! A corpus is a flat list of [`UtteranceRecord`]s tagged with a train/test
//! split. Labels are carried as [`IntentLabel`]s pairing the dataset-native
//! raw name with the natural-language surface form used as an entailment
//! hypothesis. Partitions and splits are fully determined by their seeds.

mod load;
mod manifest;
mod partition;
pub mod presets;
mod splits;
mod synthetic;

pub use load::{load_dataset, load_surface_overrides, write_jsonl, DatasetFormat};
pub use manifest::{corpus_fingerprint, manifest_hash, SplitManifest};
pub use partition::{filter_min_class_size, make_partition, shuffled_labels, PartitionPolicy};
pub use splits::build_splits;
pub use synthetic::{generate_synthetic_corpus, TemplateBank};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which on-disk split a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// An intent class: the dataset-native name plus the hypothesis text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntentLabel {
    pub raw_name: String,
    pub surface_form: String,
}

impl IntentLabel {
    /// Build a label with the default surface rendering: lowercased,
    /// underscores and hyphens become single spaces, whitespace collapsed.
    pub fn new(raw_name: &str) -> Result<Self> {
        let surface = default_surface_form(raw_name);
        Self::with_surface(raw_name, &surface)
    }

    /// Build a label with an explicit surface form (override table entry).
    pub fn with_surface(raw_name: &str, surface_form: &str) -> Result<Self> {
        let surface_form = surface_form.trim().to_string();
        if surface_form.is_empty() {
            return Err(Error::Validation(format!(
                "label '{raw_name}' has an empty surface form"
            )));
        }
        if surface_form.contains('_') {
            return Err(Error::Validation(format!(
                "surface form '{surface_form}' for label '{raw_name}' contains an underscore"
            )));
        }
        Ok(IntentLabel {
            raw_name: raw_name.to_string(),
            surface_form,
        })
    }
}

/// Default raw-name → surface-form rendering.
pub fn default_surface_form(raw_name: &str) -> String {
    let replaced: String = raw_name
        .to_lowercase()
        .chars()
        .map(|c| if c == '_' || c == '-' { ' ' } else { c })
        .collect();
    replaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One labeled utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub text: String,
    pub label: IntentLabel,
    pub source_split: Split,
}

impl UtteranceRecord {
    pub fn new(id: &str, text: &str, label: IntentLabel, source_split: Split) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Validation(format!(
                "record '{id}' has empty text after trimming"
            )));
        }
        Ok(UtteranceRecord {
            id: id.to_string(),
            text: text.to_string(),
            label,
            source_split,
        })
    }
}

/// Disjoint seen/novel label sets and their union.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpacePartition {
    pub seen: BTreeSet<IntentLabel>,
    pub novel: BTreeSet<IntentLabel>,
    pub seed: u64,
}

impl LabelSpacePartition {
    pub fn new(
        seen: BTreeSet<IntentLabel>,
        novel: BTreeSet<IntentLabel>,
        seed: u64,
    ) -> Result<Self> {
        if seen.is_empty() {
            return Err(Error::Validation("partition has no seen labels".into()));
        }
        if novel.is_empty() {
            return Err(Error::Validation("partition has no novel labels".into()));
        }
        if let Some(dup) = seen.intersection(&novel).next() {
            return Err(Error::Validation(format!(
                "label '{}' is both seen and novel",
                dup.raw_name
            )));
        }
        Ok(LabelSpacePartition { seen, novel, seed })
    }

    /// seen ∪ novel.
    pub fn joint(&self) -> BTreeSet<IntentLabel> {
        self.seen.union(&self.novel).cloned().collect()
    }

    pub fn contains(&self, label: &IntentLabel) -> bool {
        self.seen.contains(label) || self.novel.contains(label)
    }
}

/// The sampled data for one experiment: abundant seen-class training data,
/// K support records per novel label, and the evaluation query pool.
///
/// `query` holds every test record whose label is in the joint space; regime
/// evaluation narrows it further (novel-only regimes drop seen-class
/// queries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBundle {
    pub seen_train: Vec<UtteranceRecord>,
    pub support: Vec<UtteranceRecord>,
    pub query: Vec<UtteranceRecord>,
    pub partition: LabelSpacePartition,
    pub shots: usize,
}

impl SplitBundle {
    /// Sorted ids, used for manifests and byte-identity checks.
    pub fn sorted_ids(records: &[UtteranceRecord]) -> Vec<String> {
        let mut ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        ids.sort();
        ids
    }
}

/// Collect the distinct labels of a record set.
pub fn label_inventory(records: &[UtteranceRecord]) -> BTreeSet<IntentLabel> {
    records.iter().map(|r| r.label.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_form_replaces_separators_and_lowercases() {
        assert_eq!(default_surface_form("flight_airfare"), "flight airfare");
        assert_eq!(default_surface_form("AddToPlaylist"), "addtoplaylist");
        assert_eq!(default_surface_form("pay-bill"), "pay bill");
        assert_eq!(default_surface_form("a__b"), "a b");
    }

    #[test]
    fn label_rejects_empty_and_underscore_surfaces() {
        assert!(IntentLabel::with_surface("x", "  ").is_err());
        assert!(IntentLabel::with_surface("x", "a_b").is_err());
        assert!(IntentLabel::with_surface("x", "a b").is_ok());
    }

    #[test]
    fn record_rejects_whitespace_text() {
        let label = IntentLabel::new("greet").unwrap();
        assert!(UtteranceRecord::new("r0", "   ", label, Split::Train).is_err());
    }

    #[test]
    fn partition_enforces_disjointness() {
        let a = IntentLabel::new("a").unwrap();
        let b = IntentLabel::new("b").unwrap();
        let seen: BTreeSet<_> = [a.clone()].into_iter().collect();
        let novel: BTreeSet<_> = [a.clone(), b.clone()].into_iter().collect();
        assert!(LabelSpacePartition::new(seen, novel, 0).is_err());

        let seen: BTreeSet<_> = [a.clone()].into_iter().collect();
        let novel: BTreeSet<_> = [b].into_iter().collect();
        let p = LabelSpacePartition::new(seen, novel, 0).unwrap();
        assert_eq!(p.joint().len(), 2);
        assert!(p.contains(&a));
    }
}
