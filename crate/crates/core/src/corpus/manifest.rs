//! Split manifests: the persisted, hashable unit of reproducibility.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IntentLabel, LabelSpacePartition, SplitBundle, UtteranceRecord};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

/// Everything needed to reconstruct a split: the partition, the sampling
/// parameters, and the exact record ids that were drawn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub dataset_id: String,
    /// SHA-256 over the sorted (id, text, label) triples of the corpus.
    pub dataset_fingerprint: String,
    pub seen_labels: Vec<String>,
    pub novel_labels: Vec<String>,
    pub partition_seed: u64,
    pub shots: usize,
    pub split_seed: u64,
    pub min_class_size: usize,
    pub seen_train_ids: Vec<String>,
    pub support_ids: Vec<String>,
    pub query_ids: Vec<String>,
}

impl SplitManifest {
    pub fn from_bundle(
        dataset_id: &str,
        corpus: &[UtteranceRecord],
        bundle: &SplitBundle,
        split_seed: u64,
        min_class_size: usize,
    ) -> Self {
        SplitManifest {
            dataset_id: dataset_id.to_string(),
            dataset_fingerprint: corpus_fingerprint(corpus),
            seen_labels: bundle.partition.seen.iter().map(|l| l.raw_name.clone()).collect(),
            novel_labels: bundle.partition.novel.iter().map(|l| l.raw_name.clone()).collect(),
            partition_seed: bundle.partition.seed,
            shots: bundle.shots,
            split_seed,
            min_class_size,
            seen_train_ids: SplitBundle::sorted_ids(&bundle.seen_train),
            support_ids: SplitBundle::sorted_ids(&bundle.support),
            query_ids: SplitBundle::sorted_ids(&bundle.query),
        }
    }

    /// Rebuild the bundle from the manifest against the same corpus,
    /// verifying the fingerprint and id sets.
    pub fn restore(&self, corpus: &[UtteranceRecord]) -> Result<SplitBundle> {
        let fingerprint = corpus_fingerprint(corpus);
        if fingerprint != self.dataset_fingerprint {
            return Err(Error::Integrity(format!(
                "corpus fingerprint {fingerprint} does not match manifest {}",
                self.dataset_fingerprint
            )));
        }
        let inventory = super::label_inventory(corpus);
        let lookup = |name: &String| -> Result<IntentLabel> {
            inventory
                .iter()
                .find(|l| &l.raw_name == name)
                .cloned()
                .ok_or_else(|| Error::Integrity(format!("manifest label '{name}' not in corpus")))
        };
        let seen: BTreeSet<IntentLabel> =
            self.seen_labels.iter().map(lookup).collect::<Result<_>>()?;
        let novel: BTreeSet<IntentLabel> =
            self.novel_labels.iter().map(lookup).collect::<Result<_>>()?;
        let partition = LabelSpacePartition::new(seen, novel, self.partition_seed)?;

        let pick = |ids: &[String]| -> Result<Vec<UtteranceRecord>> {
            let id_set: BTreeSet<&String> = ids.iter().collect();
            let found: Vec<UtteranceRecord> =
                corpus.iter().filter(|r| id_set.contains(&r.id)).cloned().collect();
            if found.len() != ids.len() {
                return Err(Error::Integrity(format!(
                    "manifest references {} record ids but only {} are present in the corpus",
                    ids.len(),
                    found.len()
                )));
            }
            Ok(found)
        };
        Ok(SplitBundle {
            seen_train: pick(&self.seen_train_ids)?,
            support: pick(&self.support_ids)?,
            query: pick(&self.query_ids)?,
            partition,
            shots: self.shots,
        })
    }

    /// The exact bytes `save` writes; their SHA-256 is the manifest hash
    /// recorded in downstream artifacts.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("manifest serializes")
    }

    /// SHA-256 of [`Self::canonical_bytes`].
    pub fn digest(&self) -> String {
        sha256_hex(&self.canonical_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.canonical_bytes())?;
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

/// Hash of a manifest file's exact bytes; the link embedded in downstream
/// artifacts.
pub fn manifest_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(sha256_hex(&bytes))
}

/// Order-independent corpus digest.
pub fn corpus_fingerprint(records: &[UtteranceRecord]) -> String {
    let mut rows: Vec<String> = records
        .iter()
        .map(|r| format!("{}\u{1}{}\u{1}{}\u{1}{}", r.id, r.text, r.label.raw_name, r.source_split))
        .collect();
    rows.sort();
    sha256_hex(rows.join("\n").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_splits, generate_synthetic_corpus, make_partition};
    use crate::corpus::{PartitionPolicy, TemplateBank};

    #[test]
    fn manifest_round_trips_through_restore() {
        let corpus = generate_synthetic_corpus(4, 12, &TemplateBank::builtin(), 5).unwrap();
        let inventory = crate::corpus::label_inventory(&corpus);
        let partition = make_partition(&inventory, &PartitionPolicy::RandomCount(2), 9).unwrap();
        let bundle = build_splits(&corpus, &partition, 3, 11, 3).unwrap();
        let manifest = SplitManifest::from_bundle("synthetic", &corpus, &bundle, 11, 3);

        let restored = manifest.restore(&corpus).unwrap();
        assert_eq!(SplitBundle::sorted_ids(&restored.support), manifest.support_ids);
        assert_eq!(SplitBundle::sorted_ids(&restored.query), manifest.query_ids);
        assert_eq!(restored.partition, bundle.partition);
        assert_eq!(restored.shots, 3);
    }

    #[test]
    fn restore_rejects_a_different_corpus() {
        let corpus = generate_synthetic_corpus(4, 12, &TemplateBank::builtin(), 5).unwrap();
        let other = generate_synthetic_corpus(4, 12, &TemplateBank::builtin(), 6).unwrap();
        let inventory = crate::corpus::label_inventory(&corpus);
        let partition = make_partition(&inventory, &PartitionPolicy::RandomCount(2), 9).unwrap();
        let bundle = build_splits(&corpus, &partition, 2, 1, 2).unwrap();
        let manifest = SplitManifest::from_bundle("synthetic", &corpus, &bundle, 1, 2);
        let err = manifest.restore(&other).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn save_load_and_hash_are_stable() {
        let corpus = generate_synthetic_corpus(3, 8, &TemplateBank::builtin(), 0).unwrap();
        let inventory = crate::corpus::label_inventory(&corpus);
        let partition = make_partition(&inventory, &PartitionPolicy::RandomCount(1), 0).unwrap();
        let bundle = build_splits(&corpus, &partition, 2, 0, 2).unwrap();
        let manifest = SplitManifest::from_bundle("synthetic", &corpus, &bundle, 0, 2);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        manifest.save(&path).unwrap();
        let loaded = SplitManifest::load(&path).unwrap();
        assert_eq!(manifest, loaded);

        let h1 = manifest_hash(&path).unwrap();
        manifest.save(&path).unwrap();
        let h2 = manifest_hash(&path).unwrap();
        assert_eq!(h1, h2);
    }
}
