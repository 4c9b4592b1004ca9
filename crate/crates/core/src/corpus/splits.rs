//! Support/query/seen-train split construction.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LabelSpacePartition, SplitBundle, UtteranceRecord};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;

/// Build the split bundle for one experiment.
///
/// Support is drawn from each novel label's *train* records only: the
/// label's records are shuffled with a seed derived from `(seed, label)` and
/// the first `shots` are taken. Because the per-label stream ignores other
/// labels, support sets are nested across shot counts for a fixed seed.
///
/// `query` is every test record with a label in the joint space; `seen_train`
/// is every train record with a seen label.
pub fn build_splits(
    records: &[UtteranceRecord],
    partition: &LabelSpacePartition,
    shots: usize,
    seed: u64,
    min_class_size: usize,
) -> Result<SplitBundle> {
    if min_class_size < shots {
        return Err(Error::Validation(format!(
            "min_class_size {min_class_size} must be at least the shot count {shots}"
        )));
    }

    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *totals.entry(r.label.raw_name.as_str()).or_insert(0) += 1;
    }
    for label in partition.seen.iter().chain(partition.novel.iter()) {
        let n = totals.get(label.raw_name.as_str()).copied().unwrap_or(0);
        if n < min_class_size {
            return Err(Error::Validation(format!(
                "label '{}' has {n} records, below min_class_size {min_class_size}; \
                 filter the inventory before partitioning",
                label.raw_name
            )));
        }
    }

    let mut support = Vec::new();
    for label in &partition.novel {
        let mut pool: Vec<&UtteranceRecord> = records
            .iter()
            .filter(|r| r.source_split == super::Split::Train && r.label == *label)
            .collect();
        if pool.len() < shots {
            return Err(Error::InsufficientSupport {
                label: label.raw_name.clone(),
                available: pool.len(),
                requested: shots,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &label.raw_name));
        pool.shuffle(&mut rng);
        support.extend(pool.into_iter().take(shots).cloned());
    }

    let seen_train: Vec<UtteranceRecord> = records
        .iter()
        .filter(|r| r.source_split == super::Split::Train && partition.seen.contains(&r.label))
        .cloned()
        .collect();

    let support_ids: BTreeSet<&str> = support.iter().map(|r| r.id.as_str()).collect();
    let query: Vec<UtteranceRecord> = records
        .iter()
        .filter(|r| {
            r.source_split == super::Split::Test
                && partition.contains(&r.label)
                && !support_ids.contains(r.id.as_str())
        })
        .cloned()
        .collect();

    Ok(SplitBundle {
        seen_train,
        support,
        query,
        partition: partition.clone(),
        shots,
    })
}
