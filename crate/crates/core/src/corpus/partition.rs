//! Seen/novel label partitioning.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{IntentLabel, LabelSpacePartition, UtteranceRecord};
use crate::error::{Error, Result};

/// How the novel set is chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionPolicy {
    /// Explicit novel raw names (the canonical fixed splits).
    FixedList(Vec<String>),
    /// Sample `novel_count` labels uniformly with the partition seed.
    RandomCount(usize),
}

/// Partition a label inventory into disjoint seen/novel sets.
///
/// Random sampling shuffles the sorted inventory with a seeded generator, so
/// the result depends only on `(labels, n, seed)`. The shuffled order is also
/// what the incremental-label-space experiments take prefixes of, which keeps
/// their grid points nested.
pub fn make_partition(
    labels: &BTreeSet<IntentLabel>,
    policy: &PartitionPolicy,
    seed: u64,
) -> Result<LabelSpacePartition> {
    match policy {
        PartitionPolicy::FixedList(novel_names) => {
            let mut novel = BTreeSet::new();
            for name in novel_names {
                let found = labels.iter().find(|l| &l.raw_name == name);
                match found {
                    Some(l) => {
                        novel.insert(l.clone());
                    }
                    None => {
                        return Err(Error::Config(format!(
                            "novel label '{name}' is not in the dataset's label inventory"
                        )))
                    }
                }
            }
            let seen: BTreeSet<IntentLabel> =
                labels.iter().filter(|l| !novel.contains(*l)).cloned().collect();
            LabelSpacePartition::new(seen, novel, seed)
        }
        PartitionPolicy::RandomCount(n) => {
            if *n >= labels.len() {
                return Err(Error::Validation(format!(
                    "novel count {n} must be smaller than the label inventory ({})",
                    labels.len()
                )));
            }
            if *n == 0 {
                return Err(Error::Validation("novel count must be at least 1".into()));
            }
            let order = shuffled_labels(labels, seed);
            let novel: BTreeSet<IntentLabel> = order[..*n].iter().cloned().collect();
            let seen: BTreeSet<IntentLabel> = order[*n..].iter().cloned().collect();
            LabelSpacePartition::new(seen, novel, seed)
        }
    }
}

/// Deterministic shuffled order of a label inventory under `seed`.
pub fn shuffled_labels(labels: &BTreeSet<IntentLabel>, seed: u64) -> Vec<IntentLabel> {
    let mut order: Vec<IntentLabel> = labels.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

/// Drop classes with fewer than `min_class_size` total records before
/// partitioning. Returns the surviving records and labels.
pub fn filter_min_class_size(
    records: &[UtteranceRecord],
    min_class_size: usize,
) -> (Vec<UtteranceRecord>, BTreeSet<IntentLabel>) {
    let mut counts: BTreeMap<&IntentLabel, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(&r.label).or_insert(0) += 1;
    }
    let keep: BTreeSet<IntentLabel> = counts
        .iter()
        .filter(|(_, &c)| c >= min_class_size)
        .map(|(l, _)| (*l).clone())
        .collect();
    let surviving = records.iter().filter(|r| keep.contains(&r.label)).cloned().collect();
    (surviving, keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(names: &[&str]) -> BTreeSet<IntentLabel> {
        names.iter().map(|n| IntentLabel::new(n).unwrap()).collect()
    }

    #[test]
    fn snips_fixed_list_gives_four_seen_three_novel() {
        let inv = labels(&[
            "AddToPlaylist",
            "BookRestaurant",
            "GetWeather",
            "PlayMusic",
            "RateBook",
            "SearchCreativeWork",
            "SearchScreeningEvent",
        ]);
        let policy = PartitionPolicy::FixedList(vec![
            "RateBook".into(),
            "AddToPlaylist".into(),
            "PlayMusic".into(),
        ]);
        let p = make_partition(&inv, &policy, 0).unwrap();
        assert_eq!(p.seen.len(), 4);
        assert_eq!(p.novel.len(), 3);
        assert_eq!(p.joint().len(), 7);
    }

    #[test]
    fn random_count_is_reproducible_and_disjoint() {
        let inv: BTreeSet<IntentLabel> =
            (0..150).map(|i| IntentLabel::new(&format!("class_{i:03}")).unwrap()).collect();
        let a = make_partition(&inv, &PartitionPolicy::RandomCount(50), 0).unwrap();
        let b = make_partition(&inv, &PartitionPolicy::RandomCount(50), 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seen.len(), 100);
        assert_eq!(a.novel.len(), 50);
        assert!(a.seen.intersection(&a.novel).next().is_none());

        let c = make_partition(&inv, &PartitionPolicy::RandomCount(50), 1).unwrap();
        assert_ne!(a.novel, c.novel);
    }

    #[test]
    fn degenerate_counts_are_rejected() {
        let inv = labels(&["a", "b", "c"]);
        assert!(make_partition(&inv, &PartitionPolicy::RandomCount(3), 0).is_err());
        assert!(make_partition(&inv, &PartitionPolicy::RandomCount(0), 0).is_err());
    }

    #[test]
    fn fixed_list_with_unknown_name_is_a_config_error() {
        let inv = labels(&["a", "b"]);
        let err =
            make_partition(&inv, &PartitionPolicy::FixedList(vec!["zzz".into()]), 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn min_class_size_filter_drops_small_classes() {
        let mut records = Vec::new();
        for i in 0..12 {
            let label = IntentLabel::new(if i < 10 { "big" } else { "small" }).unwrap();
            records.push(
                UtteranceRecord::new(
                    &format!("train:{i}"),
                    &format!("utterance {i}"),
                    label,
                    super::super::Split::Train,
                )
                .unwrap(),
            );
        }
        let (survivors, kept) = filter_min_class_size(&records, 10);
        assert_eq!(kept.len(), 1);
        assert_eq!(survivors.len(), 10);
        assert!(survivors.iter().all(|r| r.label.raw_name == "big"));
    }
}
