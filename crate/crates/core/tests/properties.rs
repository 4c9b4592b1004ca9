//! Property tests for the module invariants.

use std::collections::BTreeSet;

use proptest::prelude::*;

use nli_fsl::corpus::{
    build_splits, make_partition, IntentLabel, PartitionPolicy, Split, UtteranceRecord,
};
use nli_fsl::encoder::{encode_pair, Tokenizer, WhitespaceTokenizer, SEP_ID, START_ID};
use nli_fsl::pairs::{downsample_negatives, to_pairs, EntailmentTarget};

fn label_names(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::btree_set("[a-z]{2,8}(_[a-z]{2,8})?", 2..=max)
        .prop_map(|s| s.into_iter().collect())
}

proptest! {
    #[test]
    fn partition_disjointness_and_joint_coverage(
        names in label_names(20),
        seed in any::<u64>(),
    ) {
        let inventory: BTreeSet<IntentLabel> =
            names.iter().map(|n| IntentLabel::new(n).unwrap()).collect();
        let n_novel = 1 + seed as usize % (inventory.len() - 1);
        let partition =
            make_partition(&inventory, &PartitionPolicy::RandomCount(n_novel), seed).unwrap();
        prop_assert!(partition.seen.intersection(&partition.novel).next().is_none());
        prop_assert_eq!(partition.novel.len(), n_novel);
        prop_assert_eq!(partition.joint(), inventory);
    }

    #[test]
    fn pair_grid_counts_and_key_uniqueness(
        names in label_names(8),
        n_records in 0usize..30,
        seed in any::<u64>(),
    ) {
        let space: BTreeSet<IntentLabel> =
            names.iter().map(|n| IntentLabel::new(n).unwrap()).collect();
        let labels: Vec<&IntentLabel> = space.iter().collect();
        let records: Vec<UtteranceRecord> = (0..n_records)
            .map(|i| {
                UtteranceRecord::new(
                    &format!("train:{i}"),
                    &format!("utterance {i}"),
                    labels[(seed as usize + i) % labels.len()].clone(),
                    Split::Train,
                )
                .unwrap()
            })
            .collect();
        let ds = to_pairs(&records, &space).unwrap();
        prop_assert_eq!(ds.pairs.len(), n_records * space.len());
        prop_assert_eq!(ds.count_entailed(), n_records);
        let keys: BTreeSet<(&str, &str)> = ds
            .pairs
            .iter()
            .map(|p| (p.origin_id.as_str(), p.hypothesis_label.raw_name.as_str()))
            .collect();
        prop_assert_eq!(keys.len(), ds.pairs.len());
        for p in &ds.pairs {
            prop_assert_eq!(
                p.target == EntailmentTarget::Entailed,
                records.iter().find(|r| r.id == p.origin_id).unwrap().label
                    == p.hypothesis_label
            );
        }
    }

    #[test]
    fn downsampling_only_changes_membership(
        names in label_names(6),
        n_records in 1usize..20,
        ratio in 0.25f64..4.0,
        seed in any::<u64>(),
    ) {
        let space: BTreeSet<IntentLabel> =
            names.iter().map(|n| IntentLabel::new(n).unwrap()).collect();
        let labels: Vec<&IntentLabel> = space.iter().collect();
        let records: Vec<UtteranceRecord> = (0..n_records)
            .map(|i| {
                UtteranceRecord::new(
                    &format!("train:{i}"),
                    &format!("utterance {i}"),
                    labels[i % labels.len()].clone(),
                    Split::Train,
                )
                .unwrap()
            })
            .collect();
        let full = to_pairs(&records, &space).unwrap();
        let down = downsample_negatives(&full, ratio, seed).unwrap();

        // every retained pair is literally one of the originals
        let originals: BTreeSet<String> =
            full.pairs.iter().map(|p| serde_json::to_string(p).unwrap()).collect();
        for p in &down.pairs {
            prop_assert!(originals.contains(&serde_json::to_string(p).unwrap()));
        }
        // the entailed subset is untouched
        let entailed = |ds: &nli_fsl::pairs::PairDataset| -> Vec<String> {
            ds.pairs
                .iter()
                .filter(|p| p.target == EntailmentTarget::Entailed)
                .map(|p| serde_json::to_string(p).unwrap())
                .collect()
        };
        prop_assert_eq!(entailed(&full), entailed(&down));
    }

    #[test]
    fn support_counts_and_disjointness_hold_for_all_seeds(
        shots in 0usize..4,
        split_seed in any::<u64>(),
        partition_seed in any::<u64>(),
    ) {
        let names = ["alpha", "bravo", "charlie", "delta", "echo"];
        let mut records = Vec::new();
        for (li, name) in names.iter().enumerate() {
            let label = IntentLabel::new(name).unwrap();
            for i in 0..6 {
                let split = if i < 4 { Split::Train } else { Split::Test };
                records.push(
                    UtteranceRecord::new(
                        &format!("{split}:{li}-{i}"),
                        &format!("{name} sample {i}"),
                        label.clone(),
                        split,
                    )
                    .unwrap(),
                );
            }
        }
        let inventory: BTreeSet<IntentLabel> =
            names.iter().map(|n| IntentLabel::new(n).unwrap()).collect();
        let partition =
            make_partition(&inventory, &PartitionPolicy::RandomCount(2), partition_seed).unwrap();
        let bundle = build_splits(&records, &partition, shots, split_seed, shots.max(1)).unwrap();
        for novel in &partition.novel {
            prop_assert_eq!(
                bundle.support.iter().filter(|r| r.label == *novel).count(),
                shots
            );
        }
        let support: BTreeSet<&String> = bundle.support.iter().map(|r| &r.id).collect();
        let query: BTreeSet<&String> = bundle.query.iter().map(|r| &r.id).collect();
        prop_assert!(support.is_disjoint(&query));
        prop_assert!(bundle.seen_train.iter().all(|r| partition.seen.contains(&r.label)));
    }

    #[test]
    fn encoded_pairs_keep_their_marker_structure(
        premise in "[a-z ]{0,200}",
        hypothesis in "[a-z]{1,12}( [a-z]{1,12}){0,3}",
        max_len in 8usize..96,
    ) {
        let tokenizer = WhitespaceTokenizer;
        match encode_pair(&premise, &hypothesis, &tokenizer, max_len) {
            Ok(encoded) => {
                prop_assert!(encoded.length <= max_len);
                prop_assert_eq!(encoded.token_ids.len(), encoded.length);
                prop_assert_eq!(encoded.segment_ids.len(), encoded.length);
                prop_assert_eq!(encoded.token_ids[0], START_ID);
                prop_assert_eq!(*encoded.token_ids.last().unwrap(), SEP_ID);
                let sep_count =
                    encoded.token_ids.iter().filter(|&&t| t == SEP_ID).count();
                let start_count =
                    encoded.token_ids.iter().filter(|&&t| t == START_ID).count();
                prop_assert_eq!(sep_count, 2);
                prop_assert_eq!(start_count, 1);
                // segment ids: a block of 0s then a block of 1s
                let first_one = encoded.segment_ids.iter().position(|&s| s == 1);
                if let Some(pos) = first_one {
                    prop_assert!(encoded.segment_ids[pos..].iter().all(|&s| s == 1));
                    // the hypothesis block starts right after the first separator
                    let first_sep = encoded
                        .token_ids
                        .iter()
                        .position(|&t| t == SEP_ID)
                        .unwrap();
                    prop_assert_eq!(pos, first_sep + 1);
                }
            }
            Err(_) => {
                // the only legal refusal: the hypothesis alone cannot fit
                let n_hypothesis = tokenizer.tokenize(&hypothesis).len();
                prop_assert!(n_hypothesis > max_len - 3);
            }
        }
    }
}
