//! Desk-scale synthetic corpora.
//!
//! Each template label owns a disjoint set of content words that also make
//! up its surface form, so an overlap-driven scorer can learn the
//! entailment signal. Fillers are shared across labels and carry no signal.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{IntentLabel, Split, UtteranceRecord};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;

/// Utterance patterns per label.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    entries: Vec<TemplateEntry>,
}

#[derive(Debug, Clone)]
struct TemplateEntry {
    raw_name: String,
    patterns: Vec<String>,
}

const FILLERS: &[&str] = &[
    "please",
    "right away",
    "for me",
    "when you can",
    "thanks",
    "as soon as possible",
    "if possible",
    "quickly",
];

impl TemplateBank {
    /// Build a bank, checking that every pattern contains every word of its
    /// label's surface form (the lexical-overlap requirement).
    pub fn new(entries: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut out = Vec::new();
        for (raw_name, patterns) in entries {
            if patterns.is_empty() {
                return Err(Error::Config(format!(
                    "template bank entry '{raw_name}' has no patterns"
                )));
            }
            let surface = super::default_surface_form(&raw_name);
            for p in &patterns {
                for word in surface.split_whitespace() {
                    if !p.split_whitespace().any(|t| t == word) {
                        return Err(Error::Config(format!(
                            "pattern '{p}' for label '{raw_name}' lacks surface word '{word}'"
                        )));
                    }
                }
            }
            out.push(TemplateEntry { raw_name, patterns });
        }
        Ok(TemplateBank { entries: out })
    }

    /// The bundled 12-label bank used by tests and the synthetic preset.
    pub fn builtin() -> Self {
        let raw: &[(&str, &[&str])] = &[
            ("play_music", &[
                "play music from my workout mix",
                "can you play music by daft punk",
                "play music i listened to yesterday",
            ]),
            ("set_alarm", &[
                "set alarm for six in the morning",
                "set alarm before my flight",
                "could you set alarm at noon",
            ]),
            ("book_table", &[
                "book table for two at eight",
                "book table at the italian spot",
                "i would like to book table downtown",
            ]),
            ("check_weather", &[
                "check weather in berlin tomorrow",
                "check weather before the hike",
                "check weather over the weekend",
            ]),
            ("transfer_funds", &[
                "transfer funds to my savings account",
                "transfer funds from checking",
                "i need to transfer funds abroad",
            ]),
            ("order_pizza", &[
                "order pizza with extra cheese",
                "order pizza from the corner place",
                "order pizza for the whole team",
            ]),
            ("find_recipe", &[
                "find recipe for lentil soup",
                "find recipe using leftover rice",
                "help me find recipe ideas tonight",
            ]),
            ("track_package", &[
                "track package from last week",
                "track package number nine nine one",
                "where can i track package progress",
            ]),
            ("rate_movie", &[
                "rate movie five stars",
                "rate movie we watched last night",
                "i want to rate movie reviews",
            ]),
            ("call_taxi", &[
                "call taxi to the airport",
                "call taxi for ten pm",
                "can you call taxi outside",
            ]),
            ("send_email", &[
                "send email to the landlord",
                "send email about the invoice",
                "draft and send email right now",
            ]),
            ("translate_phrase", &[
                "translate phrase into spanish",
                "translate phrase on this sign",
                "how do i translate phrase endings",
            ]),
        ];
        let entries = raw
            .iter()
            .map(|(name, pats)| {
                (name.to_string(), pats.iter().map(|p| p.to_string()).collect())
            })
            .collect();
        Self::new(entries).expect("builtin bank is well-formed")
    }

    pub fn capacity(&self) -> usize {
        self.entries.len()
    }
}

/// Generate a deterministic labeled corpus: `per_label` utterances for each
/// of the first `n_labels` bank labels. Every fourth record per label is a
/// test record, the rest are train.
pub fn generate_synthetic_corpus(
    n_labels: usize,
    per_label: usize,
    bank: &TemplateBank,
    seed: u64,
) -> Result<Vec<UtteranceRecord>> {
    if n_labels < 2 {
        return Err(Error::Validation("synthetic corpus needs at least 2 labels".into()));
    }
    if per_label < 2 {
        return Err(Error::Validation(
            "synthetic corpus needs at least 2 utterances per label".into(),
        ));
    }
    if n_labels > bank.capacity() {
        return Err(Error::Config(format!(
            "requested {n_labels} labels but the template bank holds {}",
            bank.capacity()
        )));
    }

    let mut records = Vec::with_capacity(n_labels * per_label);
    let mut counter = 0usize;
    for entry in &bank.entries[..n_labels] {
        let label = IntentLabel::new(&entry.raw_name)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &entry.raw_name));
        for i in 0..per_label {
            let pattern = &entry.patterns[i % entry.patterns.len()];
            let filler = FILLERS[rng.gen_range(0..FILLERS.len())];
            let text = if rng.gen_bool(0.5) {
                format!("{filler} {pattern}")
            } else {
                format!("{pattern} {filler}")
            };
            let split = if i % 4 == 3 { Split::Test } else { Split::Train };
            let id = format!("{split}:{counter}");
            records.push(UtteranceRecord::new(&id, &text, label.clone(), split)?);
            counter += 1;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn counts_and_determinism() {
        let bank = TemplateBank::builtin();
        let a = generate_synthetic_corpus(6, 20, &bank, 1).unwrap();
        assert_eq!(a.len(), 120);
        for entry in &bank.entries[..6] {
            assert_eq!(a.iter().filter(|r| r.label.raw_name == entry.raw_name).count(), 20);
        }
        let b = generate_synthetic_corpus(6, 20, &bank, 1).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(6, 20, &bank, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bank_capacity_is_enforced() {
        let small = TemplateBank::new(vec![
            ("alpha bravo".into(), vec!["alpha bravo call".into()]),
            ("charlie delta".into(), vec!["charlie delta call".into()]),
        ])
        .unwrap();
        let err = generate_synthetic_corpus(6, 4, &small, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn degenerate_sizes_are_rejected() {
        let bank = TemplateBank::builtin();
        assert!(generate_synthetic_corpus(1, 4, &bank, 0).is_err());
        assert!(generate_synthetic_corpus(4, 1, &bank, 0).is_err());
    }

    #[test]
    fn labels_are_textually_distinguishable() {
        // No label's surface words may occur in another label's utterances,
        // otherwise the overlap signal would be ambiguous.
        let bank = TemplateBank::builtin();
        let records = generate_synthetic_corpus(12, 12, &bank, 3).unwrap();
        for entry in &bank.entries {
            let surface_words: BTreeSet<&str> = entry.raw_name.split('_').collect();
            for r in records.iter().filter(|r| r.label.raw_name != entry.raw_name) {
                for w in r.text.split_whitespace() {
                    assert!(
                        !surface_words.contains(w),
                        "surface word '{w}' of '{}' appears in an utterance of '{}'",
                        entry.raw_name,
                        r.label.raw_name
                    );
                }
            }
        }
    }

    #[test]
    fn pattern_missing_surface_word_is_rejected() {
        let err = TemplateBank::new(vec![(
            "play_music".into(),
            vec!["start the tunes".into()],
        )])
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn splits_cover_train_and_test() {
        let bank = TemplateBank::builtin();
        let records = generate_synthetic_corpus(4, 8, &bank, 0).unwrap();
        for entry in &bank.entries[..4] {
            let train = records
                .iter()
                .filter(|r| r.label.raw_name == entry.raw_name && r.source_split == Split::Train)
                .count();
            let test = records
                .iter()
                .filter(|r| r.label.raw_name == entry.raw_name && r.source_split == Split::Test)
                .count();
            assert_eq!(train, 6);
            assert_eq!(test, 2);
        }
    }
}
