//! Few-shot and zero-shot intent detection by entailment scoring.
//!
//! The pipeline: ingest labeled utterances ([`corpus`]), expand them into
//! premise/hypothesis entailment pairs ([`pairs`]), fine-tune a pluggable
//! pair scorer ([`encoder`]), predict intents by argmax over per-label
//! entailment scores ([`predict`]), and evaluate F1 across the four
//! few-/zero-shot regimes ([`eval`]) against prototype and encoder-distance
//! baselines ([`baselines`]). The `nli-fsl` binary drives the same
//! operations from the command line.
//!
//! A five-shot run on the built-in synthetic corpus, end to end:
//!
//! ```
//! use nli_fsl::corpus::{
//!     build_splits, generate_synthetic_corpus, label_inventory, make_partition,
//!     PartitionPolicy, TemplateBank,
//! };
//! use nli_fsl::encoder::{PairScorer, ToyPairScorer, TrainConfig};
//! use nli_fsl::eval::compute_f1;
//! use nli_fsl::pairs::{build_finetune_set, downsample_negatives, to_pairs};
//! use nli_fsl::predict::{predict_regime, regime_label_space, Regime};
//!
//! # fn main() -> nli_fsl::Result<()> {
//! let corpus = generate_synthetic_corpus(6, 24, &TemplateBank::builtin(), 1)?;
//! let labels = label_inventory(&corpus);
//! let partition = make_partition(&labels, &PartitionPolicy::RandomCount(2), 4)?;
//! let bundle = build_splits(&corpus, &partition, 5, 0, 5)?;
//!
//! // seen-class pairs (downsampled 2:1) plus support pairs over the novel space
//! let seen = downsample_negatives(&to_pairs(&bundle.seen_train, &partition.seen)?, 2.0, 0)?;
//! let support = to_pairs(&bundle.support, &partition.novel)?;
//! let train_set = build_finetune_set(&seen, Some(&support), 0);
//!
//! let mut scorer = ToyPairScorer::default();
//! scorer.fit(&train_set, &TrainConfig::toy_default())?;
//!
//! let predictions = predict_regime(&scorer, &bundle, Regime::Fsid)?;
//! let scores = compute_f1(&predictions, &regime_label_space(&bundle, Regime::Fsid))?;
//! assert!(scores.f1_macro > 0.9);
//! # Ok(())
//! # }
//! ```

pub mod baselines;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hashing;
pub mod pairs;
pub mod predict;

pub use error::{Error, Result};
