//! Tokenization and pair encoding.

use crate::error::{Error, Result};
use crate::hashing::fnv1a64;

/// Sequence-start marker id.
pub const START_ID: u32 = 1;
/// Separator marker id.
pub const SEP_ID: u32 = 2;
/// First id available for real tokens.
const TOKEN_ID_BASE: u32 = 3;
const TOKEN_ID_SPACE: u32 = u32::MAX - TOKEN_ID_BASE;

pub trait Tokenizer: Send + Sync {
    fn id(&self) -> &'static str;
    fn tokenize(&self, text: &str) -> Vec<String>;

    /// Stable integer id for a token; markers occupy ids below
    /// `TOKEN_ID_BASE`.
    fn token_id(&self, token: &str) -> u32 {
        TOKEN_ID_BASE + (fnv1a64(token) % u64::from(TOKEN_ID_SPACE)) as u32
    }
}

/// Lowercasing whitespace tokenizer; keeps alphanumerics and apostrophes,
/// treats everything else as a boundary.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn id(&self) -> &'static str {
        "whitespace-fnv-v1"
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        let lowered = text.to_lowercase();
        lowered
            .split(|c: char| !(c.is_alphanumeric() || c == '\''))
            .filter(|t| !t.is_empty())
            .map(|t| t.to_string())
            .collect()
    }
}

/// A tokenized premise/hypothesis pair in the
/// `⟨start⟩ premise ⟨sep⟩ hypothesis ⟨sep⟩` layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub token_ids: Vec<u32>,
    /// 0 over the start marker, premise, and first separator; 1 over the
    /// hypothesis and final separator.
    pub segment_ids: Vec<u8>,
    pub length: usize,
}

/// Encode a pair, truncating premise tokens from the tail when the budget
/// is exceeded. Hypotheses (label names) are never truncated.
pub fn encode_pair(
    premise: &str,
    hypothesis: &str,
    tokenizer: &dyn Tokenizer,
    max_len: usize,
) -> Result<EncodedPair> {
    if max_len < 8 {
        return Err(Error::Validation(format!("max_len must be at least 8, got {max_len}")));
    }
    let premise_tokens = tokenizer.tokenize(premise);
    let hypothesis_tokens = tokenizer.tokenize(hypothesis);
    // 3 marker positions: start + two separators.
    let budget = max_len - 3;
    if hypothesis_tokens.len() > budget {
        return Err(Error::Validation(format!(
            "hypothesis '{hypothesis}' has {} tokens but only {budget} fit under max_len {max_len}",
            hypothesis_tokens.len()
        )));
    }
    let premise_budget = budget - hypothesis_tokens.len();
    let kept_premise = &premise_tokens[..premise_tokens.len().min(premise_budget)];

    let mut token_ids = Vec::with_capacity(kept_premise.len() + hypothesis_tokens.len() + 3);
    let mut segment_ids = Vec::with_capacity(token_ids.capacity());
    token_ids.push(START_ID);
    segment_ids.push(0);
    for t in kept_premise {
        token_ids.push(tokenizer.token_id(t));
        segment_ids.push(0);
    }
    token_ids.push(SEP_ID);
    segment_ids.push(0);
    for t in &hypothesis_tokens {
        token_ids.push(tokenizer.token_id(t));
        segment_ids.push(1);
    }
    token_ids.push(SEP_ID);
    segment_ids.push(1);

    let length = token_ids.len();
    debug_assert!(length <= max_len);
    Ok(EncodedPair { token_ids, segment_ids, length })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_strips_punctuation() {
        let t = WhitespaceTokenizer;
        assert_eq!(t.tokenize("Play My WORKOUT playlist!"), vec!["play", "my", "workout", "playlist"]);
        assert_eq!(t.tokenize("what's up?"), vec!["what's", "up"]);
        assert!(t.tokenize("!!! ...").is_empty());
    }

    #[test]
    fn token_ids_are_stable_and_clear_of_markers() {
        let t = WhitespaceTokenizer;
        assert_eq!(t.token_id("hello"), t.token_id("hello"));
        assert!(t.token_id("hello") >= 3);
        assert!(t.token_id("world") >= 3);
    }

    #[test]
    fn encode_counts_markers() {
        // 5 premise tokens + 2 hypothesis tokens -> 1 + 5 + 1 + 2 + 1 = 10
        let t = WhitespaceTokenizer;
        let enc = encode_pair("one two three four five", "alpha beta", &t, 128).unwrap();
        assert_eq!(enc.length, 10);
        assert_eq!(enc.token_ids[0], START_ID);
        assert_eq!(enc.token_ids[6], SEP_ID);
        assert_eq!(enc.token_ids[9], SEP_ID);
        assert_eq!(enc.token_ids.iter().filter(|&&id| id == START_ID).count(), 1);
        assert_eq!(enc.token_ids.iter().filter(|&&id| id == SEP_ID).count(), 2);
        assert_eq!(&enc.segment_ids[..7], &[0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&enc.segment_ids[7..], &[1, 1, 1]);
    }

    #[test]
    fn long_premise_is_tail_truncated() {
        let t = WhitespaceTokenizer;
        let premise: String =
            (0..200).map(|i| format!("tok{i}")).collect::<Vec<_>>().join(" ");
        let enc = encode_pair(&premise, "alpha beta", &t, 64).unwrap();
        // 64 - 3 markers - 2 hypothesis tokens = 59 premise tokens
        let premise_tokens = enc.segment_ids.iter().filter(|&&s| s == 0).count() - 2;
        assert_eq!(premise_tokens, 59);
        assert_eq!(enc.length, 64);
        // first premise token survives, the tail is dropped
        assert_eq!(enc.token_ids[1], t.token_id("tok0"));
    }

    #[test]
    fn oversized_hypothesis_is_rejected() {
        let t = WhitespaceTokenizer;
        let hypothesis: String =
            (0..200).map(|i| format!("lab{i}")).collect::<Vec<_>>().join(" ");
        let err = encode_pair("short premise", &hypothesis, &t, 64).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn tiny_max_len_is_rejected() {
        let t = WhitespaceTokenizer;
        assert!(encode_pair("a", "b", &t, 7).is_err());
        assert!(encode_pair("a", "b", &t, 8).is_ok());
    }
}
