//! Shared value types: token sequences, probability distributions, and the
//! engine configuration.
//!
//! Everything here is an immutable value with validation helpers; all
//! behavior lives in the modules that consume these types.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token ids are abstract non-negative integers below the model's vocab size.
/// Tokenization is a corpus-preparation concern; the engine never interprets
/// token values.
pub type TokenId = u32;

/// A token sequence with a marker separating the input context from the
/// generated continuation: `tokens[..prompt_len]` is the prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<TokenId>,
    pub prompt_len: usize,
}

impl TokenSeq {
    /// Wrap a prompt; nothing has been generated yet.
    pub fn from_prompt(tokens: Vec<TokenId>) -> Self {
        let prompt_len = tokens.len();
        Self { tokens, prompt_len }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The generated continuation (everything past the prompt).
    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[self.prompt_len..]
    }

    pub fn validate(&self, vocab_size: usize) -> Result<(), TokenSeqError> {
        if self.prompt_len > self.tokens.len() {
            return Err(TokenSeqError::PromptLenOutOfRange {
                prompt_len: self.prompt_len,
                len: self.tokens.len(),
            });
        }
        for (index, &token) in self.tokens.iter().enumerate() {
            if token as usize >= vocab_size {
                return Err(TokenSeqError::TokenOutOfVocab {
                    index,
                    token,
                    vocab_size,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenSeqError {
    #[error("prompt_len {prompt_len} exceeds sequence length {len}")]
    PromptLenOutOfRange { prompt_len: usize, len: usize },
    #[error("token {token} at index {index} is outside vocab of size {vocab_size}")]
    TokenOutOfVocab {
        index: usize,
        token: TokenId,
        vocab_size: usize,
    },
}

/// Whether a distribution covers its full mass or only the top-K slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Full,
    TruncatedTopK,
}

/// A probability vector over an explicit token support.
///
/// Full distributions sum to 1 (within 1e-9). Truncated distributions keep
/// only the highest-probability entries, in non-increasing order, and may sum
/// to less than 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub support: Vec<TokenId>,
    pub probs: Vec<f64>,
    pub kind: DistributionKind,
}

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

impl Distribution {
    /// Full distribution over the contiguous vocab `0..probs.len()`.
    pub fn full_over_vocab(probs: Vec<f64>) -> Self {
        let support = (0..probs.len() as TokenId).collect();
        Self {
            support,
            probs,
            kind: DistributionKind::Full,
        }
    }

    pub fn full(support: Vec<TokenId>, probs: Vec<f64>) -> Self {
        Self {
            support,
            probs,
            kind: DistributionKind::Full,
        }
    }

    pub fn truncated(support: Vec<TokenId>, probs: Vec<f64>) -> Self {
        Self {
            support,
            probs,
            kind: DistributionKind::TruncatedTopK,
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Probability of `token`; 0 when outside the support.
    pub fn prob_of(&self, token: TokenId) -> f64 {
        self.support
            .iter()
            .position(|&t| t == token)
            .map_or(0.0, |i| self.probs[i])
    }

    /// Highest probability in the distribution (0 for an empty support).
    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// The highest-probability token; ties break toward the lowest token id.
    pub fn argmax(&self) -> Option<TokenId> {
        let mut best: Option<(TokenId, f64)> = None;
        for (&token, &prob) in self.support.iter().zip(&self.probs) {
            best = match best {
                None => Some((token, prob)),
                Some((bt, bp)) => {
                    if prob > bp || (prob == bp && token < bt) {
                        Some((token, prob))
                    } else {
                        Some((bt, bp))
                    }
                }
            };
        }
        best.map(|(t, _)| t)
    }

    /// 1-based rank of `token` by probability, ties toward the lowest id.
    /// `None` when the token is outside the support.
    pub fn rank_of(&self, token: TokenId) -> Option<usize> {
        let i = self.support.iter().position(|&t| t == token)?;
        let (p, id) = (self.probs[i], self.support[i]);
        let higher = self
            .support
            .iter()
            .zip(&self.probs)
            .filter(|&(&t, &q)| q > p || (q == p && t < id))
            .count();
        Some(higher + 1)
    }

    /// Truncate to the `k` highest-probability entries (ties toward the
    /// lowest id), producing a valid top-K distribution.
    pub fn top_k(&self, k: usize) -> Distribution {
        let mut entries: Vec<(TokenId, f64)> = self
            .support
            .iter()
            .copied()
            .zip(self.probs.iter().copied())
            .collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        entries.truncate(k);
        let (support, probs) = entries.into_iter().unzip();
        Distribution::truncated(support, probs)
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        if self.support.len() != self.probs.len() {
            return Err(DistributionError::LengthMismatch {
                support: self.support.len(),
                probs: self.probs.len(),
            });
        }
        for (index, &prob) in self.probs.iter().enumerate() {
            if !prob.is_finite() || prob < 0.0 {
                return Err(DistributionError::NegativeProb { index, prob });
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(self.support.len());
        for &token in &self.support {
            if !seen.insert(token) {
                return Err(DistributionError::DuplicateSupport { token });
            }
        }
        let sum: f64 = self.probs.iter().sum();
        match self.kind {
            DistributionKind::Full => {
                if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                    return Err(DistributionError::NonNormalized { sum });
                }
            }
            DistributionKind::TruncatedTopK => {
                if sum > 1.0 + NORMALIZATION_TOLERANCE {
                    return Err(DistributionError::NonNormalized { sum });
                }
                for index in 1..self.probs.len() {
                    if self.probs[index] > self.probs[index - 1] {
                        return Err(DistributionError::TruncatedOrder { index });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("probability mass violates the normalization bound (sum = {sum})")]
    NonNormalized { sum: f64 },
    #[error("negative or non-finite probability {prob} at index {index}")]
    NegativeProb { index: usize, prob: f64 },
    #[error("duplicate token {token} in support")]
    DuplicateSupport { token: TokenId },
    #[error("truncated probabilities increase at index {index}")]
    TruncatedOrder { index: usize },
    #[error("support has {support} entries but probs has {probs}")]
    LengthMismatch { support: usize, probs: usize },
}

/// How draft nodes are accepted against the verification distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMode {
    /// Accept only the greedy (argmax) token. Lossless.
    Strict,
    /// Accept any token whose probability reaches the fixed threshold.
    FixedThreshold(f64),
    /// Accept any token ranked within the top k.
    TopK(usize),
    /// Accept tokens above an entropy-adaptive threshold; drafts copied from
    /// generated context still verify strictly.
    Adaptive,
}

/// Tunables for one decode session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Length of retrieved n-gram candidates.
    pub ngram_len: usize,
    /// Longest suffix key probed in the draft pool.
    pub max_key_len: usize,
    /// Shortest suffix key probed; single-token keys can be noisy.
    pub min_key_len: usize,
    /// Extra tokens sampled per poorly aligned draft position.
    pub max_expansion: usize,
    /// Entries kept per position in the alignment cache.
    pub cache_topk: usize,
    /// Entropy weight in the adaptive threshold.
    pub alpha: f64,
    /// Base value of the adaptive threshold.
    pub beta: f64,
    pub verification_mode: VerificationMode,
    /// Retrieval positions kept per lookup, preferring the most recent.
    pub max_candidates: usize,
    pub max_new_tokens: usize,
    /// End-of-sequence token; `None` means `vocab_size - 1`.
    pub eos_token: Option<TokenId>,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            ngram_len: 6,
            max_key_len: 6,
            min_key_len: 1,
            max_expansion: 2,
            cache_topk: 8,
            alpha: 0.1,
            beta: 0.1,
            verification_mode: VerificationMode::Adaptive,
            max_candidates: 4,
            max_new_tokens: 256,
            eos_token: None,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ngram_len == 0 {
            return Err(ConfigError::ZeroCount("ngram_len"));
        }
        if self.max_key_len == 0 {
            return Err(ConfigError::ZeroCount("max_key_len"));
        }
        if self.min_key_len == 0 || self.min_key_len > self.max_key_len {
            return Err(ConfigError::BadKeyRange {
                min: self.min_key_len,
                max: self.max_key_len,
            });
        }
        if self.cache_topk == 0 {
            return Err(ConfigError::ZeroCount("cache_topk"));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(ConfigError::BadScalar("alpha", self.alpha));
        }
        if !self.beta.is_finite() || !(0.0..=1.0).contains(&self.beta) {
            return Err(ConfigError::BadScalar("beta", self.beta));
        }
        match self.verification_mode {
            VerificationMode::FixedThreshold(delta) if !delta.is_finite() || delta < 0.0 => {
                Err(ConfigError::BadScalar("fixed threshold", delta))
            }
            VerificationMode::TopK(0) => Err(ConfigError::ZeroCount("top-k")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    ZeroCount(&'static str),
    #[error("min_key_len {min} must be in 1..=max_key_len ({max})")]
    BadKeyRange { min: usize, max: usize },
    #[error("{0} out of range: {1}")]
    BadScalar(&'static str, f64),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_symmetric_distribution() {
        let d = Distribution::full(vec![0, 1], vec![0.5, 0.5]);
        assert_eq!(d.validate(), Ok(()));
    }

    #[test]
    fn non_normalized_full_rejected() {
        // sum = 1.1 violates the bound
        let d = Distribution::full(vec![0, 1], vec![0.7, 0.4]);
        assert!(matches!(
            d.validate(),
            Err(DistributionError::NonNormalized { .. })
        ));
    }

    #[test]
    fn negative_prob_rejected_before_normalization() {
        let d = Distribution::full(vec![0, 1], vec![-0.1, 1.1]);
        assert!(matches!(
            d.validate(),
            Err(DistributionError::NegativeProb { .. })
        ));
    }

    #[test]
    fn duplicate_support_rejected() {
        let d = Distribution::full(vec![3, 3], vec![0.5, 0.5]);
        assert_eq!(
            d.validate(),
            Err(DistributionError::DuplicateSupport { token: 3 })
        );
    }

    #[test]
    fn truncated_must_be_sorted() {
        let d = Distribution::truncated(vec![0, 1], vec![0.2, 0.3]);
        assert_eq!(
            d.validate(),
            Err(DistributionError::TruncatedOrder { index: 1 })
        );
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_id() {
        let d = Distribution::full(vec![5, 2, 9], vec![0.4, 0.4, 0.2]);
        assert_eq!(d.argmax(), Some(2));
    }

    #[test]
    fn rank_counts_strictly_higher_and_tied_lower_ids() {
        let d = Distribution::full(vec![0, 1, 2, 3], vec![0.4, 0.3, 0.3, 0.0]);
        assert_eq!(d.rank_of(0), Some(1));
        assert_eq!(d.rank_of(1), Some(2));
        assert_eq!(d.rank_of(2), Some(3)); // tied with 1, higher id
        assert_eq!(d.rank_of(3), Some(4));
        assert_eq!(d.rank_of(7), None);
    }

    #[test]
    fn top_k_orders_by_prob_then_id() {
        let d = Distribution::full(vec![0, 1, 2, 3], vec![0.1, 0.4, 0.4, 0.1]);
        let t = d.top_k(3);
        assert_eq!(t.support, vec![1, 2, 0]);
        assert_eq!(t.probs, vec![0.4, 0.4, 0.1]);
        assert_eq!(t.validate(), Ok(()));
    }

    #[test]
    fn token_seq_boundary() {
        let seq = TokenSeq {
            tokens: vec![1, 2, 3],
            prompt_len: 2,
        };
        assert_eq!(seq.generated(), &[3]);
        assert_eq!(seq.validate(8), Ok(()));
        assert!(seq.validate(3).is_err());
        let bad = TokenSeq {
            tokens: vec![1],
            prompt_len: 2,
        };
        assert!(matches!(
            bad.validate(8),
            Err(TokenSeqError::PromptLenOutOfRange { .. })
        ));
    }

    #[test]
    fn config_defaults_validate() {
        assert_eq!(EngineConfig::default().validate(), Ok(()));
    }

    #[test]
    fn config_rejects_bad_key_range() {
        let cfg = EngineConfig {
            min_key_len: 7,
            ..EngineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_full_distribution() -> impl Strategy<Value = Distribution> {
            // Random positive weights, normalized to a valid full distribution.
            proptest::collection::vec(1e-6..1.0f64, 1..32).prop_map(|weights| {
                let sum: f64 = weights.iter().sum();
                Distribution::full_over_vocab(weights.into_iter().map(|w| w / sum).collect())
            })
        }

        proptest! {
            #[test]
            fn serialization_round_trips_bit_identically(d in arb_full_distribution()) {
                prop_assert_eq!(d.validate(), Ok(()));
                let json = serde_json::to_string(&d).unwrap();
                let back: Distribution = serde_json::from_str(&json).unwrap();
                prop_assert_eq!(back.support, d.support);
                for (a, b) in back.probs.iter().zip(&d.probs) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
                prop_assert_eq!(back.kind, d.kind);
            }

            #[test]
            fn token_seq_round_trips(tokens in proptest::collection::vec(0u32..10_000, 0..64)) {
                let prompt_len = tokens.len() / 2;
                let seq = TokenSeq { tokens, prompt_len };
                let json = serde_json::to_string(&seq).unwrap();
                let back: TokenSeq = serde_json::from_str(&json).unwrap();
                prop_assert_eq!(back, seq);
            }

            #[test]
            fn truncation_always_validates(d in arb_full_distribution(), k in 1usize..40) {
                prop_assert_eq!(d.top_k(k).validate(), Ok(()));
            }
        }
    }
}
