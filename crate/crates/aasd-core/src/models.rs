//! Target-model contract plus two deterministic toy implementations and the
//! greedy autoregressive reference decoder.
//!
//! Models are immutable after construction and safe to share across
//! concurrent sessions. All distributions returned here are full and valid.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::drafter::TreeMask;
use crate::types::{Distribution, DistributionError, TokenId, TokenSeq};

/// The target model seen by the engine: deterministic full next-token
/// distributions, per-position prefill, and a masked pass over a draft tree.
///
/// Contract: identical inputs yield identical distributions, and
/// `forward_tree` over a linear chain equals per-step `prefill` of the
/// concatenated sequence at the matching positions.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Full distribution over the next token given `context`.
    fn next_dist(&self, context: &[TokenId]) -> Distribution;

    /// Distribution at every position of `tokens`: entry `i` is conditioned
    /// on `tokens[..=i]`.
    fn prefill(&self, tokens: &[TokenId]) -> Vec<Distribution> {
        (1..=tokens.len())
            .map(|end| self.next_dist(&tokens[..end]))
            .collect()
    }

    /// One parallel pass over a linearized draft tree.
    ///
    /// `node_tokens[0]` is the tree root (the last committed token), which is
    /// excluded from `prefix`. Each node's distribution is conditioned on the
    /// prefix plus the node's ancestor closure, read off the mask row in
    /// insertion order; sibling branches are invisible to each other.
    fn forward_tree(
        &self,
        prefix: &[TokenId],
        node_tokens: &[TokenId],
        mask: &TreeMask,
    ) -> Vec<Distribution> {
        debug_assert_eq!(node_tokens.len(), mask.size());
        let mut out = Vec::with_capacity(node_tokens.len());
        let mut context = prefix.to_vec();
        for i in 0..node_tokens.len() {
            context.truncate(prefix.len());
            for (j, &token) in node_tokens.iter().enumerate().take(i + 1) {
                if mask.allowed(i, j) {
                    context.push(token);
                }
            }
            out.push(self.next_dist(&context));
        }
        out
    }
}

impl LanguageModel for Box<dyn LanguageModel> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn next_dist(&self, context: &[TokenId]) -> Distribution {
        (**self).next_dist(context)
    }
    fn prefill(&self, tokens: &[TokenId]) -> Vec<Distribution> {
        (**self).prefill(tokens)
    }
    fn forward_tree(
        &self,
        prefix: &[TokenId],
        node_tokens: &[TokenId],
        mask: &TreeMask,
    ) -> Vec<Distribution> {
        (**self).forward_tree(prefix, node_tokens, mask)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model was trained on an empty token stream")]
    UntrainedModel,
    #[error("token {token} is outside vocab of size {vocab_size}")]
    TokenOutOfVocab { token: TokenId, vocab_size: usize },
    #[error("vocab size must be positive")]
    EmptyVocab,
    #[error("ngram order must be positive")]
    ZeroOrder,
    #[error("smoothing constant must be finite and non-negative, got {0}")]
    BadSmoothing(f64),
    #[error("invalid distribution for context {context:?}: {source}")]
    InvalidRow {
        context: Vec<TokenId>,
        source: DistributionError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Lookup-table model: an explicit map from the last `window` tokens to a
/// full distribution, with a uniform fallback for unlisted contexts.
#[derive(Debug, Clone)]
pub struct TableModel {
    vocab_size: usize,
    window: usize,
    rows: HashMap<Vec<TokenId>, Distribution>,
    fallback: Distribution,
}

impl TableModel {
    pub fn new(vocab_size: usize, window: usize) -> Result<Self, ModelError> {
        if vocab_size == 0 {
            return Err(ModelError::EmptyVocab);
        }
        let uniform = vec![1.0 / vocab_size as f64; vocab_size];
        Ok(Self {
            vocab_size,
            window,
            rows: HashMap::new(),
            fallback: Distribution::full_over_vocab(uniform),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Register the distribution for an exact context window.
    pub fn insert_row(
        &mut self,
        context: Vec<TokenId>,
        dist: Distribution,
    ) -> Result<(), ModelError> {
        dist.validate().map_err(|source| ModelError::InvalidRow {
            context: context.clone(),
            source,
        })?;
        for &token in context.iter().chain(&dist.support) {
            if token as usize >= self.vocab_size {
                return Err(ModelError::TokenOutOfVocab {
                    token,
                    vocab_size: self.vocab_size,
                });
            }
        }
        self.rows.insert(context, dist);
        Ok(())
    }

    /// Load from the JSON table format:
    /// `{"vocab_size": N, "window": W, "rows": [{"context": [...],
    /// "support": [...], "probs": [...]}, ...]}`.
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct RowSpec {
            context: Vec<TokenId>,
            support: Vec<TokenId>,
            probs: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct TableSpec {
            vocab_size: usize,
            window: usize,
            rows: Vec<RowSpec>,
        }
        let spec: TableSpec =
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let mut model = Self::new(spec.vocab_size, spec.window)?;
        for row in spec.rows {
            model.insert_row(row.context, Distribution::full(row.support, row.probs))?;
        }
        Ok(model)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    fn effective_context<'a>(&self, context: &'a [TokenId]) -> &'a [TokenId] {
        let start = context.len().saturating_sub(self.window);
        &context[start..]
    }
}

impl LanguageModel for TableModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_dist(&self, context: &[TokenId]) -> Distribution {
        self.rows
            .get(self.effective_context(context))
            .unwrap_or(&self.fallback)
            .clone()
    }
}

/// Count-based n-gram model with add-k smoothing and fixed-order backoff.
///
/// `P(t | ctx) = (count(ctx, t) + k) / (count(ctx) + k * vocab_size)`.
/// The order is picked from the context length (shorter contexts use shorter
/// orders down to the unigram). An unseen context with `k > 0` degrades to
/// the uniform distribution through the formula itself; with `k = 0` it
/// backs off to the next shorter order.
#[derive(Debug, Clone)]
pub struct NGramLm {
    vocab_size: usize,
    order: usize,
    smoothing: f64,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

impl NGramLm {
    pub fn train(
        stream: &[TokenId],
        order: usize,
        smoothing: f64,
        vocab_size: usize,
    ) -> Result<Self, ModelError> {
        if order == 0 {
            return Err(ModelError::ZeroOrder);
        }
        if vocab_size == 0 {
            return Err(ModelError::EmptyVocab);
        }
        if !smoothing.is_finite() || smoothing < 0.0 {
            return Err(ModelError::BadSmoothing(smoothing));
        }
        if stream.is_empty() {
            return Err(ModelError::UntrainedModel);
        }
        for &token in stream {
            if token as usize >= vocab_size {
                return Err(ModelError::TokenOutOfVocab { token, vocab_size });
            }
        }
        let mut counts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
        for o in 1..=order {
            for target in (o - 1)..stream.len() {
                let context = stream[target - (o - 1)..target].to_vec();
                let entry = counts.entry(context).or_default();
                entry.total += 1;
                *entry.next.entry(stream[target]).or_insert(0) += 1;
            }
        }
        Ok(Self {
            vocab_size,
            order,
            smoothing,
            counts,
        })
    }

    /// Train from a text file of whitespace-separated token ids. When
    /// `vocab_size` is `None` it is inferred as `max(token) + 1`.
    pub fn train_from_file(
        path: impl AsRef<Path>,
        order: usize,
        smoothing: f64,
        vocab_size: Option<usize>,
    ) -> Result<Self, ModelError> {
        let stream = load_token_stream(path)?;
        let vocab = match vocab_size {
            Some(v) => v,
            None => stream.iter().max().map(|&m| m as usize + 1).unwrap_or(0),
        };
        Self::train(&stream, order, smoothing, vocab)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Resolve the counts row a context maps to, if any order has one.
    fn resolve(&self, context: &[TokenId]) -> Option<&ContextCounts> {
        let longest = (self.order - 1).min(context.len());
        for ctx_len in (0..=longest).rev() {
            let key = &context[context.len() - ctx_len..];
            match self.counts.get(key) {
                Some(row) => return Some(row),
                // With smoothing, the add-k formula already covers unseen
                // contexts (everything becomes uniform); only the unsmoothed
                // model keeps backing off in search of observed counts.
                None if self.smoothing > 0.0 => return None,
                None => continue,
            }
        }
        None
    }

    /// Smoothed probability of `token` after `context`.
    pub fn prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        let v = self.vocab_size as f64;
        match self.resolve(context) {
            Some(row) => {
                let count = row.next.get(&token).copied().unwrap_or(0) as f64;
                (count + self.smoothing) / (row.total as f64 + self.smoothing * v)
            }
            None => 1.0 / v,
        }
    }
}

impl LanguageModel for NGramLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_dist(&self, context: &[TokenId]) -> Distribution {
        let v = self.vocab_size as f64;
        let probs = match self.resolve(context) {
            Some(row) => {
                let denom = row.total as f64 + self.smoothing * v;
                let mut probs = vec![self.smoothing / denom; self.vocab_size];
                for (&token, &count) in &row.next {
                    probs[token as usize] = (count as f64 + self.smoothing) / denom;
                }
                probs
            }
            None => vec![1.0 / v; self.vocab_size],
        };
        Distribution::full_over_vocab(probs)
    }
}

/// Parse a whitespace-separated token-id stream.
pub fn load_token_stream(path: impl AsRef<Path>) -> Result<Vec<TokenId>, ModelError> {
    let text = std::fs::read_to_string(path)?;
    text.split_whitespace()
        .map(|word| {
            word.parse::<TokenId>()
                .map_err(|_| ModelError::Parse(format!("bad token id {word:?}")))
        })
        .collect()
}

/// Plain autoregressive greedy decoding: append the argmax of the model's
/// last-position distribution until the budget runs out or `eos` appears.
/// This is the reference any lossless decode must reproduce.
pub fn greedy_decode(
    model: &dyn LanguageModel,
    seq: &TokenSeq,
    max_new: usize,
    eos: Option<TokenId>,
) -> TokenSeq {
    let mut out = seq.clone();
    for _ in 0..max_new {
        let dist = model.next_dist(&out.tokens);
        let token = dist.argmax().expect("model produced an empty distribution");
        out.tokens.push(token);
        if Some(token) == eos {
            break;
        }
    }
    out
}
