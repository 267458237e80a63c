//! The decode loop: retrieve draft candidates, alignment-sample, build the
//! tree, run one model pass, verify, commit, and keep the pool and alignment
//! cache in sync. One prefill pass up front, then exactly one model pass per
//! step.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drafter::{
    align_expand, collect_candidates, AlignmentCache, DraftTree, Expansion, Origin,
};
use crate::models::LanguageModel;
use crate::pool::{DraftPool, PoolError};
use crate::types::{ConfigError, EngineConfig, TokenId, TokenSeq, TokenSeqError};
use crate::verifier::verify_tree;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("prompt must be non-empty")]
    EmptyPrompt,
    #[error("generation already finished")]
    Finished,
    #[error("no step records to summarize")]
    EmptyRecords,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Seq(#[from] TokenSeqError),
}

/// Audit trail for one draft node of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAudit {
    pub token: TokenId,
    pub origin: Origin,
    pub source_pos: Option<usize>,
    pub prob: f64,
    pub threshold: Option<f64>,
    pub entropy: Option<f64>,
    pub accepted: bool,
    /// Whether the token matched the argmax of its cached source
    /// distribution; `None` when no distribution was cached there.
    pub aligned: Option<bool>,
}

/// Accounting for one decode step (one target-model pass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Draft nodes offered for verification (root excluded).
    pub drafted: usize,
    /// Draft tokens actually committed.
    pub accepted: usize,
    /// Tokens appended to the sequence this step (accepted + bonus unless
    /// the budget or an end-of-sequence token clipped the tail).
    pub emitted: usize,
    /// The bonus token, when it survived clipping.
    pub bonus: Option<TokenId>,
    pub nodes: Vec<NodeAudit>,
    pub wall_ms: f64,
}

/// One generation request: config, model handle, sequence, pool, alignment
/// cache and the per-step records. Construction runs the prefill pass.
pub struct Session {
    config: EngineConfig,
    model: Arc<dyn LanguageModel>,
    eos: TokenId,
    seq: TokenSeq,
    pool: DraftPool,
    cache: AlignmentCache,
    records: Vec<StepRecord>,
    eos_emitted: bool,
}

impl Session {
    pub fn new(
        model: Arc<dyn LanguageModel>,
        config: EngineConfig,
        prompt: Vec<TokenId>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if prompt.is_empty() {
            return Err(EngineError::EmptyPrompt);
        }
        let seq = TokenSeq::from_prompt(prompt);
        seq.validate(model.vocab_size())?;
        let eos = config
            .eos_token
            .unwrap_or(model.vocab_size() as TokenId - 1);
        let pool = DraftPool::build(&seq.tokens, config.max_key_len)?;
        let mut cache = AlignmentCache::new(config.cache_topk);
        cache.ingest_prefill(&model.prefill(&seq.tokens));
        Ok(Self {
            config,
            model,
            eos,
            seq,
            pool,
            cache,
            records: Vec::new(),
            eos_emitted: false,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn seq(&self) -> &TokenSeq {
        &self.seq
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn generated_len(&self) -> usize {
        self.seq.len() - self.seq.prompt_len
    }

    pub fn finished(&self) -> bool {
        self.eos_emitted || self.generated_len() >= self.config.max_new_tokens
    }

    /// One draft/verify/commit round. Exactly one model pass.
    pub fn step(&mut self) -> Result<&StepRecord, EngineError> {
        if self.finished() {
            return Err(EngineError::Finished);
        }
        let started = Instant::now();
        let committed_len = self.seq.len();

        // Draft: longest-suffix retrieval, then alignment sampling.
        let lookup = self.pool.lookup_longest(
            &self.seq.tokens,
            self.config.min_key_len,
            self.config.max_candidates,
        );
        let candidates = lookup
            .map(|m| collect_candidates(&self.seq, &m, self.config.ngram_len))
            .unwrap_or_default();
        let expansions: Vec<Vec<Expansion>> = candidates
            .iter()
            .map(|c| align_expand(c, &self.cache, self.config.max_expansion))
            .collect();
        let tree = DraftTree::build(
            self.seq.tokens[committed_len - 1],
            committed_len - 1,
            self.seq.prompt_len,
            &candidates,
            &expansions,
        );

        // Verify: one pass over the tree, then the longest accepted path.
        let mask = tree.attention_mask();
        let dists =
            self.model
                .forward_tree(&self.seq.tokens[..committed_len - 1], &tree.tokens(), &mask);
        let outcome = verify_tree(&tree, &dists, &self.config);

        let nodes: Vec<NodeAudit> = (1..tree.len())
            .map(|id| {
                let node = tree.node(id);
                let verdict = &outcome.verdicts[id];
                NodeAudit {
                    token: node.token,
                    origin: node.origin,
                    source_pos: node.source_pos,
                    prob: verdict.prob,
                    threshold: verdict.threshold,
                    entropy: verdict.entropy,
                    accepted: verdict.accepted,
                    aligned: node
                        .source_pos
                        .and_then(|pos| self.cache.get(pos))
                        .map(|d| d.argmax() == Some(node.token)),
                }
            })
            .collect();

        // Commit: accepted path plus bonus, clipped at the first
        // end-of-sequence token and at the remaining budget.
        let path_len = outcome.path.nodes.len();
        let mut emit: Vec<TokenId> = outcome
            .path
            .nodes
            .iter()
            .map(|&id| tree.node(id).token)
            .collect();
        emit.push(outcome.bonus);
        let eos_cut = emit
            .iter()
            .position(|&t| t == self.eos)
            .map_or(emit.len(), |p| p + 1);
        let budget = self.config.max_new_tokens - self.generated_len();
        let commit_len = eos_cut.min(budget);
        let committed = &emit[..commit_len];
        let accepted = commit_len.min(path_len);

        self.eos_emitted = committed.contains(&self.eos);
        self.seq.tokens.extend_from_slice(committed);
        self.pool.extend(&self.seq.tokens)?;

        // Cache only the distributions conditioned on committed tokens;
        // rejected branches were conditioned on tokens that never landed.
        self.cache.insert_full(committed_len, &dists[0]);
        for (offset, &id) in outcome.path.nodes[..accepted].iter().enumerate() {
            self.cache
                .insert_full(committed_len + offset + 1, &dists[id]);
        }

        self.records.push(StepRecord {
            drafted: tree.len() - 1,
            accepted,
            emitted: commit_len,
            bonus: (commit_len > path_len).then_some(outcome.bonus),
            nodes,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        Ok(self.records.last().expect("record just pushed"))
    }

    /// Run steps until the end-of-sequence token is emitted or the budget is
    /// spent.
    pub fn generate(&mut self) -> Result<(), EngineError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn metrics(&self) -> Result<RunMetrics, EngineError> {
        summarize(&self.records)
    }
}

/// Aggregated statistics over a run's step records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: usize,
    pub tokens_emitted: usize,
    /// Mean tokens committed per model pass (accepted + bonus).
    pub mal: f64,
    pub acc_rate_input: Option<f64>,
    pub acc_rate_generated: Option<f64>,
    pub acc_rate_sampled: Option<f64>,
    /// Acceptance rate of input-context drafts matching their cached argmax.
    pub aligned_acc: Option<f64>,
    /// Acceptance rate of input-context drafts that did not match it.
    pub misaligned_acc: Option<f64>,
    pub total_wall_ms: f64,
    pub tokens_per_sec: Option<f64>,
}

/// Fold step records into run-level metrics.
pub fn summarize(records: &[StepRecord]) -> Result<RunMetrics, EngineError> {
    if records.is_empty() {
        return Err(EngineError::EmptyRecords);
    }
    let steps = records.len();
    let tokens_emitted: usize = records.iter().map(|r| r.emitted).sum();
    let mal = tokens_emitted as f64 / steps as f64;

    let mut drafted = [0usize; 3];
    let mut accepted = [0usize; 3];
    let (mut aligned, mut aligned_ok) = (0usize, 0usize);
    let (mut misaligned, mut misaligned_ok) = (0usize, 0usize);
    for audit in records.iter().flat_map(|r| &r.nodes) {
        let class = match audit.origin {
            Origin::InputContext => 0,
            Origin::GeneratedContext => 1,
            Origin::AlignmentSampled => 2,
        };
        drafted[class] += 1;
        accepted[class] += usize::from(audit.accepted);
        if audit.origin == Origin::InputContext {
            match audit.aligned {
                Some(true) => {
                    aligned += 1;
                    aligned_ok += usize::from(audit.accepted);
                }
                Some(false) => {
                    misaligned += 1;
                    misaligned_ok += usize::from(audit.accepted);
                }
                None => {}
            }
        }
    }
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);

    let total_wall_ms: f64 = records.iter().map(|r| r.wall_ms).sum();
    Ok(RunMetrics {
        steps,
        tokens_emitted,
        mal,
        acc_rate_input: rate(accepted[0], drafted[0]),
        acc_rate_generated: rate(accepted[1], drafted[1]),
        acc_rate_sampled: rate(accepted[2], drafted[2]),
        aligned_acc: rate(aligned_ok, aligned),
        misaligned_acc: rate(misaligned_ok, misaligned),
        total_wall_ms,
        tokens_per_sec: (total_wall_ms > 0.0)
            .then(|| tokens_emitted as f64 / (total_wall_ms / 1e3)),
    })
}
