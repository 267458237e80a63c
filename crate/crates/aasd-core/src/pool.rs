//! Sliding-window n-gram index over the current sequence.
//!
//! Every window of length 1..=max_key_len is indexed under its token tuple;
//! the stored value is the window's end position (the key occupies
//! `seq[v-k..v]`). Lookups probe the longest suffix of the sequence first
//! and fall back to shorter keys, mirroring retrieval-based drafting.

use std::collections::HashMap;

use thiserror::Error;

use crate::types::TokenId;

/// Result of a suffix lookup: the matched key length and the end positions
/// of its earlier occurrences, in increasing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupMatch {
    pub key_len: usize,
    pub positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DraftPool {
    index: HashMap<Vec<TokenId>, Vec<usize>>,
    /// Copy of the indexed prefix, kept to enforce append-only updates.
    indexed: Vec<TokenId>,
    max_key_len: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("cannot index an empty sequence")]
    EmptySequence,
    #[error("indexed prefix changed at position {position}")]
    PrefixMutated { position: usize },
}

impl DraftPool {
    /// Index every window of `seq` with length 1..=`max_key_len`.
    pub fn build(seq: &[TokenId], max_key_len: usize) -> Result<Self, PoolError> {
        if seq.is_empty() {
            return Err(PoolError::EmptySequence);
        }
        let mut pool = Self {
            index: HashMap::new(),
            indexed: Vec::new(),
            max_key_len,
        };
        pool.append_windows(seq, 0);
        pool.indexed = seq.to_vec();
        Ok(pool)
    }

    /// Number of sequence tokens already indexed.
    pub fn indexed_len(&self) -> usize {
        self.indexed.len()
    }

    pub fn max_key_len(&self) -> usize {
        self.max_key_len
    }

    /// Positions recorded for an exact key, if any.
    pub fn positions(&self, key: &[TokenId]) -> Option<&[usize]> {
        self.index.get(key).map(Vec::as_slice)
    }

    pub fn key_count(&self) -> usize {
        self.index.len()
    }

    /// Index the windows that overlap the new suffix of `seq`. The already
    /// indexed prefix must be unchanged.
    pub fn extend(&mut self, seq: &[TokenId]) -> Result<(), PoolError> {
        let old_len = self.indexed.len();
        if seq.len() < old_len {
            return Err(PoolError::PrefixMutated {
                position: seq.len(),
            });
        }
        for (position, (&a, &b)) in self.indexed.iter().zip(seq).enumerate() {
            if a != b {
                return Err(PoolError::PrefixMutated { position });
            }
        }
        self.append_windows(seq, old_len);
        self.indexed.extend_from_slice(&seq[old_len..]);
        Ok(())
    }

    /// Insert every window whose end position lies in `old_len+1..=seq.len()`.
    fn append_windows(&mut self, seq: &[TokenId], old_len: usize) {
        for k in 1..=self.max_key_len {
            let first_end = (old_len + 1).max(k);
            for end in first_end..=seq.len() {
                let key = seq[end - k..end].to_vec();
                self.index.entry(key).or_default().push(end);
            }
        }
    }

    /// Find occurrences of the longest suffix of `seq` (bounded by
    /// `min_key_len..=max_key_len`) recorded in the index.
    ///
    /// Positions equal to `seq.len()` would yield an empty continuation and
    /// are dropped; if every position of a key length is dropped, shorter
    /// keys are probed. At most `max_candidates` positions are returned,
    /// preferring the most recent occurrences (ascending order preserved).
    pub fn lookup_longest(
        &self,
        seq: &[TokenId],
        min_key_len: usize,
        max_candidates: usize,
    ) -> Option<LookupMatch> {
        let longest = self.max_key_len.min(seq.len());
        for key_len in (min_key_len..=longest).rev() {
            let key = &seq[seq.len() - key_len..];
            let Some(positions) = self.index.get(key) else {
                continue;
            };
            let usable: Vec<usize> = positions
                .iter()
                .copied()
                .filter(|&v| v < seq.len())
                .collect();
            if usable.is_empty() {
                continue;
            }
            let keep_from = usable.len().saturating_sub(max_candidates);
            return Some(LookupMatch {
                key_len,
                positions: usable[keep_from..].to_vec(),
            });
        }
        None
    }
}
