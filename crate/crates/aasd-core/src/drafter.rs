//! Draft construction: turning retrieved pool positions into n-gram
//! candidates, sampling aligned alternatives from cached distributions, and
//! merging everything into a draft tree with its ancestor-closure attention
//! mask.

use serde::{Deserialize, Serialize};

use crate::pool::LookupMatch;
use crate::types::{Distribution, TokenId, TokenSeq};

/// Where a draft token came from. Verification mode routing depends on it:
/// tokens copied from generated context always verify strictly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    InputContext,
    GeneratedContext,
    AlignmentSampled,
}

pub fn origin_of_copied(source_pos: usize, prompt_len: usize) -> Origin {
    if source_pos < prompt_len {
        Origin::InputContext
    } else {
        Origin::GeneratedContext
    }
}

/// Truncated next-token distributions per sequence position.
///
/// Entry `i` is the model's distribution conditioned on the first `i` tokens,
/// i.e. the distribution that predicted the token at index `i`. Prefill seeds
/// positions `1..=prompt_len`; distributions produced while verifying
/// committed tokens are ingested as generation proceeds.
#[derive(Debug, Clone)]
pub struct AlignmentCache {
    entries: Vec<Option<Distribution>>,
    topk: usize,
}

impl AlignmentCache {
    pub fn new(topk: usize) -> Self {
        Self {
            entries: Vec::new(),
            topk,
        }
    }

    /// Truncate a full distribution to the cache width and store it.
    pub fn insert_full(&mut self, position: usize, dist: &Distribution) {
        if position >= self.entries.len() {
            self.entries.resize(position + 1, None);
        }
        self.entries[position] = Some(dist.top_k(self.topk));
    }

    /// Seed positions `1..=tokens.len()` from a prefill pass.
    pub fn ingest_prefill(&mut self, dists: &[Distribution]) {
        for (offset, dist) in dists.iter().enumerate() {
            self.insert_full(offset + 1, dist);
        }
    }

    pub fn get(&self, position: usize) -> Option<&Distribution> {
        self.entries.get(position).and_then(Option::as_ref)
    }

    pub fn covered(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }
}

/// A retrieved n-gram: the continuation after one pool match, with the
/// sequence position each token was copied from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub tokens: Vec<TokenId>,
    pub source_pos: Vec<usize>,
}

/// Extra tokens for one candidate slot, produced by alignment sampling.
/// Tokens are ordered by rank (most probable first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expansion {
    pub slot: usize,
    pub tokens: Vec<TokenId>,
}

/// Materialize candidates from a lookup, most recent occurrence first.
/// Each candidate is the `ngram_len` tokens following the match, truncated at
/// the sequence end (never empty: final positions are dropped at lookup).
pub fn collect_candidates(
    seq: &TokenSeq,
    lookup: &LookupMatch,
    ngram_len: usize,
) -> Vec<Candidate> {
    lookup
        .positions
        .iter()
        .rev()
        .map(|&v| {
            let end = (v + ngram_len).min(seq.len());
            Candidate {
                tokens: seq.tokens[v..end].to_vec(),
                source_pos: (v..end).collect(),
            }
        })
        .collect()
}

/// Alignment sampling for one candidate.
///
/// For each slot, the cached distribution that predicted that position ranks
/// the retrieved token. Rank 1 means well aligned: nothing is added. Any
/// other rank emits the tokens ranked strictly above it, capped at
/// `max_expansion`; a token absent from the cache slice emits the top
/// `max_expansion`. Slots without a cached distribution are skipped.
pub fn align_expand(
    candidate: &Candidate,
    cache: &AlignmentCache,
    max_expansion: usize,
) -> Vec<Expansion> {
    if max_expansion == 0 {
        return Vec::new();
    }
    let mut expansions = Vec::new();
    for (slot, (&token, &source)) in candidate
        .tokens
        .iter()
        .zip(&candidate.source_pos)
        .enumerate()
    {
        let Some(dist) = cache.get(source) else {
            continue;
        };
        let above = match dist.rank_of(token) {
            Some(1) => continue,
            Some(rank) => rank - 1,
            None => dist.len(),
        };
        let take = above.min(max_expansion).min(dist.len());
        if take == 0 {
            continue;
        }
        expansions.push(Expansion {
            slot,
            tokens: dist.support[..take].to_vec(),
        });
    }
    expansions
}

/// One node of the draft tree. Node 0 is the root: the last committed token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DraftNode {
    pub token: TokenId,
    pub parent: Option<usize>,
    pub origin: Origin,
    pub source_pos: Option<usize>,
    pub depth: usize,
}

/// Trie of draft candidates rooted at the last committed token.
///
/// Nodes are stored in insertion order (parents always precede children):
/// candidate paths first, most recent occurrence first, then alignment
/// expansions by slot and rank. Duplicate `(parent, token)` children merge
/// into the first inserted node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DraftTree {
    nodes: Vec<DraftNode>,
    children: Vec<Vec<usize>>,
}

impl DraftTree {
    /// Merge candidates and their expansions into a tree.
    ///
    /// `root_source_pos` is the sequence position of the last committed
    /// token; `prompt_len` classifies copied tokens by origin. Expansions are
    /// indexed per candidate and attach as siblings of the candidate token at
    /// their slot; they never receive children, so alignment-sampled nodes
    /// stay leaves.
    pub fn build(
        root_token: TokenId,
        root_source_pos: usize,
        prompt_len: usize,
        candidates: &[Candidate],
        expansions: &[Vec<Expansion>],
    ) -> Self {
        debug_assert_eq!(candidates.len(), expansions.len());
        let mut tree = Self {
            nodes: vec![DraftNode {
                token: root_token,
                parent: None,
                origin: origin_of_copied(root_source_pos, prompt_len),
                source_pos: Some(root_source_pos),
                depth: 0,
            }],
            children: vec![Vec::new()],
        };

        // Candidate paths, in the given (recency) order.
        let mut path_nodes: Vec<Vec<usize>> = Vec::with_capacity(candidates.len());
        for candidate in candidates {
            let mut ids = Vec::with_capacity(candidate.tokens.len());
            let mut parent = 0;
            for (&token, &source) in candidate.tokens.iter().zip(&candidate.source_pos) {
                parent = tree.child_with_token(parent, token).unwrap_or_else(|| {
                    tree.push_node(
                        token,
                        parent,
                        origin_of_copied(source, prompt_len),
                        Some(source),
                    )
                });
                ids.push(parent);
            }
            path_nodes.push(ids);
        }

        // Alignment-sampled siblings, attached after every candidate path.
        for (candidate_idx, candidate_expansions) in expansions.iter().enumerate() {
            for expansion in candidate_expansions {
                let parent = if expansion.slot == 0 {
                    0
                } else {
                    path_nodes[candidate_idx][expansion.slot - 1]
                };
                for &token in &expansion.tokens {
                    if tree.child_with_token(parent, token).is_none() {
                        tree.push_node(token, parent, Origin::AlignmentSampled, None);
                    }
                }
            }
        }
        tree
    }

    /// Assemble a tree from explicit nodes. Intended for tests and external
    /// drivers; `nodes[0]` must be the root and parents must precede children.
    pub fn from_nodes(nodes: Vec<DraftNode>) -> Self {
        assert!(!nodes.is_empty(), "tree needs a root");
        assert_eq!(nodes[0].parent, None, "node 0 must be the root");
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, node) in nodes.iter().enumerate().skip(1) {
            let parent = node.parent.expect("non-root nodes need a parent");
            assert!(parent < i, "parents must precede children");
            children[parent].push(i);
        }
        Self { nodes, children }
    }

    fn push_node(
        &mut self,
        token: TokenId,
        parent: usize,
        origin: Origin,
        source_pos: Option<usize>,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(DraftNode {
            token,
            parent: Some(parent),
            origin,
            source_pos,
            depth: self.nodes[parent].depth + 1,
        });
        self.children.push(Vec::new());
        self.children[parent].push(id);
        id
    }

    fn child_with_token(&self, parent: usize, token: TokenId) -> Option<usize> {
        self.children[parent]
            .iter()
            .copied()
            .find(|&c| self.nodes[c].token == token)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, id: usize) -> &DraftNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[DraftNode] {
        &self.nodes
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    /// Linearized node tokens in insertion order.
    pub fn tokens(&self) -> Vec<TokenId> {
        self.nodes.iter().map(|n| n.token).collect()
    }

    /// Depth of the deepest node (root is 0).
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Node count per layer, layer 1 first (the root layer is implicit).
    pub fn layer_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.depth()];
        for node in &self.nodes[1..] {
            counts[node.depth - 1] += 1;
        }
        counts
    }

    /// Root-anchored token path ending at `id` (inclusive, root excluded).
    pub fn path_tokens(&self, id: usize) -> Vec<TokenId> {
        let mut path = Vec::new();
        let mut cur = id;
        while let Some(parent) = self.nodes[cur].parent {
            path.push(self.nodes[cur].token);
            cur = parent;
        }
        path.reverse();
        path
    }

    /// Ancestor-closure attention mask over the linearized nodes:
    /// `mask[i][j]` is true iff `j` is `i` or an ancestor of `i`. Every node
    /// additionally attends to the committed prefix, which lives outside this
    /// matrix.
    pub fn attention_mask(&self) -> TreeMask {
        let n = self.nodes.len();
        let mut bits = vec![false; n * n];
        for i in 0..n {
            let mut cur = i;
            bits[i * n + i] = true;
            while let Some(parent) = self.nodes[cur].parent {
                bits[i * n + parent] = true;
                cur = parent;
            }
        }
        TreeMask { n, bits }
    }
}

/// Boolean attention matrix over linearized draft nodes (row-major).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeMask {
    n: usize,
    bits: Vec<bool>,
}

impl TreeMask {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn allowed(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.bits[row * self.n..(row + 1) * self.n]
    }
}
