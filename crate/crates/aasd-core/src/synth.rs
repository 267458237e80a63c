//! Seeded synthetic corpora for benchmarking and self-tests.
//!
//! A "branching world" gives every data token three successors at ring
//! offsets +1, +2 and +5 with fixed odds (0.6 / 0.3 / 0.1). Training streams
//! and item walks are sampled from the same world, so a smoothed n-gram
//! model trained on the stream predicts walks well but not perfectly:
//! roughly 40% of walk tokens take a non-greedy branch. The ring structure
//! keeps the greedy chain's period at the full data vocab — a greedy decoder
//! cannot fall into a short cycle and trivially self-copy its own output.
//! Copy-task items embed the walk (optionally corrupted) in the prompt,
//! followed by the walk's first tokens as the cue.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::CorpusItem;
use crate::types::TokenId;

/// Token-level transition structure with three weighted successors per token.
/// The last vocab id is reserved (an end-of-sequence slot) and never sampled.
#[derive(Debug, Clone)]
pub struct BranchingWorld {
    successors: Vec<[TokenId; 3]>,
    data_vocab: usize,
    vocab_size: usize,
}

const BRANCH_ODDS: [f64; 3] = [0.6, 0.3, 0.1];
const BRANCH_OFFSETS: [usize; 3] = [1, 2, 5];

impl BranchingWorld {
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size >= 8, "world needs some room to branch");
        let data_vocab = vocab_size - 1;
        let successors = (0..data_vocab)
            .map(|t| BRANCH_OFFSETS.map(|offset| ((t + offset) % data_vocab) as TokenId))
            .collect();
        Self {
            successors,
            data_vocab,
            vocab_size,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// The reserved end-of-sequence id (never produced by walks).
    pub fn eos(&self) -> TokenId {
        self.data_vocab as TokenId
    }

    fn step(&self, rng: &mut ChaCha8Rng, current: TokenId) -> TokenId {
        let branches = &self.successors[current as usize];
        let roll: f64 = rng.gen();
        if roll < BRANCH_ODDS[0] {
            branches[0]
        } else if roll < BRANCH_ODDS[0] + BRANCH_ODDS[1] {
            branches[1]
        } else {
            branches[2]
        }
    }

    /// A weighted random walk of `len` tokens starting from a random token.
    pub fn walk(&self, rng: &mut ChaCha8Rng, len: usize) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(len);
        let mut current = rng.gen_range(0..self.data_vocab) as TokenId;
        for _ in 0..len {
            out.push(current);
            current = self.step(rng, current);
        }
        out
    }
}

/// Parameters for a copy-task corpus: the reference is embedded in the
/// prompt (corrupted at rate `noise`), followed by the first `cue_len`
/// walk tokens so retrieval starts inside the reference.
#[derive(Debug, Clone)]
pub struct CopyCorpusSpec {
    pub vocab_size: usize,
    pub items: usize,
    pub reference_len: usize,
    pub cue_len: usize,
    pub noise: f64,
    pub train_len: usize,
    pub seed: u64,
}

impl Default for CopyCorpusSpec {
    fn default() -> Self {
        Self {
            vocab_size: 48,
            items: 50,
            reference_len: 48,
            cue_len: 8,
            noise: 0.0,
            train_len: 20_000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train_stream: Vec<TokenId>,
    pub items: Vec<CorpusItem>,
    pub vocab_size: usize,
    pub eos: TokenId,
}

/// Build a training stream and copy-task items from one seeded world.
pub fn copy_corpus(spec: &CopyCorpusSpec) -> SynthCorpus {
    let world = BranchingWorld::new(spec.vocab_size);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let train_stream = world.walk(&mut rng, spec.train_len);

    let items = (0..spec.items)
        .map(|index| {
            let walk = world.walk(&mut rng, spec.cue_len + spec.reference_len);
            let mut embedded = walk.clone();
            for slot in embedded.iter_mut() {
                if spec.noise > 0.0 && rng.gen::<f64>() < spec.noise {
                    *slot = rng.gen_range(0..world.data_vocab) as TokenId;
                }
            }
            let mut prompt = embedded;
            prompt.extend_from_slice(&walk[..spec.cue_len]);
            CorpusItem {
                id: format!("item-{index:03}"),
                prompt,
                reference: Some(walk[spec.cue_len..].to_vec()),
            }
        })
        .collect();

    SynthCorpus {
        train_stream,
        items,
        vocab_size: spec.vocab_size,
        eos: world.eos(),
    }
}
