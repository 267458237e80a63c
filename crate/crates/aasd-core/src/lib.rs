//! Alignment-augmented speculative decoding at desk scale.
//!
//! The engine drafts n-grams retrieved from the current sequence, widens
//! poorly aligned draft positions with alternatives sampled from cached
//! prefill distributions, verifies the merged draft tree in a single masked
//! model pass, and accepts the longest surviving path under strict,
//! fixed-threshold, top-k or entropy-adaptive rules. Pluggable toy language
//! models (a lookup table and a smoothed n-gram model) and a greedy
//! autoregressive oracle make every decode exactly reproducible and
//! cross-checkable.

pub mod corpus;
pub mod drafter;
pub mod engine;
pub mod harness;
pub mod models;
pub mod overlap;
pub mod pool;
pub mod synth;
pub mod types;
pub mod verifier;

pub use drafter::{AlignmentCache, Candidate, DraftNode, DraftTree, Origin, TreeMask};
pub use engine::{NodeAudit, RunMetrics, Session, StepRecord};
pub use models::{greedy_decode, LanguageModel, NGramLm, TableModel};
pub use pool::DraftPool;
pub use types::{
    Distribution, DistributionKind, EngineConfig, TokenId, TokenSeq, VerificationMode,
};
