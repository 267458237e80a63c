//! Acceptance decisions over draft trees: strict, fixed-threshold, top-k and
//! entropy-adaptive verification, plus longest accepted path selection with
//! the bonus token.

use crate::drafter::{DraftNode, DraftTree, Origin};
use crate::types::{Distribution, EngineConfig, TokenId, VerificationMode};

/// Shannon entropy in nats. Zero-probability entries contribute nothing.
/// Meant for full distributions.
pub fn entropy(dist: &Distribution) -> f64 {
    dist.probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Entropy-adaptive acceptance threshold.
///
/// `min(alpha * H + beta, max_prob)`: low-entropy (confident) distributions
/// relax toward `beta`, high-entropy ones are capped at the maximum
/// probability so the greedy token always passes — and fully flat
/// distributions accept every token together.
pub fn adaptive_threshold(dist: &Distribution, alpha: f64, beta: f64) -> f64 {
    (alpha * entropy(dist) + beta).min(dist.max_prob())
}

/// Outcome of verifying one draft node against its parent's distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVerdict {
    pub accepted: bool,
    /// Probability of the node's token under the verification distribution.
    pub prob: f64,
    /// Numeric threshold the probability was compared against, when one was.
    pub threshold: Option<f64>,
    /// Entropy of the verification distribution, when it was computed.
    pub entropy: Option<f64>,
}

/// Decide one node. `dist` is the full distribution produced at the node's
/// parent. In adaptive mode, tokens copied from generated context are routed
/// to strict verification regardless of probability.
pub fn verify_node(node: &DraftNode, dist: &Distribution, cfg: &EngineConfig) -> NodeVerdict {
    let prob = dist.prob_of(node.token);
    let strict = |prob: f64| NodeVerdict {
        accepted: dist.argmax() == Some(node.token),
        prob,
        threshold: None,
        entropy: None,
    };
    match cfg.verification_mode {
        VerificationMode::Strict => strict(prob),
        VerificationMode::FixedThreshold(delta) => NodeVerdict {
            accepted: prob >= delta,
            prob,
            threshold: Some(delta),
            entropy: None,
        },
        VerificationMode::TopK(k) => NodeVerdict {
            accepted: dist.rank_of(node.token).is_some_and(|r| r <= k),
            prob,
            threshold: None,
            entropy: None,
        },
        VerificationMode::Adaptive => {
            if node.origin == Origin::GeneratedContext {
                return strict(prob);
            }
            let h = entropy(dist);
            let delta = (cfg.alpha * h + cfg.beta).min(dist.max_prob());
            NodeVerdict {
                accepted: prob >= delta,
                prob,
                threshold: Some(delta),
                entropy: Some(h),
            }
        }
    }
}

/// The accepted prefix of the tree: a root-anchored path whose nodes all
/// passed verification, and the node whose distribution supplies the bonus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcceptedPath {
    /// Accepted node ids from the first layer downward; empty when nothing
    /// passed.
    pub nodes: Vec<usize>,
    /// The node at the acceptance frontier: last accepted node, or the root.
    pub end_node: usize,
}

/// Pick the longest root-anchored all-accepted path.
///
/// Rejection cascades: a node only counts if every ancestor was accepted.
/// Ties in length go to the path whose endpoint was inserted earliest, which
/// favors the most recent retrieval.
///
/// `verdicts` is indexed by node id; entry 0 (the root) is ignored.
pub fn select_longest(tree: &DraftTree, verdicts: &[NodeVerdict]) -> AcceptedPath {
    debug_assert_eq!(verdicts.len(), tree.len());
    let mut reachable = vec![false; tree.len()];
    reachable[0] = true;
    let mut best = 0usize;
    for id in 1..tree.len() {
        let parent = tree.node(id).parent.expect("non-root node");
        if reachable[parent] && verdicts[id].accepted {
            reachable[id] = true;
            if tree.node(id).depth > tree.node(best).depth {
                best = id;
            }
        }
    }
    let mut nodes = Vec::with_capacity(tree.node(best).depth);
    let mut cur = best;
    while let Some(parent) = tree.node(cur).parent {
        nodes.push(cur);
        cur = parent;
    }
    nodes.reverse();
    AcceptedPath {
        nodes,
        end_node: best,
    }
}

/// Full verification of one tree pass.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    /// Per-node verdicts aligned with node ids. The root carries a committed
    /// sentinel (accepted, probability 1).
    pub verdicts: Vec<NodeVerdict>,
    pub path: AcceptedPath,
    /// Greedy token from the distribution at the acceptance frontier.
    pub bonus: TokenId,
}

/// Verify every node against its parent's distribution, select the longest
/// accepted path and read the bonus token off the frontier distribution.
/// `dists[i]` must be the model output at node `i` of the linearized tree.
pub fn verify_tree(tree: &DraftTree, dists: &[Distribution], cfg: &EngineConfig) -> VerifyOutcome {
    debug_assert_eq!(dists.len(), tree.len());
    let mut verdicts = Vec::with_capacity(tree.len());
    verdicts.push(NodeVerdict {
        accepted: true,
        prob: 1.0,
        threshold: None,
        entropy: None,
    });
    for id in 1..tree.len() {
        let node = tree.node(id);
        let parent = node.parent.expect("non-root node");
        verdicts.push(verify_node(node, &dists[parent], cfg));
    }
    let path = select_longest(tree, &verdicts);
    let bonus = dists[path.end_node]
        .argmax()
        .expect("model produced an empty distribution");
    VerifyOutcome {
        verdicts,
        path,
        bonus,
    }
}
