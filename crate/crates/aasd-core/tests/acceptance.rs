//! Acceptance suite: one test per release criterion.
//!
//! Every test asserts its criterion at the stated tolerance against an
//! independent oracle (brute-force scan, sequential re-decode, exponential
//! enumeration, or closed-form arithmetic) and prints one pass line.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aasd_core::corpus::CorpusItem;
use aasd_core::drafter::{DraftNode, DraftTree, Origin};
use aasd_core::engine::Session;
use aasd_core::harness::{ablate, run, sweep, RunOptions};
use aasd_core::models::{greedy_decode, LanguageModel, NGramLm, TableModel};
use aasd_core::overlap::lcs_len;
use aasd_core::pool::{DraftPool, LookupMatch};
use aasd_core::synth::{copy_corpus, CopyCorpusSpec};
use aasd_core::types::{Distribution, EngineConfig, TokenId, TokenSeq, VerificationMode};
use aasd_core::verifier::{adaptive_threshold, verify_tree};

fn pass(criterion: &str, details: String) {
    println!("[acceptance] {criterion}: PASS — {details}");
}

fn base_config(mode: VerificationMode, max_new: usize, eos: Option<TokenId>) -> EngineConfig {
    EngineConfig {
        verification_mode: mode,
        max_new_tokens: max_new,
        eos_token: eos,
        ..EngineConfig::default()
    }
}

/// Criterion 1: strict-mode output is token-identical to the autoregressive
/// greedy oracle on 200 synthetic prompts, within 60 seconds.
#[test]
fn criterion_01_losslessness() {
    let started = Instant::now();
    let corpus = copy_corpus(&CopyCorpusSpec {
        vocab_size: 48,
        train_len: 30_000,
        items: 0,
        ..CopyCorpusSpec::default()
    });
    let stream = &corpus.train_stream;
    let model = NGramLm::train(stream, 3, 0.25, 48).unwrap();
    let eos = Some(47);

    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut prompts: Vec<Vec<TokenId>> = Vec::new();
    for _ in 0..150 {
        // In-distribution slice with its own head repeated at the end, so
        // retrieval has something to chew on from the first step.
        let len = rng.gen_range(40..=120);
        let start = rng.gen_range(0..stream.len() - len);
        let mut prompt = stream[start..start + len].to_vec();
        let echo = len.min(20);
        prompt.extend_from_slice(&stream[start..start + echo]);
        prompts.push(prompt);
    }
    for _ in 0..50 {
        let len = rng.gen_range(10..=50);
        prompts.push((0..len).map(|_| rng.gen_range(0..47)).collect());
    }

    let model: Arc<dyn LanguageModel> = Arc::new(model);
    let mut exact = 0usize;
    for prompt in &prompts {
        let config = base_config(VerificationMode::Strict, 256, eos);
        let mut session = Session::new(model.clone(), config, prompt.clone()).unwrap();
        session.generate().unwrap();
        let oracle = greedy_decode(
            model.as_ref(),
            &TokenSeq::from_prompt(prompt.clone()),
            256,
            eos,
        );
        assert_eq!(
            session.seq().tokens,
            oracle.tokens,
            "strict decode diverged from the greedy oracle"
        );
        exact += 1;
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert_eq!(exact, 200);
    assert!(elapsed < 60.0, "losslessness suite took {elapsed:.1}s");
    pass(
        "criterion 1 losslessness",
        format!("{exact}/200 exact in {elapsed:.1}s"),
    );
}

/// Criterion 2: adaptive verification with alpha = 0, beta = 1 emits exactly
/// the strict-mode tokens on tie-free models, over 100 prompts.
#[test]
fn criterion_02_reduction_to_strict() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let vocab = 32usize;
    let mut table = TableModel::new(vocab, 1).unwrap();
    for context in 0..vocab as TokenId {
        // Distinct random masses: ties would break the reduction argument.
        let mut weights: Vec<f64> = (0..vocab).map(|_| rng.gen_range(0.01..1.0)).collect();
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        let mut sorted = weights.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(
            sorted.windows(2).all(|w| w[0] != w[1]),
            "model must be tie-free"
        );
        table
            .insert_row(vec![context], Distribution::full_over_vocab(weights))
            .unwrap();
    }
    let model: Arc<dyn LanguageModel> = Arc::new(table);

    let mut checked = 0usize;
    for _ in 0..100 {
        let len = rng.gen_range(20..=60);
        let mut prompt: Vec<TokenId> = (0..len)
            .map(|_| rng.gen_range(0..vocab as TokenId))
            .collect();
        let echo = len.min(12);
        let head = prompt[..echo].to_vec();
        prompt.extend_from_slice(&head);

        let strict = {
            let config = base_config(VerificationMode::Strict, 64, Some(u32::MAX));
            let mut s = Session::new(model.clone(), config, prompt.clone()).unwrap();
            s.generate().unwrap();
            s.seq().tokens.clone()
        };
        let reduced = {
            let config = EngineConfig {
                alpha: 0.0,
                beta: 1.0,
                ..base_config(VerificationMode::Adaptive, 64, Some(u32::MAX))
            };
            let mut s = Session::new(model.clone(), config, prompt).unwrap();
            s.generate().unwrap();
            s.seq().tokens.clone()
        };
        assert_eq!(strict, reduced, "reduction diverged from strict mode");
        checked += 1;
    }
    pass(
        "criterion 2 reduction",
        format!("{checked}/100 prompts identical"),
    );
}

/// Criterion 3: the adaptive threshold reproduces its worked examples to
/// within 1e-9 of the closed forms.
#[test]
fn criterion_03_threshold_formula() {
    // One-hot: H = 0, so delta = min(0.1*0 + 0.1, 1.0) = 0.1.
    let one_hot = Distribution::full_over_vocab(vec![1.0, 0.0, 0.0]);
    assert!((adaptive_threshold(&one_hot, 0.1, 0.1) - 0.1).abs() < 1e-9);

    // Uniform over 4: delta = min(0.1*ln 4 + 0.1, 0.25) = 0.1*ln 4 + 0.1.
    let uniform4 = Distribution::full_over_vocab(vec![0.25; 4]);
    let expected = 0.1 * 4.0f64.ln() + 0.1;
    assert!((adaptive_threshold(&uniform4, 0.1, 0.1) - expected).abs() < 1e-9);
    assert!((expected - 0.238629).abs() < 1e-6);

    // {0.9, 0.1}: delta = min(0.1*H + 0.1, 0.9) with
    // H = -(0.9 ln 0.9 + 0.1 ln 0.1).
    let skewed = Distribution::full_over_vocab(vec![0.9, 0.1]);
    let entropy = -(0.9 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
    let expected = 0.1 * entropy + 0.1;
    assert!((adaptive_threshold(&skewed, 0.1, 0.1) - expected).abs() < 1e-9);
    assert!((expected - 0.132508).abs() < 1e-6);

    pass(
        "criterion 3 threshold formula",
        "3/3 examples within 1e-9".into(),
    );
}

// ─── Criterion 4 helpers: an oracle that re-decides acceptance from the
//     stated rules and walks every path with sequential model calls. ───────

fn oracle_argmax(dist: &Distribution) -> TokenId {
    let mut best = (dist.support[0], dist.probs[0]);
    for (&t, &p) in dist.support.iter().zip(&dist.probs).skip(1) {
        if p > best.1 || (p == best.1 && t < best.0) {
            best = (t, p);
        }
    }
    best.0
}

fn oracle_prob(dist: &Distribution, token: TokenId) -> f64 {
    dist.support
        .iter()
        .zip(&dist.probs)
        .find(|(&t, _)| t == token)
        .map_or(0.0, |(_, &p)| p)
}

fn oracle_accepts(
    mode: VerificationMode,
    alpha: f64,
    beta: f64,
    origin: Origin,
    dist: &Distribution,
    token: TokenId,
) -> bool {
    match mode {
        VerificationMode::Strict => token == oracle_argmax(dist),
        VerificationMode::FixedThreshold(delta) => oracle_prob(dist, token) >= delta,
        VerificationMode::TopK(k) => {
            let Some(p) = dist
                .support
                .iter()
                .zip(&dist.probs)
                .find(|(&t, _)| t == token)
                .map(|(_, &p)| p)
            else {
                return false;
            };
            let rank = 1 + dist
                .support
                .iter()
                .zip(&dist.probs)
                .filter(|(&t, &q)| q > p || (q == p && t < token))
                .count();
            rank <= k
        }
        VerificationMode::Adaptive => {
            if origin == Origin::GeneratedContext {
                return token == oracle_argmax(dist);
            }
            let entropy: f64 = dist
                .probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum();
            let max_prob = dist.probs.iter().copied().fold(0.0, f64::max);
            oracle_prob(dist, token) >= (alpha * entropy + beta).min(max_prob)
        }
    }
}

/// Verify each root-anchored path with independent sequential model calls
/// and pick the deepest fully accepted node (earliest inserted on ties).
fn oracle_select(
    model: &dyn LanguageModel,
    prefix: &[TokenId],
    tree: &DraftTree,
    config: &EngineConfig,
) -> (Vec<usize>, TokenId) {
    let path_to = |id: usize| {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = tree.node(cur).parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path // includes the root
    };
    let mut best: Option<usize> = None;
    for id in 0..tree.len() {
        let path = path_to(id);
        let mut context = prefix.to_vec();
        context.push(tree.node(path[0]).token);
        let mut all_accepted = true;
        for &node_id in &path[1..] {
            let dist = model.next_dist(&context);
            let node = tree.node(node_id);
            if !oracle_accepts(
                config.verification_mode,
                config.alpha,
                config.beta,
                node.origin,
                &dist,
                node.token,
            ) {
                all_accepted = false;
                break;
            }
            context.push(node.token);
        }
        if all_accepted {
            let deeper = match best {
                None => true,
                Some(b) => tree.node(id).depth > tree.node(b).depth,
            };
            if deeper {
                best = Some(id);
            }
        }
    }
    let best = best.unwrap_or(0);
    let mut context = prefix.to_vec();
    for &node_id in &path_to(best) {
        context.push(tree.node(node_id).token);
    }
    let bonus = oracle_argmax(&model.next_dist(&context));
    let accepted_path: Vec<usize> = path_to(best)[1..].to_vec();
    (accepted_path, bonus)
}

/// Criterion 4: single-pass tree verification selects the same accepted path
/// and bonus as per-path sequential verification, on 1000 random trees.
#[test]
fn criterion_04_tree_path_equivalence() {
    let vocab = 24usize;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut table = TableModel::new(vocab, 2).unwrap();
    for _ in 0..300 {
        let context: Vec<TokenId> = (0..2).map(|_| rng.gen_range(0..vocab as TokenId)).collect();
        let mut weights: Vec<f64> = (0..vocab).map(|_| rng.gen_range(0.001..1.0)).collect();
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        table
            .insert_row(context, Distribution::full_over_vocab(weights))
            .unwrap();
    }

    let modes = [
        VerificationMode::Strict,
        VerificationMode::FixedThreshold(0.1),
        VerificationMode::TopK(5),
        VerificationMode::Adaptive,
    ];
    let origins = [
        Origin::InputContext,
        Origin::GeneratedContext,
        Origin::AlignmentSampled,
    ];

    for round in 0..1000usize {
        let size = rng.gen_range(1..=64);
        let mut nodes = vec![DraftNode {
            token: rng.gen_range(0..vocab as TokenId),
            parent: None,
            origin: Origin::GeneratedContext,
            source_pos: Some(0),
            depth: 0,
        }];
        for i in 1..size {
            let parent = rng.gen_range(0..i);
            nodes.push(DraftNode {
                token: rng.gen_range(0..vocab as TokenId),
                parent: Some(parent),
                origin: origins[rng.gen_range(0..3)],
                source_pos: None,
                depth: nodes[parent].depth + 1,
            });
        }
        let tree = DraftTree::from_nodes(nodes);
        let prefix: Vec<TokenId> = (0..rng.gen_range(2..6))
            .map(|_| rng.gen_range(0..vocab as TokenId))
            .collect();
        let config = base_config(modes[round % modes.len()], 64, None);

        let dists = table.forward_tree(&prefix, &tree.tokens(), &tree.attention_mask());
        let outcome = verify_tree(&tree, &dists, &config);
        let (oracle_path, oracle_bonus) = oracle_select(&table, &prefix, &tree, &config);
        assert_eq!(
            outcome.path.nodes, oracle_path,
            "accepted path diverged on round {round}"
        );
        assert_eq!(
            outcome.bonus, oracle_bonus,
            "bonus diverged on round {round}"
        );
    }
    pass(
        "criterion 4 tree/path equivalence",
        "1000/1000 trees agree".into(),
    );
}

// ─── Criterion 5 helpers: brute-force window scan of the pool contract. ───

fn scan_windows(seq: &[TokenId], max_key_len: usize) -> BTreeMap<Vec<TokenId>, Vec<usize>> {
    let mut map: BTreeMap<Vec<TokenId>, Vec<usize>> = BTreeMap::new();
    for k in 1..=max_key_len.min(seq.len()) {
        for start in 0..=seq.len() - k {
            map.entry(seq[start..start + k].to_vec())
                .or_default()
                .push(start + k);
        }
    }
    map
}

fn scan_lookup(
    seq: &[TokenId],
    max_key_len: usize,
    min_key_len: usize,
    max_candidates: usize,
) -> Option<LookupMatch> {
    for key_len in (min_key_len..=max_key_len.min(seq.len())).rev() {
        let key = &seq[seq.len() - key_len..];
        let mut positions = Vec::new();
        for start in 0..=seq.len() - key_len {
            if &seq[start..start + key_len] == key && start + key_len < seq.len() {
                positions.push(start + key_len);
            }
        }
        if !positions.is_empty() {
            let keep = positions.len().saturating_sub(max_candidates);
            return Some(LookupMatch {
                key_len,
                positions: positions[keep..].to_vec(),
            });
        }
    }
    None
}

/// Criterion 5: build, extend and lookup agree exactly with the brute-force
/// window scan on 500 random sequences.
#[test]
fn criterion_05_pool_matches_window_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for round in 0..500usize {
        let vocab = rng.gen_range(2..=50) as TokenId;
        let len = rng.gen_range(1..=2000);
        let max_key_len = rng.gen_range(1..=6);
        let seq: Vec<TokenId> = (0..len).map(|_| rng.gen_range(0..vocab)).collect();

        // Build incrementally through a random number of extends.
        let mut cuts: Vec<usize> = (0..rng.gen_range(0..3))
            .map(|_| rng.gen_range(1..=len))
            .collect();
        cuts.push(len);
        cuts.sort_unstable();
        let mut pool = DraftPool::build(&seq[..cuts[0]], max_key_len).unwrap();
        for &cut in &cuts[1..] {
            pool.extend(&seq[..cut]).unwrap();
        }

        let index: BTreeMap<Vec<TokenId>, Vec<usize>> = {
            // Read the pool back through its public probes.
            let mut map = BTreeMap::new();
            for (key, positions) in scan_windows(&seq, max_key_len) {
                let got = pool
                    .positions(&key)
                    .unwrap_or_else(|| panic!("round {round}: key {key:?} missing from pool"));
                map.insert(key.clone(), got.to_vec());
                assert_eq!(got, positions.as_slice(), "round {round}: key {key:?}");
            }
            map
        };
        assert_eq!(
            index.len(),
            pool.key_count(),
            "round {round}: extra keys in pool"
        );

        let min_key_len = rng.gen_range(1..=max_key_len);
        let max_candidates = rng.gen_range(1..=5);
        let got = pool.lookup_longest(&seq, min_key_len, max_candidates);
        let want = scan_lookup(&seq, max_key_len, min_key_len, max_candidates);
        assert_eq!(got, want, "round {round}: lookup mismatch");
    }
    pass("criterion 5 pool oracle", "500/500 sequences agree".into());
}

fn trained_copy_setup(
    noise: f64,
    items: usize,
    seed: u64,
) -> (Arc<dyn LanguageModel>, Vec<CorpusItem>) {
    let spec = CopyCorpusSpec {
        vocab_size: 48,
        items,
        reference_len: 48,
        cue_len: 8,
        noise,
        train_len: 20_000,
        seed,
    };
    let corpus = copy_corpus(&spec);
    let model = NGramLm::train(&corpus.train_stream, 2, 0.02, 48).unwrap();
    (Arc::new(model), corpus.items)
}

/// Criterion 6: on a high-overlap copy corpus the corpus-mean MAL orders as
/// adaptive+AS >= adaptive-AS >= strict >= 1, with adaptive above 1.5,
/// within 120 seconds.
#[test]
fn criterion_06_directional_mal() {
    let started = Instant::now();
    let (model, items) = trained_copy_setup(0.0, 60, 606);
    let options = RunOptions {
        engine: base_config(VerificationMode::Adaptive, 48, None),
        measure_time: false,
    };
    let rows = ablate(&model, &items, &options).unwrap();
    let mal_of = |mode: &str| {
        rows.iter()
            .find(|r| r.mode == mode)
            .unwrap_or_else(|| panic!("missing ablation mode {mode}"))
            .aggregate
            .mean_mal
    };
    let full = mal_of("aasd");
    let no_as = mal_of("no_alignment_sampling");
    let strict = mal_of("no_conditional_verification");
    let elapsed = started.elapsed().as_secs_f64();

    assert!(
        full >= no_as,
        "alignment sampling hurt MAL: {full:.3} < {no_as:.3}"
    );
    assert!(
        no_as >= strict,
        "conditional verification hurt MAL: {no_as:.3} < {strict:.3}"
    );
    assert!(strict >= 1.0, "strict MAL below 1: {strict:.3}");
    assert!(full > 1.5, "adaptive MAL too low: {full:.3}");
    assert!(elapsed < 120.0, "directional suite took {elapsed:.1}s");
    pass(
        "criterion 6 directional MAL",
        format!("aasd={full:.3} >= no_as={no_as:.3} >= strict={strict:.3} in {elapsed:.1}s"),
    );
}

/// Criterion 7: corpus-mean MAL is non-decreasing as the fixed threshold
/// drops through 1e-1, 1e-3, 1e-5, 1e-7.
#[test]
fn criterion_07_monotone_threshold_sweep() {
    let (model, items) = trained_copy_setup(0.12, 40, 707);
    let options = RunOptions {
        engine: base_config(VerificationMode::Adaptive, 48, None),
        measure_time: false,
    };
    let thresholds = [1e-1, 1e-3, 1e-5, 1e-7];
    let rows = sweep(&model, &items, &thresholds, &options).unwrap();
    let mals: Vec<f64> = rows.iter().map(|r| r.mean_mal).collect();
    for pair in mals.windows(2) {
        assert!(
            pair[1] >= pair[0],
            "MAL decreased as the threshold dropped: {mals:?}"
        );
    }
    pass(
        "criterion 7 monotone sweep",
        format!("MAL by threshold: {mals:?}"),
    );
}

/// Criterion 8: under strict verification, aligned input-context drafts are
/// accepted strictly more often than misaligned ones on the copy corpus.
#[test]
fn criterion_08_alignment_analysis() {
    let (model, items) = trained_copy_setup(0.12, 40, 808);
    let options = RunOptions {
        engine: base_config(VerificationMode::Strict, 48, None),
        measure_time: false,
    };
    let report = run(&model, &items, &options).unwrap();
    let aligned = report
        .aggregate
        .aligned_acc
        .expect("no aligned drafts observed");
    let misaligned = report
        .aggregate
        .misaligned_acc
        .expect("no misaligned drafts observed");
    assert!(
        aligned > misaligned,
        "aligned acceptance {aligned:.3} not above misaligned {misaligned:.3}"
    );
    pass(
        "criterion 8 alignment analysis",
        format!("aligned_acc={aligned:.3} > misaligned_acc={misaligned:.3}"),
    );
}

// ─── Criterion 9 helpers: exponential subsequence enumeration. ────────────

fn is_subsequence(needle: &[TokenId], haystack: &[TokenId]) -> bool {
    let mut iter = haystack.iter();
    needle.iter().all(|t| iter.any(|h| h == t))
}

fn lcs_by_enumeration(a: &[TokenId], b: &[TokenId]) -> usize {
    let mut best = 0usize;
    for mask in 0u32..(1 << b.len()) {
        if (mask.count_ones() as usize) <= best {
            continue;
        }
        let picked: Vec<TokenId> = b
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask & (1 << i) != 0)
            .map(|(_, &t)| t)
            .collect();
        if is_subsequence(&picked, a) {
            best = picked.len();
        }
    }
    best
}

/// Criterion 9: the DP overlap ratio matches exponential enumeration over a
/// 3-symbol alphabet — exhaustively for pairs up to length 5, and on 20000
/// random pairs with lengths 6 through 8.
#[test]
fn criterion_09_overlap_matches_enumeration() {
    fn sequences_up_to(len: usize) -> Vec<Vec<TokenId>> {
        let mut all = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..len {
            let mut next = Vec::new();
            for seq in &frontier {
                for symbol in 0..3 {
                    let mut longer = seq.clone();
                    longer.push(symbol);
                    next.push(longer);
                }
            }
            all.extend(next.iter().cloned());
            frontier = next;
        }
        all
    }

    let mut checked = 0usize;
    let space = sequences_up_to(5);
    for a in &space {
        for b in &space {
            assert_eq!(
                lcs_len(a, b),
                lcs_by_enumeration(a, b),
                "LCS mismatch for a={a:?} b={b:?}"
            );
            checked += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for _ in 0..20_000 {
        let a: Vec<TokenId> = (0..rng.gen_range(6..=8))
            .map(|_| rng.gen_range(0..3))
            .collect();
        let b: Vec<TokenId> = (0..rng.gen_range(6..=8))
            .map(|_| rng.gen_range(0..3))
            .collect();
        let dp = lcs_len(&a, &b);
        let oracle = lcs_by_enumeration(&a, &b);
        assert_eq!(dp, oracle, "LCS mismatch for a={a:?} b={b:?}");
        // Ratio form, as reported: LCS / |reference|.
        assert!((dp as f64 / b.len() as f64 - oracle as f64 / b.len() as f64).abs() == 0.0);
        checked += 1;
    }
    pass(
        "criterion 9 overlap metric",
        format!("{checked} pairs agree with enumeration"),
    );
}

/// Criterion 10: identical seeds and configs produce byte-identical reports
/// across two consecutive runs (timing capture off).
#[test]
fn criterion_10_deterministic_reports() {
    let (model, items) = trained_copy_setup(0.12, 20, 1010);
    let options = RunOptions {
        engine: base_config(VerificationMode::Adaptive, 48, None),
        measure_time: false,
    };
    let mut first = Vec::new();
    let mut second = Vec::new();
    run(&model, &items, &options)
        .unwrap()
        .write_jsonl(&mut first)
        .unwrap();
    run(&model, &items, &options)
        .unwrap()
        .write_jsonl(&mut second)
        .unwrap();
    assert!(!first.is_empty());
    assert_eq!(first, second, "reports differ between consecutive runs");
    pass(
        "criterion 10 determinism",
        format!("two runs produced identical {}-byte reports", first.len()),
    );
}
