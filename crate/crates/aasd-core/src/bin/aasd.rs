//! Command-line harness around the speculative decoding engine: corpus runs,
//! ablations, threshold sweeps, overlap reports and synthetic corpus
//! generation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use aasd_core::corpus::{load_corpus, save_corpus};
use aasd_core::harness::{
    ablate, overlap_report, run, sweep, write_ablation_jsonl, write_overlap_jsonl,
    write_sweep_jsonl, RunOptions,
};
use aasd_core::models::{LanguageModel, NGramLm, TableModel};
use aasd_core::synth::{copy_corpus, CopyCorpusSpec};
use aasd_core::types::{EngineConfig, VerificationMode};

#[derive(Parser)]
#[command(
    name = "aasd",
    version,
    about = "Speculative decoding experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a corpus and write per-item metrics plus an aggregate record.
    Run(RunArgs),
    /// Compare verification/drafting ablations over one corpus.
    Ablate(AblateArgs),
    /// Sweep fixed verification thresholds and report MAL vs quality.
    Sweep(SweepArgs),
    /// Report token-overlap ratios between prompts and references.
    Overlap(OverlapArgs),
    /// Generate a synthetic copy-task corpus and its training stream.
    Gen(GenArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model spec: `table:<file>` or `ngram:<file>,<order>,<smoothing>`.
    #[arg(long)]
    model: String,
    /// Vocab size override for ngram models (default: max token id + 1).
    #[arg(long)]
    vocab: Option<usize>,
}

impl ModelArgs {
    fn load(&self) -> Result<Arc<dyn LanguageModel>> {
        if let Some(path) = self.model.strip_prefix("table:") {
            let model = TableModel::from_file(path)
                .with_context(|| format!("loading table model from {path}"))?;
            return Ok(Arc::new(model));
        }
        if let Some(spec) = self.model.strip_prefix("ngram:") {
            let parts: Vec<&str> = spec.split(',').collect();
            let [path, order, smoothing] = parts.as_slice() else {
                bail!("ngram model spec must be ngram:<file>,<order>,<smoothing>");
            };
            let order: usize = order.parse().context("ngram order")?;
            let smoothing: f64 = smoothing.parse().context("smoothing constant")?;
            let model = NGramLm::train_from_file(path, order, smoothing, self.vocab)
                .with_context(|| format!("training ngram model from {path}"))?;
            return Ok(Arc::new(model));
        }
        bail!(
            "unknown model spec {:?}; expected table:<file> or ngram:<file>,<order>,<k>",
            self.model
        )
    }
}

#[derive(Args)]
struct EngineArgs {
    /// Verification mode: strict | adaptive | fixed:DELTA | topk:K.
    #[arg(long, default_value = "adaptive")]
    mode: String,
    /// Entropy weight of the adaptive threshold.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Base value of the adaptive threshold.
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Length of retrieved n-gram candidates.
    #[arg(long, default_value_t = 6)]
    ngram_len: usize,
    /// Longest retrieval key.
    #[arg(long, default_value_t = 6)]
    max_key_len: usize,
    /// Shortest retrieval key.
    #[arg(long, default_value_t = 1)]
    min_key_len: usize,
    /// Extra tokens sampled per misaligned draft position.
    #[arg(long, default_value_t = 2)]
    max_expansion: usize,
    /// Retrieval positions kept per lookup.
    #[arg(long, default_value_t = 4)]
    max_candidates: usize,
    /// Entries kept per alignment-cache position.
    #[arg(long, default_value_t = 8)]
    cache_topk: usize,
    /// Generation budget per item.
    #[arg(long, default_value_t = 256)]
    max_new: usize,
    /// End-of-sequence token id (default: vocab_size - 1).
    #[arg(long)]
    eos: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Zero out wall-clock fields so reports are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

impl EngineArgs {
    fn options(&self) -> Result<RunOptions> {
        let verification_mode = parse_mode(&self.mode)?;
        let engine = EngineConfig {
            ngram_len: self.ngram_len,
            max_key_len: self.max_key_len,
            min_key_len: self.min_key_len,
            max_expansion: self.max_expansion,
            cache_topk: self.cache_topk,
            alpha: self.alpha,
            beta: self.beta,
            verification_mode,
            max_candidates: self.max_candidates,
            max_new_tokens: self.max_new,
            eos_token: self.eos,
            seed: self.seed,
        };
        Ok(RunOptions {
            engine,
            measure_time: !self.no_timing,
        })
    }
}

fn parse_mode(text: &str) -> Result<VerificationMode> {
    if let Some(delta) = text.strip_prefix("fixed:") {
        return Ok(VerificationMode::FixedThreshold(
            delta.parse().context("fixed threshold")?,
        ));
    }
    if let Some(k) = text.strip_prefix("topk:") {
        return Ok(VerificationMode::TopK(k.parse().context("top-k")?));
    }
    match text {
        "strict" => Ok(VerificationMode::Strict),
        "adaptive" => Ok(VerificationMode::Adaptive),
        other => bail!("unknown mode {other:?}; expected strict|adaptive|fixed:<d>|topk:<k>"),
    }
}

#[derive(Args)]
struct RunArgs {
    /// Corpus file: one JSON record per line.
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Report file (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Comma-separated fixed thresholds, swept in the given order.
    #[arg(long, default_value = "1e-1,1e-3,1e-5,1e-7")]
    thresholds: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OverlapArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Use the contiguous-substring variant instead of the subsequence ratio.
    #[arg(long)]
    substring: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// Corpus file to write.
    #[arg(long)]
    out_corpus: PathBuf,
    /// Training token stream to write (whitespace-separated ids).
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long, default_value_t = 50)]
    items: usize,
    #[arg(long, default_value_t = 48)]
    vocab: usize,
    #[arg(long, default_value_t = 48)]
    reference_len: usize,
    #[arg(long, default_value_t = 8)]
    cue_len: usize,
    /// Corruption rate of the embedded reference copy.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 20000)]
    train_len: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn out_writer(path: &PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let corpus = load_corpus(&args.corpus)?;
            let model = args.model.load()?;
            let options = args.engine.options()?;
            let report = run(&model, &corpus, &options)?;
            report.write_jsonl(&mut out_writer(&args.out)?)?;
            let a = &report.aggregate;
            println!(
                "items={} steps={} tokens={} mean_mal={:.4} exact_match_rate={} lossless={}",
                a.items,
                a.steps,
                a.tokens_emitted,
                a.mean_mal,
                fmt_opt(a.exact_match_rate),
                a.lossless.map_or("n/a".into(), |b| b.to_string()),
            );
        }
        Command::Ablate(args) => {
            let corpus = load_corpus(&args.corpus)?;
            let model = args.model.load()?;
            let options = args.engine.options()?;
            let rows = ablate(&model, &corpus, &options)?;
            write_ablation_jsonl(&rows, &mut out_writer(&args.out)?)?;
            for row in &rows {
                println!(
                    "{:<30} mean_mal={:.4} exact_match_rate={} overlap={}",
                    row.mode,
                    row.aggregate.mean_mal,
                    fmt_opt(row.aggregate.exact_match_rate),
                    fmt_opt(row.aggregate.mean_overlap),
                );
            }
        }
        Command::Sweep(args) => {
            let corpus = load_corpus(&args.corpus)?;
            let model = args.model.load()?;
            let options = args.engine.options()?;
            let thresholds: Vec<f64> = args
                .thresholds
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .with_context(|| format!("bad threshold {t:?}"))
                })
                .collect::<Result<_>>()?;
            let rows = sweep(&model, &corpus, &thresholds, &options)?;
            write_sweep_jsonl(&rows, &mut out_writer(&args.out)?)?;
            for row in &rows {
                println!(
                    "threshold={:<8} mean_mal={:.4} exact_match_rate={} overlap={}",
                    row.threshold,
                    row.mean_mal,
                    fmt_opt(row.exact_match_rate),
                    fmt_opt(row.mean_overlap),
                );
            }
        }
        Command::Overlap(args) => {
            let corpus = load_corpus(&args.corpus)?;
            let report = overlap_report(&corpus, args.substring)?;
            write_overlap_jsonl(&report, &mut out_writer(&args.out)?)?;
            println!(
                "items={} mean_overlap={:.4}",
                report.rows.len(),
                report.mean
            );
        }
        Command::Gen(args) => {
            let spec = CopyCorpusSpec {
                vocab_size: args.vocab,
                items: args.items,
                reference_len: args.reference_len,
                cue_len: args.cue_len,
                noise: args.noise,
                train_len: args.train_len,
                seed: args.seed,
            };
            let corpus = copy_corpus(&spec);
            save_corpus(&corpus.items, &args.out_corpus)?;
            let mut train = out_writer(&args.out_train)?;
            for (i, token) in corpus.train_stream.iter().enumerate() {
                if i > 0 {
                    let sep = if i % 32 == 0 { b'\n' } else { b' ' };
                    train.write_all(&[sep])?;
                }
                write!(train, "{token}")?;
            }
            train.write_all(b"\n")?;
            train.flush()?;
            println!(
                "wrote {} items to {} and {} training tokens to {} (vocab={}, eos={})",
                corpus.items.len(),
                args.out_corpus.display(),
                corpus.train_stream.len(),
                args.out_train.display(),
                corpus.vocab_size,
                corpus.eos,
            );
            // The reserved eos id never appears in the stream, so vocab
            // inference would come up one short; spell the flags out.
            println!(
                "model flags: --model ngram:{},2,0.02 --vocab {}",
                args.out_train.display(),
                corpus.vocab_size,
            );
        }
    }
    Ok(())
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or("n/a".into(), |v| format!("{v:.4}"))
}
