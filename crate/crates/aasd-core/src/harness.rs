//! Experiment harness: run a corpus through the engine, compare ablation
//! modes, sweep fixed verification thresholds, and report prompt/reference
//! overlap. Items run as independent sessions (in parallel) against one
//! shared model; reports are assembled in corpus order and are byte-stable
//! when timing capture is off.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusItem};
use crate::engine::{EngineError, Session};
use crate::models::{greedy_decode, LanguageModel};
use crate::overlap::{overlap_ratio, substring_overlap_ratio};
use crate::types::{EngineConfig, TokenSeq, VerificationMode};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Harness-level knobs around the engine config.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub engine: EngineConfig,
    /// Capture wall-clock timing. Off, every timing field is written as zero
    /// so reports for identical seeds and configs are byte-identical.
    pub measure_time: bool,
}

impl RunOptions {
    pub fn new(engine: EngineConfig) -> Self {
        Self {
            engine,
            measure_time: true,
        }
    }
}

/// One corpus item's row in the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub id: String,
    pub tokens_emitted: usize,
    pub steps: usize,
    pub mal: f64,
    pub acc_rate_input: Option<f64>,
    pub acc_rate_generated: Option<f64>,
    pub acc_rate_sampled: Option<f64>,
    pub aligned_acc: Option<f64>,
    pub misaligned_acc: Option<f64>,
    /// Generated tokens exactly equal the reference (when one is given).
    pub exact_match: Option<bool>,
    /// LCS overlap of the generated tokens against the reference.
    pub overlap: Option<f64>,
    pub wall_ms: f64,
}

/// Corpus-level aggregate: unweighted means over the per-item rows, so every
/// value is recomputable from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub items: usize,
    pub steps: usize,
    pub tokens_emitted: usize,
    pub mean_mal: f64,
    pub acc_rate_input: Option<f64>,
    pub acc_rate_generated: Option<f64>,
    pub acc_rate_sampled: Option<f64>,
    pub aligned_acc: Option<f64>,
    pub misaligned_acc: Option<f64>,
    pub exact_match_rate: Option<f64>,
    pub mean_overlap: Option<f64>,
    /// Strict mode only: whether every item reproduced the greedy oracle.
    pub lossless: Option<bool>,
    pub wall_ms: f64,
    pub tokens_per_sec: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub items: Vec<ItemReport>,
    pub aggregate: AggregateReport,
}

impl RunReport {
    /// One JSON record per item, then the aggregate under id `__aggregate__`.
    pub fn write_jsonl(&self, mut writer: impl Write) -> std::io::Result<()> {
        for item in &self.items {
            serde_json::to_writer(&mut writer, item)?;
            writer.write_all(b"\n")?;
        }
        let mut tail = json!({"id": "__aggregate__"});
        merge_object(&mut tail, serde_json::to_value(&self.aggregate)?);
        serde_json::to_writer(&mut writer, &tail)?;
        writer.write_all(b"\n")?;
        Ok(())
    }
}

fn merge_object(target: &mut serde_json::Value, extra: serde_json::Value) {
    if let (Some(t), serde_json::Value::Object(e)) = (target.as_object_mut(), extra) {
        t.extend(e);
    }
}

/// Decode every corpus item and report per-item and aggregate metrics.
/// Deterministic for a fixed seed and config (with timing capture off).
pub fn run(
    model: &Arc<dyn LanguageModel>,
    corpus: &[CorpusItem],
    options: &RunOptions,
) -> Result<RunReport, HarnessError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty.into());
    }
    options
        .engine
        .validate()
        .map_err(|e| HarnessError::BadConfig(e.to_string()))?;
    if options.engine.max_new_tokens == 0 {
        return Err(HarnessError::BadConfig(
            "max_new_tokens must be positive".into(),
        ));
    }

    let strict = options.engine.verification_mode == VerificationMode::Strict;
    let results: Vec<(ItemReport, Option<bool>)> = corpus
        .par_iter()
        .map(|item| run_item(model, item, options, strict))
        .collect::<Result<_, HarnessError>>()?;

    let (items, lossless_flags): (Vec<ItemReport>, Vec<Option<bool>>) = results.into_iter().unzip();
    let lossless = strict.then(|| lossless_flags.iter().all(|f| *f == Some(true)));
    let aggregate = aggregate(&items, lossless);
    Ok(RunReport { items, aggregate })
}

fn run_item(
    model: &Arc<dyn LanguageModel>,
    item: &CorpusItem,
    options: &RunOptions,
    check_lossless: bool,
) -> Result<(ItemReport, Option<bool>), HarnessError> {
    let mut session = Session::new(model.clone(), options.engine.clone(), item.prompt.clone())?;
    session.generate()?;
    let metrics = session.metrics()?;
    let generated = session.seq().generated();

    let matches_oracle = check_lossless.then(|| {
        let eos = options
            .engine
            .eos_token
            .unwrap_or(model.vocab_size() as u32 - 1);
        let oracle = greedy_decode(
            model.as_ref(),
            &TokenSeq::from_prompt(item.prompt.clone()),
            options.engine.max_new_tokens,
            Some(eos),
        );
        oracle.tokens == session.seq().tokens
    });

    let report = ItemReport {
        id: item.id.clone(),
        tokens_emitted: metrics.tokens_emitted,
        steps: metrics.steps,
        mal: metrics.mal,
        acc_rate_input: metrics.acc_rate_input,
        acc_rate_generated: metrics.acc_rate_generated,
        acc_rate_sampled: metrics.acc_rate_sampled,
        aligned_acc: metrics.aligned_acc,
        misaligned_acc: metrics.misaligned_acc,
        exact_match: item.reference.as_deref().map(|r| generated == r),
        overlap: item
            .reference
            .as_deref()
            .and_then(|r| overlap_ratio(generated, r)),
        wall_ms: if options.measure_time {
            metrics.total_wall_ms
        } else {
            0.0
        },
    };
    Ok((report, matches_oracle))
}

fn aggregate(items: &[ItemReport], lossless: Option<bool>) -> AggregateReport {
    fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
        let present: Vec<f64> = values.flatten().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }
    let steps: usize = items.iter().map(|i| i.steps).sum();
    let tokens: usize = items.iter().map(|i| i.tokens_emitted).sum();
    let wall_ms: f64 = items.iter().map(|i| i.wall_ms).sum();
    AggregateReport {
        items: items.len(),
        steps,
        tokens_emitted: tokens,
        mean_mal: items.iter().map(|i| i.mal).sum::<f64>() / items.len() as f64,
        acc_rate_input: mean_of(items.iter().map(|i| i.acc_rate_input)),
        acc_rate_generated: mean_of(items.iter().map(|i| i.acc_rate_generated)),
        acc_rate_sampled: mean_of(items.iter().map(|i| i.acc_rate_sampled)),
        aligned_acc: mean_of(items.iter().map(|i| i.aligned_acc)),
        misaligned_acc: mean_of(items.iter().map(|i| i.misaligned_acc)),
        exact_match_rate: mean_of(
            items
                .iter()
                .map(|i| i.exact_match.map(|m| if m { 1.0 } else { 0.0 })),
        ),
        mean_overlap: mean_of(items.iter().map(|i| i.overlap)),
        lossless,
        wall_ms,
        tokens_per_sec: (wall_ms > 0.0).then(|| tokens as f64 / (wall_ms / 1e3)),
    }
}

/// The five ablation arms: everything on, alignment sampling off, strict
/// verification (conditional off), fixed threshold 0.1, and top-5.
pub const ABLATION_MODES: [&str; 5] = [
    "aasd",
    "no_alignment_sampling",
    "no_conditional_verification",
    "fixed_threshold_0.1",
    "top_k_5",
];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub mode: String,
    pub aggregate: AggregateReport,
}

fn ablation_config(mode: &str, base: &EngineConfig) -> EngineConfig {
    let mut config = base.clone();
    match mode {
        "aasd" => config.verification_mode = VerificationMode::Adaptive,
        "no_alignment_sampling" => {
            config.verification_mode = VerificationMode::Adaptive;
            config.max_expansion = 0;
        }
        "no_conditional_verification" => {
            config.verification_mode = VerificationMode::Strict;
        }
        "fixed_threshold_0.1" => {
            config.verification_mode = VerificationMode::FixedThreshold(0.1);
        }
        "top_k_5" => config.verification_mode = VerificationMode::TopK(5),
        other => unreachable!("unknown ablation mode {other}"),
    }
    config
}

/// Run every ablation arm over the same corpus with the same seed.
pub fn ablate(
    model: &Arc<dyn LanguageModel>,
    corpus: &[CorpusItem],
    base: &RunOptions,
) -> Result<Vec<AblationRow>, HarnessError> {
    ABLATION_MODES
        .iter()
        .map(|mode| {
            let options = RunOptions {
                engine: ablation_config(mode, &base.engine),
                measure_time: base.measure_time,
            };
            let report = run(model, corpus, &options)?;
            Ok(AblationRow {
                mode: mode.to_string(),
                aggregate: report.aggregate,
            })
        })
        .collect()
}

pub fn write_ablation_jsonl(rows: &[AblationRow], mut writer: impl Write) -> std::io::Result<()> {
    for row in rows {
        let mut record = json!({"mode": row.mode});
        merge_object(&mut record, serde_json::to_value(&row.aggregate)?);
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// One fixed-threshold run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub mean_mal: f64,
    pub exact_match_rate: Option<f64>,
    pub mean_overlap: Option<f64>,
}

/// Decode the corpus once per fixed threshold, reporting efficiency (MAL)
/// next to output quality so the trade-off is visible.
pub fn sweep(
    model: &Arc<dyn LanguageModel>,
    corpus: &[CorpusItem],
    thresholds: &[f64],
    base: &RunOptions,
) -> Result<Vec<SweepRow>, HarnessError> {
    if thresholds.is_empty() {
        return Err(HarnessError::BadConfig("no thresholds given".into()));
    }
    thresholds
        .iter()
        .map(|&threshold| {
            let mut engine = base.engine.clone();
            engine.verification_mode = VerificationMode::FixedThreshold(threshold);
            let report = run(
                model,
                corpus,
                &RunOptions {
                    engine,
                    measure_time: base.measure_time,
                },
            )?;
            Ok(SweepRow {
                threshold,
                mean_mal: report.aggregate.mean_mal,
                exact_match_rate: report.aggregate.exact_match_rate,
                mean_overlap: report.aggregate.mean_overlap,
            })
        })
        .collect()
}

pub fn write_sweep_jsonl(rows: &[SweepRow], mut writer: impl Write) -> std::io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut writer, row)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Per-item overlap between prompt and reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub id: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    pub rows: Vec<OverlapRow>,
    pub mean: f64,
}

/// Overlap ratio of each item's reference against its prompt: LCS by
/// default, contiguous substring with `substring`.
pub fn overlap_report(
    corpus: &[CorpusItem],
    substring: bool,
) -> Result<OverlapReport, HarnessError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty.into());
    }
    let mut rows = Vec::with_capacity(corpus.len());
    for item in corpus {
        let reference = item
            .reference
            .as_deref()
            .ok_or_else(|| CorpusError::MissingReference(item.id.clone()))?;
        let ratio = if substring {
            substring_overlap_ratio(&item.prompt, reference)
        } else {
            overlap_ratio(&item.prompt, reference)
        }
        .ok_or_else(|| CorpusError::MissingReference(item.id.clone()))?;
        rows.push(OverlapRow {
            id: item.id.clone(),
            ratio,
        });
    }
    let mean = rows.iter().map(|r| r.ratio).sum::<f64>() / rows.len() as f64;
    Ok(OverlapReport { rows, mean })
}

pub fn write_overlap_jsonl(report: &OverlapReport, mut writer: impl Write) -> std::io::Result<()> {
    for row in &report.rows {
        serde_json::to_writer(&mut writer, row)?;
        writer.write_all(b"\n")?;
    }
    let tail = json!({"id": "__aggregate__", "mean": report.mean});
    serde_json::to_writer(&mut writer, &tail)?;
    writer.write_all(b"\n")?;
    Ok(())
}
