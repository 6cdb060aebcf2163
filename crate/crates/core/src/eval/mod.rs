//! Accuracy evaluation, breakdowns and ablations.

mod render;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::answer::{AnswerValue, FinalAnswer, QuestionKind};
use crate::corpus::ChunkStrategy;
use crate::hazard::Hazard;
use crate::pipeline::{Engine, EvidenceSource, InferenceTrace, PipelineConfig, PipelineVariant};
use crate::qagen::{QADataset, QaCategory};

pub use render::{render_ablation, render_category_table, render_report};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {golds} gold answers")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("an ablation needs at least two configurations, got {0}")]
    TooFewConfigs(usize),
    #[error("configuration {config} expects {expected} chunks but the index holds {found} chunks")]
    StrategyMismatch {
        config: String,
        expected: ChunkStrategy,
        found: ChunkStrategy,
    },
    #[error("invalid pipeline configuration for {config}: {message}")]
    Config { config: String, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Share of predictions equal to their gold answer; abstentions count as
/// wrong. An empty set scores 0.
pub fn accuracy(predictions: &[FinalAnswer], golds: &[AnswerValue]) -> Result<f64, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if golds.is_empty() {
        return Ok(0.0);
    }
    let correct = predictions.iter().zip(golds).filter(|(p, g)| p.is_correct(**g)).count();
    Ok(correct as f64 / golds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub name: String,
    /// Strategy the index was chunked with.
    pub chunking: ChunkStrategy,
    pub pipeline: PipelineConfig,
}

impl EvalConfig {
    pub fn new(name: impl Into<String>, variant: PipelineVariant, chunking: ChunkStrategy) -> Self {
        EvalConfig {
            name: name.into(),
            chunking,
            pipeline: PipelineConfig::for_variant(variant),
        }
    }

    pub fn variant(&self) -> PipelineVariant {
        self.pipeline.variant
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += usize::from(correct);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub question_id: String,
    pub kind: QuestionKind,
    pub category: QaCategory,
    pub hazard: Hazard,
    pub predicted: Option<AnswerValue>,
    pub gold: AnswerValue,
    pub correct: bool,
    pub latency_s: f64,
    pub evidence_source: EvidenceSource,
    pub iterations: usize,
    pub rewrites: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_name: String,
    pub variant: PipelineVariant,
    pub chunking: ChunkStrategy,
    pub overall: Tally,
    pub by_category: BTreeMap<QaCategory, Tally>,
    pub by_kind: BTreeMap<QuestionKind, Tally>,
    pub by_hazard: BTreeMap<Hazard, Tally>,
    pub mean_latency_s: f64,
    pub median_latency_s: f64,
    pub abstentions: usize,
    /// Dataset order.
    pub items: Vec<ItemRecord>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.overall.accuracy()
    }

    /// The same report with every latency zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.mean_latency_s = 0.0;
        r.median_latency_s = 0.0;
        for i in &mut r.items {
            i.latency_s = 0.0;
        }
        r
    }

    fn assemble(cfg: &EvalConfig, dataset: &QADataset, traces: &[InferenceTrace]) -> Self {
        let mut by_category: BTreeMap<QaCategory, Tally> = QaCategory::ALL.iter().map(|&c| (c, Tally::default())).collect();
        let mut by_kind: BTreeMap<QuestionKind, Tally> =
            [QuestionKind::TrueFalse, QuestionKind::MultipleChoice].iter().map(|&k| (k, Tally::default())).collect();
        let mut by_hazard: BTreeMap<Hazard, Tally> = Hazard::ALL.iter().map(|&h| (h, Tally::default())).collect();
        let mut overall = Tally::default();
        let mut items = Vec::with_capacity(dataset.len());
        for (item, trace) in dataset.items.iter().zip(traces) {
            let correct = trace.final_answer.is_correct(item.gold);
            overall.add(correct);
            by_category.entry(item.category).or_default().add(correct);
            by_kind.entry(item.kind).or_default().add(correct);
            by_hazard.entry(item.provenance.hazard_type).or_default().add(correct);
            items.push(ItemRecord {
                question_id: item.id.clone(),
                kind: item.kind,
                category: item.category,
                hazard: item.provenance.hazard_type,
                predicted: trace.final_answer.value,
                gold: item.gold,
                correct,
                latency_s: trace.total_latency_s,
                evidence_source: trace.evidence_source,
                iterations: trace.iterations.len(),
                rewrites: trace.rewrite_count(),
            });
        }
        let mut lat: Vec<f64> = items.iter().map(|i| i.latency_s).collect();
        lat.sort_by(f64::total_cmp);
        let mean = if lat.is_empty() { 0.0 } else { lat.iter().sum::<f64>() / lat.len() as f64 };
        let median = match lat.len() {
            0 => 0.0,
            n if n % 2 == 1 => lat[n / 2],
            n => (lat[n / 2 - 1] + lat[n / 2]) / 2.0,
        };
        EvalReport {
            config_name: cfg.name.clone(),
            variant: cfg.variant(),
            chunking: cfg.chunking,
            overall,
            by_category,
            by_kind,
            by_hazard,
            mean_latency_s: mean,
            median_latency_s: median,
            abstentions: traces.iter().filter(|t| t.final_answer.is_abstention()).count(),
            items,
        }
    }

    /// One CSV row per item.
    pub fn write_items_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "question_id",
            "kind",
            "category",
            "hazard",
            "predicted",
            "gold",
            "correct",
            "latency_s",
            "evidence_source",
            "iterations",
            "rewrites",
        ])?;
        for i in &self.items {
            w.write_record([
                i.question_id.clone(),
                i.kind.name().to_string(),
                i.category.name().to_string(),
                i.hazard.name().to_string(),
                i.predicted.map(|p| p.to_string()).unwrap_or_default(),
                i.gold.to_string(),
                i.correct.to_string(),
                format!("{:.3}", i.latency_s),
                i.evidence_source.name().to_string(),
                i.iterations.to_string(),
                i.rewrites.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_strategy(cfg: &EvalConfig, engine: &Engine) -> Result<(), EvalError> {
    if !cfg.variant().retrieves() {
        return Ok(());
    }
    let found = engine
        .index
        .databases()
        .flat_map(|db| db.records())
        .map(|r| r.chunk.strategy)
        .find(|s| *s != cfg.chunking);
    match found {
        Some(found) => Err(EvalError::StrategyMismatch {
            config: cfg.name.clone(),
            expected: cfg.chunking,
            found,
        }),
        None => Ok(()),
    }
}

/// Runs every item through `engine` under `cfg` and joins results by item.
pub fn evaluate_with_traces(
    dataset: &QADataset,
    cfg: &EvalConfig,
    engine: &Engine,
    parallelism: usize,
) -> Result<(EvalReport, Vec<InferenceTrace>), EvalError> {
    cfg.pipeline.validate().map_err(|message| EvalError::Config {
        config: cfg.name.clone(),
        message,
    })?;
    check_strategy(cfg, engine)?;
    let engine = engine.with_config(cfg.pipeline);
    let questions: Vec<_> = dataset.items.iter().map(|i| i.question()).collect();
    let traces: Vec<InferenceTrace> = engine.infer_batch(&questions, parallelism).into_iter().map(|(_, t)| t).collect();
    Ok((EvalReport::assemble(cfg, dataset, &traces), traces))
}

pub fn evaluate(dataset: &QADataset, cfg: &EvalConfig, engine: &Engine, parallelism: usize) -> Result<EvalReport, EvalError> {
    evaluate_with_traces(dataset, cfg, engine, parallelism).map(|(r, _)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub config_name: String,
    /// Percentage points versus the baseline.
    pub accuracy_pp: f64,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// The first report is the baseline.
    pub reports: Vec<EvalReport>,
    /// One per non-baseline report, same order.
    pub deltas: Vec<Delta>,
}

impl AblationReport {
    pub fn from_reports(reports: Vec<EvalReport>) -> Result<Self, EvalError> {
        if reports.len() < 2 {
            return Err(EvalError::TooFewConfigs(reports.len()));
        }
        let base = &reports[0];
        let deltas = reports[1..]
            .iter()
            .map(|r| Delta {
                config_name: r.config_name.clone(),
                accuracy_pp: (r.accuracy() - base.accuracy()) * 100.0,
                latency_s: r.mean_latency_s - base.mean_latency_s,
            })
            .collect();
        Ok(AblationReport { reports, deltas })
    }
}

/// Evaluates each configuration on its own engine (engines differ when the
/// configurations differ in chunking) and reports deltas against the first.
pub fn ablate(dataset: &QADataset, runs: &[(EvalConfig, &Engine)], parallelism: usize) -> Result<AblationReport, EvalError> {
    if runs.len() < 2 {
        return Err(EvalError::TooFewConfigs(runs.len()));
    }
    let reports = runs
        .iter()
        .map(|(cfg, engine)| evaluate(dataset, cfg, engine, parallelism))
        .collect::<Result<Vec<_>, _>>()?;
    AblationReport::from_reports(reports)
}
