//! The bounded retrieve, evaluate, search and rewrite loop.
//!
//! Per iteration: retrieve with the current query; accept corpus evidence if
//! the evaluator finds it sufficient; otherwise try online search and accept
//! its snippets alone if sufficient; otherwise rewrite the query from the
//! corpus evidence. No rewrite follows the final iteration, since its result
//! could never be used. The answer is generated from the current query and
//! the accepted evidence, or ungrounded when nothing was accepted.

mod trace;

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::roles::{evaluate_sufficiency, rewrite_question, write_answer, RouterAgent};
use crate::agents::search::{online_search, SearchBackend, UnreachableSearchBackend, MAX_SNIPPETS};
use crate::agents::{AgentProvider, CallLog};
use crate::answer::{FinalAnswer, Question};
use crate::retrieval::{concat_evidence, mor_retrieve, plain_retrieve, EvidenceContext, RankedEvidence, RerankScorer, RetrievalConfig};
use crate::vecstore::{CorpusIndex, EmbeddingProvider};

pub use trace::{read_traces_jsonl, write_traces_jsonl, EvidenceSource, InferenceTrace, IterationRecord, TRACE_VERSION};

pub const DEFAULT_MAX_ITERATIONS: usize = 5;

/// Which branches of the loop are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineVariant {
    /// Answer writer only, no evidence.
    ZeroShot,
    /// One unified-index retrieval, evidence used as-is.
    VanillaRag,
    /// One routed retrieval, evidence used as-is.
    MorOnly,
    /// Unified retrieval with evaluator and online search, one iteration.
    RagOnlineSearch,
    /// Unified retrieval with evaluator and rewriting, no online search.
    RagReflection,
    /// Everything.
    FullMora,
}

impl PipelineVariant {
    pub const ALL: [PipelineVariant; 6] = [
        PipelineVariant::ZeroShot,
        PipelineVariant::VanillaRag,
        PipelineVariant::MorOnly,
        PipelineVariant::RagOnlineSearch,
        PipelineVariant::RagReflection,
        PipelineVariant::FullMora,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineVariant::ZeroShot => "zero_shot",
            PipelineVariant::VanillaRag => "vanilla_rag",
            PipelineVariant::MorOnly => "mor_only",
            PipelineVariant::RagOnlineSearch => "rag_online_search",
            PipelineVariant::RagReflection => "rag_reflection",
            PipelineVariant::FullMora => "full_mora",
        }
    }

    /// Human-readable row label for reports.
    pub fn label(self) -> &'static str {
        match self {
            PipelineVariant::ZeroShot => "Zero-shot",
            PipelineVariant::VanillaRag => "Vanilla RAG",
            PipelineVariant::MorOnly => "MoR",
            PipelineVariant::RagOnlineSearch => "RAG + Online Search",
            PipelineVariant::RagReflection => "RAG + Reflection",
            PipelineVariant::FullMora => "MoRA-RAG",
        }
    }

    pub fn retrieves(self) -> bool {
        self != PipelineVariant::ZeroShot
    }

    pub fn routed(self) -> bool {
        matches!(self, PipelineVariant::MorOnly | PipelineVariant::FullMora)
    }

    pub fn evaluates(self) -> bool {
        matches!(
            self,
            PipelineVariant::RagOnlineSearch | PipelineVariant::RagReflection | PipelineVariant::FullMora
        )
    }

    pub fn searches(self) -> bool {
        matches!(self, PipelineVariant::RagOnlineSearch | PipelineVariant::FullMora)
    }

    pub fn rewrites(self) -> bool {
        matches!(self, PipelineVariant::RagReflection | PipelineVariant::FullMora)
    }
}

impl fmt::Display for PipelineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown pipeline variant '{0}' (expected one of zero_shot, vanilla_rag, mor_only, rag_online_search, rag_reflection, full_mora)")]
pub struct UnknownVariant(pub String);

impl FromStr for PipelineVariant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        PipelineVariant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub variant: PipelineVariant,
    /// At least 1.
    pub max_iterations: usize,
    pub retrieval: RetrievalConfig,
    /// Snippets requested from online search, 1..=5.
    pub search_top_n: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: PipelineVariant::FullMora,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            retrieval: RetrievalConfig::default(),
            search_top_n: MAX_SNIPPETS,
        }
    }
}

impl PipelineConfig {
    pub fn for_variant(variant: PipelineVariant) -> Self {
        PipelineConfig {
            variant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 {
            return Err("max_iterations must be at least 1".into());
        }
        if !(1..=MAX_SNIPPETS).contains(&self.search_top_n) {
            return Err(format!("search_top_n must be in 1..={MAX_SNIPPETS}"));
        }
        if self.retrieval.rerank_k == 0 {
            return Err("rerank_k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.retrieval.tau) {
            return Err("tau must be in [0, 1]".into());
        }
        Ok(())
    }

    fn loop_bound(&self) -> usize {
        if self.variant.rewrites() {
            self.max_iterations
        } else {
            1
        }
    }
}

/// Provider handles for each role plus the search backend.
#[derive(Clone)]
pub struct Agents {
    pub router: Arc<dyn AgentProvider>,
    pub evaluator: Arc<dyn AgentProvider>,
    pub rewriter: Arc<dyn AgentProvider>,
    pub answer_writer: Arc<dyn AgentProvider>,
    pub search: Arc<dyn SearchBackend>,
}

impl Agents {
    /// One provider for every role.
    pub fn shared(provider: Arc<dyn AgentProvider>, search: Arc<dyn SearchBackend>) -> Self {
        Agents {
            router: provider.clone(),
            evaluator: provider.clone(),
            rewriter: provider.clone(),
            answer_writer: provider,
            search,
        }
    }

    pub fn without_search(provider: Arc<dyn AgentProvider>) -> Self {
        Agents::shared(provider, Arc::new(UnreachableSearchBackend))
    }
}

/// Immutable inference context; cheap to share across threads.
#[derive(Clone)]
pub struct Engine {
    pub index: Arc<CorpusIndex>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub agents: Agents,
    pub scorer: Arc<dyn RerankScorer>,
    pub config: PipelineConfig,
}

fn seconds(since: Instant) -> f64 {
    since.elapsed().as_millis() as f64 / 1000.0
}

impl Engine {
    pub fn new(
        index: Arc<CorpusIndex>,
        embedder: Arc<dyn EmbeddingProvider>,
        agents: Agents,
        scorer: Arc<dyn RerankScorer>,
        config: PipelineConfig,
    ) -> Self {
        Engine {
            index,
            embedder,
            agents,
            scorer,
            config,
        }
    }

    pub fn with_config(&self, config: PipelineConfig) -> Engine {
        Engine {
            config,
            ..self.clone()
        }
    }

    /// Retrieval for one iteration. Failures become empty evidence plus an
    /// error message; the loop carries on.
    fn retrieve(&self, query: &str, log: &mut CallLog) -> (Option<crate::retrieval::MorOutcome>, RankedEvidence, Option<String>) {
        let cfg = &self.config.retrieval;
        let empty = || RankedEvidence {
            query: query.to_string(),
            chunks: Vec::new(),
        };
        if self.config.variant.routed() {
            let router = RouterAgent {
                provider: self.agents.router.as_ref(),
            };
            match mor_retrieve(query, &self.index, self.embedder.as_ref(), &router, self.scorer.as_ref(), cfg, log) {
                Ok(out) => {
                    let ev = out.evidence.clone();
                    (Some(out), ev, None)
                }
                Err(e) => (None, empty(), Some(e.to_string())),
            }
        } else {
            match plain_retrieve(query, &self.index, self.embedder.as_ref(), self.scorer.as_ref(), cfg, log) {
                Ok(ev) => (None, ev, None),
                Err(e) => (None, empty(), Some(e.to_string())),
            }
        }
    }

    pub fn infer(&self, question: &Question) -> (FinalAnswer, InferenceTrace) {
        let started = Instant::now();
        let variant = self.config.variant;
        let mut log = CallLog::new();
        let mut iterations = Vec::new();
        let mut current = question.clone();
        let mut accepted: Option<(EvidenceContext, EvidenceSource)> = None;

        if variant.retrieves() {
            let bound = self.config.loop_bound();
            for t in 1..=bound {
                let t0 = Instant::now();
                let (mor, evidence, retrieval_error) = self.retrieve(&current.text, &mut log);
                let context = concat_evidence(&evidence);
                let mut rec = IterationRecord {
                    t,
                    query_used: current.text.clone(),
                    routing: mor.as_ref().map(|m| m.routing),
                    active: mor.as_ref().map(|m| m.active.hazards.clone()),
                    quotas: mor.as_ref().map(|m| m.allocation.quotas.clone()),
                    evidence,
                    retrieval_error,
                    corpus_verdict: None,
                    search_context: None,
                    search_verdict: None,
                    rewritten_to: None,
                    rewrite_no_progress: false,
                    wall_time_s: 0.0,
                };

                if !variant.evaluates() {
                    if !context.is_empty() {
                        accepted = Some((context, EvidenceSource::Corpus));
                    }
                    rec.wall_time_s = seconds(t0);
                    iterations.push(rec);
                    break;
                }

                let rendered = current.render();
                let verdict = evaluate_sufficiency(self.agents.evaluator.as_ref(), &rendered, &context, &mut log);
                let sufficient = verdict.sufficient;
                rec.corpus_verdict = Some(verdict);
                if sufficient {
                    accepted = Some((context, EvidenceSource::Corpus));
                    rec.wall_time_s = seconds(t0);
                    iterations.push(rec);
                    break;
                }

                if variant.searches() {
                    let snippets = online_search(self.agents.search.as_ref(), &current.text, self.config.search_top_n, &mut log);
                    let sv = evaluate_sufficiency(self.agents.evaluator.as_ref(), &rendered, &snippets, &mut log);
                    let ok = sv.sufficient;
                    rec.search_context = Some(snippets.clone());
                    rec.search_verdict = Some(sv);
                    if ok {
                        accepted = Some((snippets, EvidenceSource::Online));
                        rec.wall_time_s = seconds(t0);
                        iterations.push(rec);
                        break;
                    }
                }

                if variant.rewrites() && t < bound {
                    let rw = rewrite_question(self.agents.rewriter.as_ref(), &current.text, &context, &mut log);
                    current = current.with_text(rw.question.clone());
                    rec.rewritten_to = Some(rw.question);
                    rec.rewrite_no_progress = rw.no_progress;
                }
                rec.wall_time_s = seconds(t0);
                iterations.push(rec);
            }
        }

        let (evidence, source) = match &accepted {
            Some((ctx, src)) => (Some(ctx), *src),
            None => (None, EvidenceSource::None),
        };
        let answer = write_answer(self.agents.answer_writer.as_ref(), &current, evidence, &mut log);
        let trace = InferenceTrace {
            trace_version: TRACE_VERSION,
            variant,
            question: question.clone(),
            final_query: current.text.clone(),
            iterations,
            evidence_source: source,
            evidence_sources: evidence.map(|e| e.sources.clone()).unwrap_or_default(),
            final_answer: answer.clone(),
            calls: log.calls,
            embedder_id: self.index.embedder_id().to_string(),
            scorer_id: self.scorer.identifier().to_string(),
            error: None,
            total_latency_s: seconds(started),
        };
        (answer, trace)
    }

    /// Runs each question independently on up to `parallelism` threads.
    /// Output order matches input order; a panicking run becomes an
    /// abstention with the panic message recorded.
    pub fn infer_batch(&self, questions: &[Question], parallelism: usize) -> Vec<(FinalAnswer, InferenceTrace)> {
        use rayon::prelude::*;

        let run = |q: &Question| {
            let started = Instant::now();
            catch_unwind(AssertUnwindSafe(|| self.infer(q))).unwrap_or_else(|panic| {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "run panicked".into());
                log::error!("inference failed: {msg}");
                let trace = InferenceTrace::failed(q, self.config.variant, msg, seconds(started));
                (trace.final_answer.clone(), trace)
            })
        };
        if parallelism <= 1 {
            return questions.iter().map(run).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .expect("thread pool");
        pool.install(|| questions.par_iter().map(run).collect())
    }
}

#[cfg(test)]
mod tests;
