//! Mixture-of-Retrieval: routing, threshold filtering, proportional budget
//! allocation, per-hazard coarse search and global reranking.

mod budget;
mod rerank;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agents::search::SearchSnippet;
use crate::agents::CallLog;
use crate::corpus::Chunk;
use crate::hazard::Hazard;
use crate::vecstore::{embed, CorpusIndex, EmbeddingProvider, HazardDatabase, VecError};

pub use budget::{active_set, allocate_budget, ActiveSet, BudgetAllocation};
pub use rerank::{lexical_tokens, rerank, LexicalScorer, LlmRelevanceScorer, RerankError, RerankScorer};

pub const DEFAULT_TAU: f64 = 0.2;
pub const DEFAULT_COARSE_BUDGET: usize = 50;
pub const DEFAULT_RERANK_K: usize = 5;

/// A probability for each of the seven hazards, summing to 1 within 1e-6.
/// Serialized as a map from hazard name to probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Hazard, f64>", into = "BTreeMap<Hazard, f64>")]
pub struct RoutingDistribution {
    probs: [f64; Hazard::COUNT],
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DistributionError {
    #[error("missing probability for {0}")]
    Missing(Hazard),
    #[error("probability for {0} is {1}, outside [0, 1]")]
    OutOfRange(Hazard, f64),
    #[error("probabilities sum to {0}, not 1")]
    Sum(f64),
}

impl RoutingDistribution {
    pub fn from_array(probs: [f64; Hazard::COUNT]) -> Result<Self, DistributionError> {
        for h in Hazard::ALL {
            let p = probs[h.index()];
            if !(0.0..=1.0).contains(&p) {
                return Err(DistributionError::OutOfRange(h, p));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(DistributionError::Sum(sum));
        }
        Ok(RoutingDistribution { probs })
    }

    pub fn uniform() -> Self {
        RoutingDistribution {
            probs: [1.0 / Hazard::COUNT as f64; Hazard::COUNT],
        }
    }

    /// All mass on one hazard.
    pub fn point(hazard: Hazard) -> Self {
        let mut probs = [0.0; Hazard::COUNT];
        probs[hazard.index()] = 1.0;
        RoutingDistribution { probs }
    }

    pub fn prob(&self, hazard: Hazard) -> f64 {
        self.probs[hazard.index()]
    }

    pub fn as_array(&self) -> &[f64; Hazard::COUNT] {
        &self.probs
    }

    /// Highest-probability hazard; ties go to the earliest in category order.
    pub fn argmax(&self) -> Hazard {
        let mut best = Hazard::ALL[0];
        for h in Hazard::ALL {
            if self.prob(h) > self.prob(best) {
                best = h;
            }
        }
        best
    }
}

impl TryFrom<BTreeMap<Hazard, f64>> for RoutingDistribution {
    type Error = DistributionError;

    fn try_from(map: BTreeMap<Hazard, f64>) -> Result<Self, Self::Error> {
        let mut probs = [0.0; Hazard::COUNT];
        for h in Hazard::ALL {
            probs[h.index()] = *map.get(&h).ok_or(DistributionError::Missing(h))?;
        }
        RoutingDistribution::from_array(probs)
    }
}

impl From<RoutingDistribution> for BTreeMap<Hazard, f64> {
    fn from(d: RoutingDistribution) -> Self {
        Hazard::ALL.iter().map(|&h| (h, d.prob(h))).collect()
    }
}

/// Produces a routing distribution for a query. Implementations log any
/// provider calls they make.
pub trait QueryRouter {
    fn route(&self, question: &str, log: &mut CallLog) -> RoutingDistribution;
}

/// A fixed distribution, regardless of the query.
#[derive(Debug, Clone, Copy)]
pub struct FixedRouter(pub RoutingDistribution);

impl QueryRouter for FixedRouter {
    fn route(&self, _question: &str, _log: &mut CallLog) -> RoutingDistribution {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub tau: f64,
    pub coarse_budget: usize,
    pub rerank_k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            tau: DEFAULT_TAU,
            coarse_budget: DEFAULT_COARSE_BUDGET,
            rerank_k: DEFAULT_RERANK_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub chunk: Chunk,
    pub coarse_score: f64,
    pub hazard: Hazard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedChunk {
    pub chunk: Chunk,
    pub score: f64,
}

/// At most K chunks, score non-increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedEvidence {
    pub query: String,
    pub chunks: Vec<RankedChunk>,
}

impl RankedEvidence {
    pub fn ids(&self) -> Vec<&str> {
        self.chunks.iter().map(|c| c.chunk.id.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }
}

/// Concatenated evidence: one numbered block per source, in rank order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceContext {
    pub text: String,
    pub sources: Vec<String>,
}

impl EvidenceContext {
    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Blocks `"[i] (url) text"`.
    pub fn from_snippets(snippets: &[SearchSnippet]) -> Self {
        let text = snippets
            .iter()
            .enumerate()
            .map(|(i, s)| format!("[{}] ({}) {}", i + 1, s.source_url, s.text))
            .collect::<Vec<_>>()
            .join("\n");
        EvidenceContext {
            text,
            sources: snippets.iter().map(|s| s.source_url.clone()).collect(),
        }
    }
}

/// Blocks `"[i] (doc_id, hazard) text"`, newline-separated.
pub fn concat_evidence(evidence: &RankedEvidence) -> EvidenceContext {
    let text = evidence
        .chunks
        .iter()
        .enumerate()
        .map(|(i, c)| format!("[{}] ({}, {}) {}", i + 1, c.chunk.source.document_id, c.chunk.hazard_type, c.chunk.text))
        .collect::<Vec<_>>()
        .join("\n");
    EvidenceContext {
        text,
        sources: evidence.chunks.iter().map(|c| c.chunk.id.clone()).collect(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Vec(#[from] VecError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
}

/// Everything one MoR retrieval decided, for the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorOutcome {
    pub routing: RoutingDistribution,
    pub active: ActiveSet,
    pub allocation: BudgetAllocation,
    pub candidate_count: usize,
    pub evidence: RankedEvidence,
}

fn candidates_from(db: &HazardDatabase, hits: Vec<(&Chunk, f64)>) -> Vec<Candidate> {
    hits.into_iter()
        .map(|(c, s)| Candidate {
            chunk: c.clone(),
            coarse_score: s,
            hazard: db.hazard_type(),
        })
        .collect()
}

/// Route, threshold, apportion, search each active database with its
/// quota, then rerank the union. Quotas of hazards absent from the index
/// are forfeited.
pub fn mor_retrieve(
    question: &str,
    index: &CorpusIndex,
    embedder: &dyn EmbeddingProvider,
    router: &dyn QueryRouter,
    scorer: &dyn RerankScorer,
    cfg: &RetrievalConfig,
    log: &mut CallLog,
) -> Result<MorOutcome, RetrievalError> {
    let routing = router.route(question, log);
    let active = active_set(&routing, cfg.tau);
    let allocation = allocate_budget(&routing, &active, cfg.coarse_budget);
    let mut candidates = Vec::new();
    let live: Vec<_> = allocation
        .quotas
        .iter()
        .filter(|(_, &l)| l > 0)
        .filter_map(|(h, &l)| index.database(*h).map(|db| (db, l)))
        .collect();
    if !live.is_empty() {
        index.check_embedder(embedder)?;
        let q = embed(embedder, question)?;
        for (db, l) in live {
            candidates.extend(candidates_from(db, db.coarse_search(&q, l)?));
        }
    }
    let candidate_count = candidates.len();
    let evidence = rerank(scorer, question, candidates, cfg.rerank_k, log)?;
    Ok(MorOutcome {
        routing,
        active,
        allocation,
        candidate_count,
        evidence,
    })
}

/// Two-stage retrieval over every database merged into one: top-L by
/// cosine, then rerank to K.
pub fn plain_retrieve(
    question: &str,
    index: &CorpusIndex,
    embedder: &dyn EmbeddingProvider,
    scorer: &dyn RerankScorer,
    cfg: &RetrievalConfig,
    log: &mut CallLog,
) -> Result<RankedEvidence, RetrievalError> {
    if index.is_empty() {
        return Ok(RankedEvidence {
            query: question.into(),
            chunks: Vec::new(),
        });
    }
    index.check_embedder(embedder)?;
    let q = embed(embedder, question)?;
    let candidates = index
        .coarse_search_unified(&q, cfg.coarse_budget)?
        .into_iter()
        .map(|(c, s)| Candidate {
            chunk: c.clone(),
            coarse_score: s,
            hazard: c.hazard_type,
        })
        .collect();
    Ok(rerank(scorer, question, candidates, cfg.rerank_k, log)?)
}
