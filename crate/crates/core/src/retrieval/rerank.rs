//! Second-stage scoring across all candidates jointly.

use std::collections::{BTreeSet, HashSet};

use super::{Candidate, RankedChunk, RankedEvidence};
use crate::agents::prompts::{bindings, render_text};
use crate::agents::provider::{complete_structured, AgentProvider, AgentRole, CallLog, CompletionRequest};
use crate::corpus::Chunk;
use crate::vecstore::rank_order;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("scoring candidate {chunk_id} failed: {message}")]
pub struct RerankError {
    pub chunk_id: String,
    pub message: String,
}

/// Pointwise relevance of a chunk to a query; higher is more relevant.
pub trait RerankScorer: Send + Sync {
    fn identifier(&self) -> &str;

    fn score(&self, query: &str, chunk: &Chunk, log: &mut CallLog) -> Result<f64, String>;
}

/// Lowercased tokens split on anything that is neither alphanumeric nor a
/// dot; leading and trailing dots are dropped so "4.5" survives but "end."
/// becomes "end".
pub fn lexical_tokens(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric() && c != '.')
        .map(|t| t.trim_matches('.'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Fraction of distinct query tokens present in the chunk.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl RerankScorer for LexicalScorer {
    fn identifier(&self) -> &str {
        "lexical"
    }

    fn score(&self, query: &str, chunk: &Chunk, _log: &mut CallLog) -> Result<f64, String> {
        let q = lexical_tokens(query);
        if q.is_empty() {
            return Ok(0.0);
        }
        let c = lexical_tokens(&chunk.text);
        Ok(q.intersection(&c).count() as f64 / q.len() as f64)
    }
}

const RELEVANCE_PROMPT: &str = "You are an expert in hazards and resilience. Rate how relevant the passage is \
to the question on a scale from 0 to 1, where 1 means the passage directly answers it.\n\
Question: {question}\nPassage: {passage}\n\nOutput only the number.";

/// Provider-backed pointwise relevance in [0, 1].
pub struct LlmRelevanceScorer<P> {
    provider: P,
    identifier: String,
}

impl<P: AgentProvider> LlmRelevanceScorer<P> {
    pub fn new(provider: P) -> Self {
        let identifier = format!("llm:{}", provider.identifier());
        LlmRelevanceScorer { provider, identifier }
    }
}

impl<P: AgentProvider> RerankScorer for LlmRelevanceScorer<P> {
    fn identifier(&self) -> &str {
        &self.identifier
    }

    fn score(&self, query: &str, chunk: &Chunk, log: &mut CallLog) -> Result<f64, String> {
        let bindings = bindings([("question", query), ("passage", &chunk.text)]);
        let request = CompletionRequest {
            role: AgentRole::Relevance,
            system: render_text(RELEVANCE_PROMPT, &bindings).map_err(|e| e.to_string())?,
            user: String::new(),
            bindings,
            temperature: 0.0,
        };
        complete_structured(&self.provider, &request, log, |raw| {
            let x: f64 = raw
                .trim()
                .trim_end_matches('.')
                .parse()
                .map_err(|_| format!("not a number: {:?}", raw.trim()))?;
            if (0.0..=1.0).contains(&x) {
                Ok(x)
            } else {
                Err(format!("{x} outside [0, 1]"))
            }
        })
        .map_err(|e| e.to_string())
    }
}

/// Top-`k` candidates by `scorer`, ties by chunk id ascending. Candidates
/// from every hazard compete jointly; repeated ids keep their first entry.
pub fn rerank(
    scorer: &dyn RerankScorer,
    query: &str,
    candidates: Vec<Candidate>,
    k: usize,
    log: &mut CallLog,
) -> Result<RankedEvidence, RerankError> {
    assert!(k >= 1, "rerank depth must be at least 1");
    let mut seen = HashSet::new();
    let mut scored = Vec::with_capacity(candidates.len());
    for c in candidates {
        if !seen.insert(c.chunk.id.clone()) {
            continue;
        }
        let score = scorer.score(query, &c.chunk, log).map_err(|message| RerankError {
            chunk_id: c.chunk.id.clone(),
            message,
        })?;
        scored.push(RankedChunk { chunk: c.chunk, score });
    }
    scored.sort_by(|a, b| rank_order((&a.chunk.id, a.score), (&b.chunk.id, b.score)));
    scored.truncate(k);
    Ok(RankedEvidence {
        query: query.to_string(),
        chunks: scored,
    })
}
