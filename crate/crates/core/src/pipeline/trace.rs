use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineVariant;
use crate::agents::roles::SufficiencyVerdict;
use crate::agents::AgentCall;
use crate::answer::{FinalAnswer, Question};
use crate::hazard::Hazard;
use crate::retrieval::{EvidenceContext, RankedEvidence, RoutingDistribution};

/// Bumped whenever a field is renamed or removed.
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSource {
    Corpus,
    Online,
    None,
}

impl EvidenceSource {
    pub fn name(self) -> &'static str {
        match self {
            EvidenceSource::Corpus => "corpus",
            EvidenceSource::Online => "online",
            EvidenceSource::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub t: usize,
    pub query_used: String,
    /// Present for routed variants.
    pub routing: Option<RoutingDistribution>,
    pub active: Option<Vec<Hazard>>,
    pub quotas: Option<BTreeMap<Hazard, usize>>,
    pub evidence: RankedEvidence,
    pub retrieval_error: Option<String>,
    /// Absent for variants without an evaluator.
    pub corpus_verdict: Option<SufficiencyVerdict>,
    pub search_context: Option<EvidenceContext>,
    pub search_verdict: Option<SufficiencyVerdict>,
    /// Only when every verdict of this iteration was insufficient.
    pub rewritten_to: Option<String>,
    pub rewrite_no_progress: bool,
    pub wall_time_s: f64,
}

/// Everything one run did. `evidence_source == None` exactly when the
/// answer is ungrounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceTrace {
    pub trace_version: u32,
    pub variant: PipelineVariant,
    /// As posed, before any rewrite.
    pub question: Question,
    /// Query handed to the answer writer.
    pub final_query: String,
    pub iterations: Vec<IterationRecord>,
    pub evidence_source: EvidenceSource,
    /// Chunk ids or URLs of the accepted evidence.
    pub evidence_sources: Vec<String>,
    pub final_answer: FinalAnswer,
    pub calls: Vec<AgentCall>,
    pub embedder_id: String,
    pub scorer_id: String,
    pub error: Option<String>,
    pub total_latency_s: f64,
}

impl InferenceTrace {
    pub(crate) fn failed(question: &Question, variant: PipelineVariant, error: String, latency: f64) -> Self {
        InferenceTrace {
            trace_version: TRACE_VERSION,
            variant,
            question: question.clone(),
            final_query: question.text.clone(),
            iterations: Vec::new(),
            evidence_source: EvidenceSource::None,
            evidence_sources: Vec::new(),
            final_answer: FinalAnswer::abstention(question.kind, false),
            calls: Vec::new(),
            embedder_id: String::new(),
            scorer_id: String::new(),
            error: Some(error),
            total_latency_s: latency,
        }
    }

    pub fn rewrite_count(&self) -> usize {
        self.iterations.iter().filter(|i| i.rewritten_to.is_some()).count()
    }

    /// The same trace with every wall-clock field zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut t = self.clone();
        t.total_latency_s = 0.0;
        for i in &mut t.iterations {
            i.wall_time_s = 0.0;
        }
        t
    }
}

pub fn write_traces_jsonl(path: &Path, traces: &[InferenceTrace]) -> std::io::Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for t in traces {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Rejects traces with a different `trace_version`.
pub fn read_traces_jsonl(path: &Path) -> std::io::Result<Vec<InferenceTrace>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: InferenceTrace = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        if t.trace_version != TRACE_VERSION {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: trace version {} (expected {TRACE_VERSION})", n + 1, t.trace_version),
            ));
        }
        out.push(t);
    }
    Ok(out)
}
