//! Report ingestion and chunking.
//!
//! Documents arrive as JSON records or plain text, are cleansed of
//! non-content paragraphs, and are segmented by one of four strategies.

mod agentic;
mod cleanse;
mod fixed;
mod io;
mod tokenizer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentProvider, CallLog, RetriesExhausted};
use crate::hazard::Hazard;

pub use agentic::{agentic_chunk, extract_propositions, proposition_chunks, MAX_PROPOSITIONS_PER_CHUNK};
pub use cleanse::{classify_paragraph, cleanse};
pub use fixed::{chunk_fixed_token, fixed_token_spans, DEFAULT_OVERLAP, DEFAULT_WINDOW};
pub use io::{read_chunks_jsonl, read_document, write_chunks_jsonl, DocumentRecord};
pub use tokenizer::{Tokenizer, WhitespaceTokenizer};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid fixed-token window: window={window}, overlap={overlap} (need window > 0 and overlap < window)")]
    InvalidWindow { window: usize, overlap: usize },
    #[error("document {0}: paragraph indices must be strictly increasing")]
    ParagraphOrder(String),
    #[error("strategy {0} needs an agent provider")]
    ProviderRequired(ChunkStrategy),
    #[error("structured output: {0}")]
    StructuredOutput(#[from] RetriesExhausted),
    #[error("unknown chunking strategy '{0}'")]
    UnknownStrategy(String),
    #[error("document parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParagraphRole {
    Content,
    Toc,
    Acknowledgments,
    References,
    OtherNoncontent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub index: usize,
    pub text: String,
    pub role: ParagraphRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub hazard_type: Hazard,
    pub event_year: i32,
    pub event_location: String,
    pub body: Vec<Paragraph>,
}

impl Document {
    /// Builds a document from raw paragraph texts, numbering them from 0 and
    /// assigning roles with [`classify_paragraph`].
    pub fn from_texts<I, S>(
        id: impl Into<String>,
        title: impl Into<String>,
        hazard_type: Hazard,
        event_year: i32,
        event_location: impl Into<String>,
        paragraphs: I,
    ) -> Document
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let body = paragraphs
            .into_iter()
            .map(Into::into)
            .filter(|t: &String| !t.trim().is_empty())
            .enumerate()
            .map(|(index, text)| Paragraph {
                index,
                role: classify_paragraph(&text),
                text,
            })
            .collect();
        Document {
            id: id.into(),
            title: title.into(),
            hazard_type,
            event_year,
            event_location: event_location.into(),
            body,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.body.windows(2).any(|w| w[0].index >= w[1].index) {
            return Err(CorpusError::ParagraphOrder(self.id.clone()));
        }
        Ok(())
    }

    /// The same document with only content paragraphs.
    pub fn cleansed(&self) -> Document {
        Document {
            body: cleanse(self),
            ..self.clone()
        }
    }

    pub fn context(&self) -> EventContext {
        EventContext {
            hazard_type: self.hazard_type,
            year: self.event_year,
            location: self.event_location.clone(),
        }
    }
}

/// Event metadata fed to the generation prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventContext {
    pub hazard_type: Hazard,
    pub year: i32,
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposition {
    pub text: String,
    pub document_id: String,
    pub paragraph_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkStrategy {
    FixedToken,
    Paragraph,
    Proposition,
    Agentic,
}

impl ChunkStrategy {
    pub const ALL: [ChunkStrategy; 4] = [
        ChunkStrategy::FixedToken,
        ChunkStrategy::Paragraph,
        ChunkStrategy::Proposition,
        ChunkStrategy::Agentic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChunkStrategy::FixedToken => "fixed_token",
            ChunkStrategy::Paragraph => "paragraph",
            ChunkStrategy::Proposition => "proposition",
            ChunkStrategy::Agentic => "agentic",
        }
    }

    fn id_tag(self) -> &'static str {
        match self {
            ChunkStrategy::FixedToken => "ft",
            ChunkStrategy::Paragraph => "p",
            ChunkStrategy::Proposition => "pr",
            ChunkStrategy::Agentic => "ag",
        }
    }

    pub fn needs_provider(self) -> bool {
        matches!(self, ChunkStrategy::Proposition | ChunkStrategy::Agentic)
    }
}

impl fmt::Display for ChunkStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChunkStrategy {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChunkStrategy::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| CorpusError::UnknownStrategy(s.to_string()))
    }
}

/// Token offsets of a fixed-token chunk: the disjoint core and the core
/// extended by the overlap on both sides. Half-open ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub core_start: usize,
    pub core_end: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSource {
    pub document_id: String,
    /// Source paragraph indices, ascending.
    pub paragraphs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<TokenSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub text: String,
    pub hazard_type: Hazard,
    pub source: ChunkSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    /// Member propositions (agentic chunks only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub propositions: Vec<String>,
    pub strategy: ChunkStrategy,
}

impl Chunk {
    pub(crate) fn make_id(document_id: &str, strategy: ChunkStrategy, ordinal: usize) -> String {
        format!("{document_id}:{}:{ordinal:04}", strategy.id_tag())
    }

    /// Checks the per-strategy invariants.
    pub fn check(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err(format!("chunk {} has empty text", self.id));
        }
        match self.strategy {
            ChunkStrategy::Agentic => {
                if self.summary.as_deref().is_none_or(|s| s.trim().is_empty()) {
                    return Err(format!("agentic chunk {} lacks a summary", self.id));
                }
                let n = self.propositions.len();
                if n == 0 || n > MAX_PROPOSITIONS_PER_CHUNK {
                    return Err(format!("agentic chunk {} has {n} propositions", self.id));
                }
            }
            ChunkStrategy::FixedToken if self.source.span.is_none() => {
                return Err(format!("fixed-token chunk {} lacks a token span", self.id));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Knobs for [`chunk_document`].
pub struct ChunkingOptions<'a> {
    pub window: usize,
    pub overlap: usize,
    pub tokenizer: &'a dyn Tokenizer,
    pub provider: Option<&'a dyn AgentProvider>,
}

impl Default for ChunkingOptions<'_> {
    fn default() -> Self {
        ChunkingOptions {
            window: DEFAULT_WINDOW,
            overlap: DEFAULT_OVERLAP,
            tokenizer: &WhitespaceTokenizer,
            provider: None,
        }
    }
}

pub fn chunk_paragraph(document: &Document) -> Vec<Chunk> {
    cleanse(document)
        .into_iter()
        .enumerate()
        .map(|(n, p)| Chunk {
            id: Chunk::make_id(&document.id, ChunkStrategy::Paragraph, n),
            text: p.text,
            hazard_type: document.hazard_type,
            source: ChunkSource {
                document_id: document.id.clone(),
                paragraphs: vec![p.index],
                span: None,
            },
            summary: None,
            propositions: Vec::new(),
            strategy: ChunkStrategy::Paragraph,
        })
        .collect()
}

/// Segments one document. Each call is sequential; provider calls land in `log`.
pub fn chunk_document(
    document: &Document,
    strategy: ChunkStrategy,
    options: &ChunkingOptions<'_>,
    log: &mut CallLog,
) -> Result<Vec<Chunk>, CorpusError> {
    match strategy {
        ChunkStrategy::FixedToken => {
            chunk_fixed_token(document, options.window, options.overlap, options.tokenizer)
        }
        ChunkStrategy::Paragraph => Ok(chunk_paragraph(document)),
        ChunkStrategy::Proposition | ChunkStrategy::Agentic => {
            let provider = options
                .provider
                .ok_or(CorpusError::ProviderRequired(strategy))?;
            let mut props = Vec::new();
            for p in cleanse(document) {
                props.extend(extract_propositions(document, &p, provider, log)?);
            }
            if strategy == ChunkStrategy::Proposition {
                Ok(proposition_chunks(document, &props))
            } else {
                agentic_chunk(document, &props, provider, log)
            }
        }
    }
}

/// Chunks many documents, up to `parallelism` at a time. Output order
/// follows input order.
pub fn chunk_corpus(
    documents: &[Document],
    strategy: ChunkStrategy,
    options: &ChunkingOptions<'_>,
    parallelism: usize,
) -> Result<(Vec<Vec<Chunk>>, CallLog), CorpusError> {
    use rayon::prelude::*;

    let run = |d: &Document| {
        let mut log = CallLog::new();
        chunk_document(d, strategy, options, &mut log).map(|c| (c, log))
    };
    let results: Vec<Result<(Vec<Chunk>, CallLog), CorpusError>> = if parallelism <= 1 {
        documents.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .expect("thread pool");
        pool.install(|| documents.par_iter().map(run).collect())
    };
    let mut all = Vec::with_capacity(results.len());
    let mut log = CallLog::new();
    for r in results {
        let (chunks, l) = r?;
        all.push(chunks);
        log.append(l);
    }
    Ok((all, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn doc(paragraphs: &[&str]) -> Document {
        Document::from_texts("d1", "T", Hazard::Flood, 2019, "Nebraska", paragraphs.iter().copied())
    }

    #[test]
    fn paragraph_chunks_are_identity() {
        let d = doc(&["alpha beta", "gamma", "delta epsilon"]);
        let chunks = chunk_paragraph(&d);
        assert_eq!(chunks.len(), 3);
        for (c, p) in chunks.iter().zip(&d.body) {
            assert_eq!(c.text, p.text);
            assert_eq!(c.source.paragraphs, vec![p.index]);
            c.check().unwrap();
        }
        assert_eq!(chunks[0].id, "d1:p:0000");
    }

    #[test]
    fn paragraph_chunks_skip_noncontent() {
        let d = doc(&[
            "Table of Contents\n1. Intro ........ 1",
            "The levee failed at two locations.",
            "Acknowledgments\nWe thank the county.",
            "Scour exposed the pier foundations.",
            "References\n[1] Smith, J. (2019). Floods. doi:10/x",
        ]);
        let chunks = chunk_paragraph(&d);
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[1].source.paragraphs, vec![3]);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in ChunkStrategy::ALL {
            assert_eq!(s.name().parse::<ChunkStrategy>().unwrap(), s);
        }
        assert!("semantic".parse::<ChunkStrategy>().is_err());
    }

    #[test]
    fn llm_strategies_require_provider() {
        let d = doc(&["one"]);
        let err = chunk_document(&d, ChunkStrategy::Agentic, &ChunkingOptions::default(), &mut CallLog::new())
            .unwrap_err();
        assert!(matches!(err, CorpusError::ProviderRequired(ChunkStrategy::Agentic)));
    }

    #[test]
    fn validate_rejects_unordered_paragraphs() {
        let mut d = doc(&["a", "b"]);
        d.body[1].index = 0;
        assert!(d.validate().is_err());
    }
}
