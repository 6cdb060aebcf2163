//! # hazardrag
//!
//! Hazard-aware retrieval-augmented question answering.
//!
//! The crate covers the whole offline-testable path:
//!
//! - [`corpus`]: document cleansing and four chunking strategies
//!   (fixed-token, paragraph, proposition, agentic).
//! - [`vecstore`]: embeddings, per-hazard vector databases, exact cosine
//!   top-l search and a checksummed index file format.
//! - [`retrieval`]: hazard routing thresholds, proportional budget
//!   allocation, per-hazard coarse search, global reranking and evidence
//!   concatenation.
//! - [`agents`]: provider abstraction, prompt templates and the five agent
//!   roles with strict output parsing and bounded retries.
//! - [`pipeline`]: the bounded retrieve / evaluate / search / rewrite loop.
//! - [`qagen`]: True/False and Multiple-Choice dataset construction.
//! - [`eval`]: accuracy, breakdowns and ablations.
//! - [`synthetic`]: a seeded desk corpus with matching simulated agents,
//!   used by the acceptance suite and the `desk` CLI command.

pub mod agents;
pub mod answer;
pub mod corpus;
pub mod eval;
pub mod hazard;
mod hashing;
mod http;
mod jsonutil;
pub mod pipeline;
pub mod qagen;
pub mod retrieval;
pub mod synthetic;
pub mod vecstore;

pub use answer::{AnswerValue, Choice, FinalAnswer, Question, QuestionKind};
pub use corpus::{Chunk, ChunkStrategy, Document, Paragraph};
pub use hazard::Hazard;
pub use pipeline::{Engine, InferenceTrace, PipelineConfig, PipelineVariant};
pub use retrieval::{RankedEvidence, RetrievalConfig, RoutingDistribution};
pub use vecstore::{CorpusIndex, Embedding, EmbeddingProvider};
