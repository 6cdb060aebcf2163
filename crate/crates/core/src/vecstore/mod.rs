//! Per-hazard vector databases with exact cosine search.

mod embedder;
mod persist;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::hazard::Hazard;

pub use embedder::{embed, EmbeddingProvider, HashEmbeddingProvider, HttpEmbeddingProvider, DEFAULT_DIM};
pub use persist::{load_index, save_index, FORMAT_NAME, FORMAT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum VecError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding has non-finite values")]
    NonFinite,
    #[error("zero-norm embedding has undefined similarity")]
    ZeroNorm,
    #[error("duplicate chunk id {0}")]
    DuplicateId(String),
    #[error("index was built with embedder {index}, query embedder is {query}")]
    EmbedderMismatch { index: String, query: String },
    #[error("index format version {found} is not supported (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("index checksum failure: {0}")]
    Checksum(String),
    #[error("index file is malformed: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A dense vector. Values are stored as `f32`; similarity is computed in `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f32>,
}

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Embedding, VecError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VecError::NonFinite);
        }
        Ok(Embedding { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    fn dot(&self, other: &Embedding) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }
}

pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, VecError> {
    if a.dim() != b.dim() {
        return Err(VecError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(VecError::ZeroNorm);
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub chunk: Chunk,
    pub embedding: Embedding,
}

/// Score descending, then chunk id ascending.
pub(crate) fn rank_order(a: (&str, f64), b: (&str, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardDatabase {
    hazard_type: Hazard,
    dim: usize,
    records: Vec<VectorRecord>,
    /// Cached `records[i].embedding.norm()`; always non-zero.
    norms: Vec<f64>,
}

impl HazardDatabase {
    pub fn new(hazard_type: Hazard, dim: usize) -> Self {
        HazardDatabase {
            hazard_type,
            dim,
            records: Vec::new(),
            norms: Vec::new(),
        }
    }

    pub fn hazard_type(&self) -> Hazard {
        self.hazard_type
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[VectorRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Rejects zero-norm vectors and ids already present.
    pub fn insert(&mut self, chunk: Chunk, embedding: Embedding) -> Result<(), VecError> {
        if embedding.dim() != self.dim {
            return Err(VecError::DimensionMismatch {
                expected: self.dim,
                got: embedding.dim(),
            });
        }
        let norm = embedding.norm();
        if norm == 0.0 {
            return Err(VecError::ZeroNorm);
        }
        if self.records.iter().any(|r| r.chunk.id == chunk.id) {
            return Err(VecError::DuplicateId(chunk.id));
        }
        self.records.push(VectorRecord { chunk, embedding });
        self.norms.push(norm);
        Ok(())
    }

    /// The `l` most similar chunks, score descending, ties by id ascending.
    pub fn coarse_search(&self, query: &Embedding, l: usize) -> Result<Vec<(&Chunk, f64)>, VecError> {
        if query.dim() != self.dim {
            return Err(VecError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        if l == 0 || self.records.is_empty() {
            return Ok(Vec::new());
        }
        let qn = query.norm();
        if qn == 0.0 {
            return Err(VecError::ZeroNorm);
        }
        let mut scored: Vec<(usize, f64)> = self
            .records
            .iter()
            .zip(&self.norms)
            .enumerate()
            .map(|(i, (r, n))| (i, (r.embedding.dot(query) / (n * qn)).clamp(-1.0, 1.0)))
            .collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| {
            rank_order((&self.records[a.0].chunk.id, a.1), (&self.records[b.0].chunk.id, b.1))
        };
        if l < scored.len() {
            scored.select_nth_unstable_by(l - 1, cmp);
            scored.truncate(l);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored.into_iter().map(|(i, s)| (&self.records[i].chunk, s)).collect())
    }
}

/// The union of per-hazard databases sharing one embedder.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    databases: BTreeMap<Hazard, HazardDatabase>,
    embedder_id: String,
    created_at: DateTime<Utc>,
    dim: usize,
}

impl CorpusIndex {
    pub fn new(embedder_id: impl Into<String>, dim: usize) -> Self {
        CorpusIndex {
            databases: BTreeMap::new(),
            embedder_id: embedder_id.into(),
            created_at: Utc::now(),
            dim,
        }
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn databases(&self) -> impl Iterator<Item = &HazardDatabase> {
        self.databases.values()
    }

    pub fn database(&self, hazard: Hazard) -> Option<&HazardDatabase> {
        self.databases.get(&hazard)
    }

    /// Total number of chunks across all databases.
    pub fn len(&self) -> usize {
        self.databases.values().map(HazardDatabase::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts into the chunk's hazard database; ids are unique index-wide.
    pub fn insert(&mut self, chunk: Chunk, embedding: Embedding) -> Result<(), VecError> {
        if self.databases.values().any(|db| db.records.iter().any(|r| r.chunk.id == chunk.id)) {
            return Err(VecError::DuplicateId(chunk.id));
        }
        let dim = self.dim;
        self.databases
            .entry(chunk.hazard_type)
            .or_insert_with(|| HazardDatabase::new(chunk.hazard_type, dim))
            .insert(chunk, embedding)
    }

    /// Top-`l` over all databases merged into one, same ordering rule.
    pub fn coarse_search_unified(&self, query: &Embedding, l: usize) -> Result<Vec<(&Chunk, f64)>, VecError> {
        let mut all = Vec::new();
        for db in self.databases.values() {
            all.extend(db.coarse_search(query, l)?);
        }
        all.sort_unstable_by(|a, b| rank_order((&a.0.id, a.1), (&b.0.id, b.1)));
        all.truncate(l);
        Ok(all)
    }

    pub(crate) fn from_parts(
        embedder_id: String,
        created_at: DateTime<Utc>,
        dim: usize,
        databases: BTreeMap<Hazard, HazardDatabase>,
    ) -> Self {
        CorpusIndex {
            databases,
            embedder_id,
            created_at,
            dim,
        }
    }

    /// Rejects a query embedder other than the one that built the index.
    pub fn check_embedder(&self, provider: &dyn EmbeddingProvider) -> Result<(), VecError> {
        if provider.identifier() != self.embedder_id {
            return Err(VecError::EmbedderMismatch {
                index: self.embedder_id.clone(),
                query: provider.identifier().to_string(),
            });
        }
        Ok(())
    }
}

/// Embeds every chunk once and partitions by hazard.
pub fn build_index(chunks: &[Chunk], provider: &dyn EmbeddingProvider) -> Result<CorpusIndex, VecError> {
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = chunks.iter().find(|c| !seen.insert(c.id.as_str())) {
        return Err(VecError::DuplicateId(dup.id.clone()));
    }
    let mut index = CorpusIndex::new(provider.identifier(), provider.dimensionality());
    const BATCH: usize = 64;
    for batch in chunks.chunks(BATCH) {
        let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(VecError::EmptyText);
        }
        let vectors = provider.embed_batch(&texts)?;
        if vectors.len() != batch.len() {
            return Err(VecError::Provider(format!(
                "asked for {} embeddings, got {}",
                batch.len(),
                vectors.len()
            )));
        }
        for (chunk, e) in batch.iter().zip(vectors) {
            index.insert(chunk.clone(), e)?;
        }
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ChunkSource, ChunkStrategy};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn chunk(id: &str, hazard: Hazard, text: &str) -> Chunk {
        Chunk {
            id: id.into(),
            text: text.into(),
            hazard_type: hazard,
            source: ChunkSource {
                document_id: id.split(':').next().unwrap().into(),
                paragraphs: vec![0],
                span: None,
            },
            summary: None,
            propositions: Vec::new(),
            strategy: ChunkStrategy::Paragraph,
        }
    }

    fn e(v: &[f32]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn oracle<'a>(db: &'a HazardDatabase, q: &Embedding, l: usize) -> Vec<&'a str> {
        let mut all: Vec<(&str, f64)> = db
            .records()
            .iter()
            .map(|r| (r.chunk.id.as_str(), cosine(&r.embedding, q).unwrap()))
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
        all.into_iter().take(l).map(|x| x.0).collect()
    }

    #[test]
    fn cosine_basics() {
        let v = e(&[0.3, -1.2, 2.0]);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-9);
        assert!(cosine(&e(&[1.0, 0.0]), &e(&[0.0, 1.0])).unwrap().abs() < 1e-9);
        assert!((cosine(&v, &e(&[0.9, -3.6, 6.0])).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(cosine(&v, &e(&[0.0; 3])), Err(VecError::ZeroNorm)));
        assert!(matches!(cosine(&v, &e(&[1.0])), Err(VecError::DimensionMismatch { .. })));
        assert!(Embedding::new(vec![f32::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in prop::collection::vec(-10.0f32..10.0, 8),
            b in prop::collection::vec(-10.0f32..10.0, 8),
            alpha in 0.01f32..100.0,
        ) {
            let (ea, eb) = (e(&a), e(&b));
            prop_assume!(ea.norm() > 1e-3 && eb.norm() > 1e-3);
            let ab = cosine(&ea, &eb).unwrap();
            prop_assert!((ab - cosine(&eb, &ea).unwrap()).abs() < 1e-12);
            let scaled = e(&a.iter().map(|x| x * alpha).collect::<Vec<_>>());
            prop_assert!((cosine(&scaled, &eb).unwrap() - ab).abs() < 1e-6);
        }
    }

    #[test]
    fn build_partitions_by_hazard() {
        let p = HashEmbeddingProvider::new(64, 7);
        let mut chunks: Vec<Chunk> = (0..4).map(|i| chunk(&format!("f:{i}"), Hazard::Flood, &format!("flood text {i}"))).collect();
        chunks.extend((0..2).map(|i| chunk(&format!("q:{i}"), Hazard::Earthquake, &format!("quake text {i}"))));
        let idx = build_index(&chunks, &p).unwrap();
        assert_eq!(idx.databases().count(), 2);
        assert_eq!(idx.database(Hazard::Flood).unwrap().len(), 4);
        assert_eq!(idx.database(Hazard::Earthquake).unwrap().len(), 2);
        assert_eq!(idx.len(), chunks.len());
        assert_eq!(idx.embedder_id(), p.identifier());

        assert!(build_index(&[], &p).unwrap().is_empty());
        chunks.push(chunk("f:0", Hazard::Storm, "dup"));
        assert!(matches!(build_index(&chunks, &p), Err(VecError::DuplicateId(id)) if id == "f:0"));
    }

    #[test]
    fn zero_norm_rejected_at_insert() {
        let mut db = HazardDatabase::new(Hazard::Flood, 2);
        assert!(matches!(db.insert(chunk("a", Hazard::Flood, "x"), e(&[0.0, 0.0])), Err(VecError::ZeroNorm)));
    }

    #[test]
    fn search_edge_cases_and_ties() {
        let mut db = HazardDatabase::new(Hazard::Flood, 2);
        for id in ["c", "a", "b"] {
            db.insert(chunk(id, Hazard::Flood, id), e(&[1.0, 0.0])).unwrap();
        }
        db.insert(chunk("z", Hazard::Flood, "z"), e(&[1.0, 1.0])).unwrap();
        let q = e(&[1.0, 0.0]);
        assert!(db.coarse_search(&q, 0).unwrap().is_empty());
        let ids: Vec<_> = db.coarse_search(&q, 10).unwrap().into_iter().map(|(c, _)| c.id.clone()).collect();
        assert_eq!(ids, ["a", "b", "c", "z"]);
        let ids: Vec<_> = db.coarse_search(&q, 2).unwrap().into_iter().map(|(c, _)| c.id.clone()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert!(db.coarse_search(&e(&[1.0]), 1).is_err());
    }

    #[test]
    fn thousand_vectors_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 32;
        let mut db = HazardDatabase::new(Hazard::Storm, dim);
        for i in 0..1000 {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            db.insert(chunk(&format!("s:{i:04}"), Hazard::Storm, "t"), e(&v)).unwrap();
        }
        let q = e(&(0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f32>>());
        let got: Vec<_> = db.coarse_search(&q, 50).unwrap().into_iter().map(|(c, _)| c.id.as_str()).collect();
        assert_eq!(got, oracle(&db, &q, 50));
    }

    #[test]
    fn unified_search_merges_databases() {
        let mut idx = CorpusIndex::new("m", 2);
        idx.insert(chunk("f1", Hazard::Flood, "x"), e(&[1.0, 0.0])).unwrap();
        idx.insert(chunk("e1", Hazard::Earthquake, "x"), e(&[0.9, 0.1])).unwrap();
        idx.insert(chunk("e2", Hazard::Earthquake, "x"), e(&[0.0, 1.0])).unwrap();
        assert!(matches!(idx.insert(chunk("f1", Hazard::Storm, "x"), e(&[1.0, 0.0])), Err(VecError::DuplicateId(_))));
        let ids: Vec<_> = idx.coarse_search_unified(&e(&[1.0, 0.0]), 2).unwrap().into_iter().map(|(c, _)| c.id.clone()).collect();
        assert_eq!(ids, ["f1", "e1"]);
    }
}
