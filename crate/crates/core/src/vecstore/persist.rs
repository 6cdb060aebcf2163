//! Index file format.
//!
//! ```text
//! <header JSON>\n
//! <f32 little-endian vectors, databases in category order, records in order>
//! <chunk JSON Lines, same order>
//! ```
//!
//! The header carries the format version, dimensions, per-database counts,
//! the byte lengths of both sections and the SHA-256 of everything after
//! the header line.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{CorpusIndex, Embedding, HazardDatabase, VecError};
use crate::corpus::Chunk;
use crate::hashing::sha256_hex;
use crate::hazard::Hazard;

pub const FORMAT_NAME: &str = "hazardrag-index";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    embedder_id: String,
    created_at: DateTime<Utc>,
    dim: usize,
    databases: Vec<DatabaseEntry>,
    vector_bytes: usize,
    chunk_bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatabaseEntry {
    hazard: Hazard,
    count: usize,
}

pub fn save_index(index: &CorpusIndex, path: &Path) -> Result<(), VecError> {
    let mut vectors = Vec::with_capacity(index.len() * index.dim() * 4);
    let mut chunks = Vec::new();
    let mut entries = Vec::new();
    for db in index.databases() {
        entries.push(DatabaseEntry {
            hazard: db.hazard_type(),
            count: db.len(),
        });
        for r in db.records() {
            for v in r.embedding.values() {
                vectors.extend_from_slice(&v.to_le_bytes());
            }
            serde_json::to_writer(&mut chunks, &r.chunk).map_err(|e| VecError::Format(e.to_string()))?;
            chunks.push(b'\n');
        }
    }
    let mut body = vectors;
    let vector_bytes = body.len();
    let chunk_bytes = chunks.len();
    body.extend_from_slice(&chunks);
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        embedder_id: index.embedder_id().into(),
        created_at: index.created_at(),
        dim: index.dim(),
        databases: entries,
        vector_bytes,
        chunk_bytes,
        sha256: sha256_hex(&body),
    };
    let mut out = serde_json::to_vec(&header).map_err(|e| VecError::Format(e.to_string()))?;
    out.push(b'\n');
    out.extend_from_slice(&body);
    std::fs::write(path, out)?;
    Ok(())
}

/// Checks the version first, then the checksum, then structure.
pub fn load_index(path: &Path) -> Result<CorpusIndex, VecError> {
    let bytes = std::fs::read(path)?;
    let Some(nl) = bytes.iter().position(|&b| b == b'\n') else {
        return Err(VecError::Checksum("file ends inside the header".into()));
    };
    let raw: serde_json::Value =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| VecError::Format(format!("header: {e}")))?;
    let version = raw.get("version").and_then(serde_json::Value::as_u64).ok_or_else(|| VecError::Format("header has no version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(VecError::Version {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: FORMAT_VERSION,
        });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| VecError::Format(format!("header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(VecError::Format(format!("not an index file (format {:?})", header.format)));
    }
    let body = &bytes[nl + 1..];
    if body.len() != header.vector_bytes + header.chunk_bytes {
        return Err(VecError::Checksum(format!(
            "expected {} body bytes, found {}",
            header.vector_bytes + header.chunk_bytes,
            body.len()
        )));
    }
    if sha256_hex(body) != header.sha256 {
        return Err(VecError::Checksum("sha256 mismatch".into()));
    }
    let total: usize = header.databases.iter().map(|d| d.count).sum();
    if header.vector_bytes != total * header.dim * 4 {
        return Err(VecError::Format("vector section size disagrees with counts".into()));
    }
    let (vec_bytes, chunk_bytes) = body.split_at(header.vector_bytes);
    let chunk_text = std::str::from_utf8(chunk_bytes).map_err(|e| VecError::Format(e.to_string()))?;
    let mut chunk_lines = chunk_text.lines();
    let mut floats = vec_bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));

    let mut databases = BTreeMap::new();
    for entry in &header.databases {
        let mut db = HazardDatabase::new(entry.hazard, header.dim);
        for _ in 0..entry.count {
            let line = chunk_lines.next().ok_or_else(|| VecError::Format("missing chunk payload".into()))?;
            let chunk: Chunk = serde_json::from_str(line).map_err(|e| VecError::Format(format!("chunk: {e}")))?;
            let values: Vec<f32> = floats.by_ref().take(header.dim).collect();
            db.insert(chunk, Embedding::new(values)?)?;
        }
        if databases.insert(entry.hazard, db).is_some() {
            return Err(VecError::Format(format!("hazard {} listed twice", entry.hazard)));
        }
    }
    if chunk_lines.next().is_some() {
        return Err(VecError::Format("trailing chunk payloads".into()));
    }
    Ok(CorpusIndex::from_parts(header.embedder_id, header.created_at, header.dim, databases))
}

#[cfg(test)]
mod tests {
    use super::super::tests::chunk;
    use super::super::{build_index, HashEmbeddingProvider};
    use super::*;

    fn two_hazard_index() -> CorpusIndex {
        let p = HashEmbeddingProvider::new(24, 5);
        let chunks = vec![
            chunk("f:1", Hazard::Flood, "levee breach near the pump station"),
            chunk("f:2", Hazard::Flood, "Peak stage 9.3 m at the gauge"),
            chunk("q:1", Hazard::Earthquake, "liquefaction and \"lateral spreading\"\nat the port"),
        ];
        build_index(&chunks, &p).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.idx");
        let idx = two_hazard_index();
        save_index(&idx, &path).unwrap();
        assert_eq!(load_index(&path).unwrap(), idx);
        let empty = CorpusIndex::new("e", 4);
        save_index(&empty, &path).unwrap();
        assert_eq!(load_index(&path).unwrap(), empty);
    }

    #[test]
    fn truncation_is_checksum_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.idx");
        save_index(&two_hazard_index(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_index(&path), Err(VecError::Checksum(_))));
        std::fs::write(&path, &bytes[..20]).unwrap();
        assert!(matches!(load_index(&path), Err(VecError::Checksum(_))));
    }

    #[test]
    fn flipped_byte_is_checksum_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.idx");
        save_index(&two_hazard_index(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 0x20;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_index(&path), Err(VecError::Checksum(_))));
    }

    #[test]
    fn newer_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.idx");
        save_index(&two_hazard_index(), &path).unwrap();
        let text = std::fs::read(&path).unwrap();
        let nl = text.iter().position(|&b| b == b'\n').unwrap();
        let mut header: serde_json::Value = serde_json::from_slice(&text[..nl]).unwrap();
        header["version"] = 2.into();
        let mut out = serde_json::to_vec(&header).unwrap();
        out.extend_from_slice(&text[nl..]);
        std::fs::write(&path, out).unwrap();
        assert!(matches!(load_index(&path), Err(VecError::Version { found: 2, supported: 1 })));
    }
}
