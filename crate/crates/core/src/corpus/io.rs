//! Document input formats and chunk JSON Lines.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Chunk, CorpusError, Document};
use crate::hazard::Hazard;

/// JSON document record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub hazard_type: Hazard,
    pub event_year: i32,
    #[serde(default)]
    pub event_location: String,
    pub paragraphs: Vec<String>,
}

impl From<DocumentRecord> for Document {
    fn from(r: DocumentRecord) -> Self {
        Document::from_texts(r.id, r.title, r.hazard_type, r.event_year, r.event_location, r.paragraphs)
    }
}

impl From<&Document> for DocumentRecord {
    fn from(d: &Document) -> Self {
        DocumentRecord {
            id: d.id.clone(),
            title: d.title.clone(),
            hazard_type: d.hazard_type,
            event_year: d.event_year,
            event_location: d.event_location.clone(),
            paragraphs: d.body.iter().map(|p| p.text.clone()).collect(),
        }
    }
}

/// Reads a `.json` record or a plain-text report.
///
/// Plain text: paragraphs are separated by blank lines. An optional leading
/// block of `Key: value` lines (`Title`, `Hazard`, `Year`, `Location`) sets
/// metadata; otherwise `default_hazard` must be provided. The id is the file
/// stem.
pub fn read_document(path: &Path, default_hazard: Option<Hazard>) -> Result<Document, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let parse_err = |message: String| CorpusError::Parse {
        path: path.display().to_string(),
        message,
    };
    if path.extension().is_some_and(|e| e == "json") {
        let rec: DocumentRecord = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
        return Ok(rec.into());
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "document".into());
    let mut blocks = split_blocks(&text);
    let mut title = id.clone();
    let mut hazard = default_hazard;
    let mut year = 0;
    let mut location = String::new();
    if let Some(first) = blocks.first() {
        if let Some(meta) = parse_header(first) {
            for (k, v) in meta {
                match k.as_str() {
                    "title" => title = v,
                    "hazard" | "hazard_type" => {
                        hazard = Some(v.parse().map_err(|e: crate::hazard::UnknownHazard| parse_err(e.to_string()))?)
                    }
                    "year" | "event_year" => year = v.parse().map_err(|_| parse_err(format!("bad year '{v}'")))?,
                    "location" | "event_location" => location = v,
                    _ => {}
                }
            }
            blocks.remove(0);
        }
    }
    let hazard = hazard.ok_or_else(|| parse_err("no hazard type (add a 'Hazard:' header or pass a default)".into()))?;
    Ok(Document::from_texts(id, title, hazard, year, location, blocks))
}

fn split_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                blocks.push(cur.join("\n"));
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        blocks.push(cur.join("\n"));
    }
    blocks
}

const HEADER_KEYS: [&str; 7] = ["title", "hazard", "hazard_type", "year", "event_year", "location", "event_location"];

fn parse_header(block: &str) -> Option<Vec<(String, String)>> {
    block
        .lines()
        .map(|l| {
            let (k, v) = l.split_once(':')?;
            let k = k.trim().to_ascii_lowercase();
            HEADER_KEYS.contains(&k.as_str()).then(|| (k, v.trim().to_string()))
        })
        .collect()
}

pub fn write_chunks_jsonl(path: &Path, chunks: &[Chunk]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for c in chunks {
        serde_json::to_writer(&mut w, c).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_chunks_jsonl(path: &Path) -> Result<Vec<Chunk>, CorpusError> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            message: format!("line {}: {e}", n + 1),
        })?;
        out.push(c);
    }
    Ok(out)
}
