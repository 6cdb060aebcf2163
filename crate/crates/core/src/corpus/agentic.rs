//! Proposition extraction and agentic grouping.

use serde::Serialize;
use serde_json::Value;

use super::{Chunk, ChunkSource, ChunkStrategy, CorpusError, Document, Paragraph, Proposition};
use crate::agents::prompts::{PromptTemplate, TemplateName};
use crate::agents::provider::{complete_structured, AgentProvider, AgentRole, CallLog, CompletionRequest};
use crate::jsonutil::parse_model_json;

/// Upper bound on propositions per agentic chunk (inclusive).
pub const MAX_PROPOSITIONS_PER_CHUNK: usize = 10;

pub fn extract_propositions(
    document: &Document,
    paragraph: &Paragraph,
    provider: &dyn AgentProvider,
    log: &mut CallLog,
) -> Result<Vec<Proposition>, CorpusError> {
    let year = document.event_year.to_string();
    let bindings = crate::agents::prompts::bindings([
        ("disaster_type", &document.hazard_type.name().to_lowercase()),
        ("year", &year),
        ("location", &document.event_location),
        ("paragraph", &paragraph.text),
    ]);
    let request = CompletionRequest {
        role: AgentRole::Proposition,
        system: PromptTemplate::get(TemplateName::Proposition)
            .render(&bindings)
            .expect("proposition bindings complete"),
        user: String::new(),
        bindings,
        temperature: 0.0,
    };
    let texts = complete_structured(provider, &request, log, parse_props)?;
    Ok(texts
        .into_iter()
        .map(|text| Proposition {
            text,
            document_id: document.id.clone(),
            paragraph_index: paragraph.index,
        })
        .collect())
}

fn parse_props(raw: &str) -> Result<Vec<String>, String> {
    let v = parse_model_json(raw)?;
    let list = v
        .get("Prop")
        .and_then(Value::as_array)
        .ok_or("missing \"Prop\" array")?;
    list.iter()
        .map(|p| p.as_str().map(str::to_string).ok_or_else(|| "non-string proposition".to_string()))
        .filter(|p| p.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .collect()
}

/// One chunk per proposition.
pub fn proposition_chunks(document: &Document, propositions: &[Proposition]) -> Vec<Chunk> {
    propositions
        .iter()
        .enumerate()
        .map(|(n, p)| Chunk {
            id: Chunk::make_id(&document.id, ChunkStrategy::Proposition, n),
            text: p.text.clone(),
            hazard_type: document.hazard_type,
            source: ChunkSource {
                document_id: p.document_id.clone(),
                paragraphs: vec![p.paragraph_index],
                span: None,
            },
            summary: None,
            propositions: Vec::new(),
            strategy: ChunkStrategy::Proposition,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct Group {
    summary: String,
    members: Vec<String>,
}

/// Groups propositions into summarized chunks of at most
/// [`MAX_PROPOSITIONS_PER_CHUNK`]. The provider's grouping must be an
/// order-preserving partition of the input with proposition text unchanged;
/// otherwise the output is rejected and regenerated. Groups that are too
/// large are split at the bound.
pub fn agentic_chunk(
    document: &Document,
    propositions: &[Proposition],
    provider: &dyn AgentProvider,
    log: &mut CallLog,
) -> Result<Vec<Chunk>, CorpusError> {
    if propositions.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = propositions.iter().map(|p| p.text.clone()).collect();
    let list = serde_json::to_string(&texts).expect("strings serialize");
    let bindings = crate::agents::prompts::bindings([("list_of_prop", &list)]);
    let request = CompletionRequest {
        role: AgentRole::AgenticGroup,
        system: PromptTemplate::get(TemplateName::AgenticGroup)
            .render(&bindings)
            .expect("grouping bindings complete"),
        user: String::new(),
        bindings,
        temperature: 0.0,
    };
    let groups = complete_structured(provider, &request, log, |raw| parse_groups(raw, &texts))?;

    let mut chunks = Vec::new();
    let mut cursor = 0;
    for group in groups {
        if group.members.len() > MAX_PROPOSITIONS_PER_CHUNK {
            log::warn!(
                "{}: grouping returned {} propositions in one chunk; splitting at {}",
                document.id,
                group.members.len(),
                MAX_PROPOSITIONS_PER_CHUNK
            );
        }
        for piece in group.members.chunks(MAX_PROPOSITIONS_PER_CHUNK) {
            let sources = &propositions[cursor..cursor + piece.len()];
            cursor += piece.len();
            let mut paragraphs: Vec<usize> = sources.iter().map(|p| p.paragraph_index).collect();
            paragraphs.sort_unstable();
            paragraphs.dedup();
            let mut text = group.summary.clone();
            for m in piece {
                text.push('\n');
                text.push_str(m);
            }
            chunks.push(Chunk {
                id: Chunk::make_id(&document.id, ChunkStrategy::Agentic, chunks.len()),
                text,
                hazard_type: document.hazard_type,
                source: ChunkSource {
                    document_id: document.id.clone(),
                    paragraphs,
                    span: None,
                },
                summary: Some(group.summary.clone()),
                propositions: piece.to_vec(),
                strategy: ChunkStrategy::Agentic,
            });
        }
    }
    Ok(chunks)
}

fn parse_groups(raw: &str, expected: &[String]) -> Result<Vec<Group>, String> {
    let v = parse_model_json(raw)?;
    let arr = v
        .get("Chunks")
        .and_then(Value::as_array)
        .ok_or("missing \"Chunks\" array")?;
    let mut groups = Vec::with_capacity(arr.len());
    for (i, c) in arr.iter().enumerate() {
        let summary = c
            .get("Summary")
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("chunk {i}: missing or empty \"Summary\""))?;
        let members = c
            .get("List of Propositions")
            .and_then(Value::as_array)
            .ok_or_else(|| format!("chunk {i}: missing \"List of Propositions\""))?
            .iter()
            .map(|m| m.as_str().map(str::to_string).ok_or_else(|| format!("chunk {i}: non-string proposition")))
            .collect::<Result<Vec<_>, _>>()?;
        if members.is_empty() {
            continue;
        }
        groups.push(Group {
            summary: summary.to_string(),
            members,
        });
    }
    let flat: Vec<&String> = groups.iter().flat_map(|g| &g.members).collect();
    if let Some(altered) = flat.iter().find(|m| !expected.contains(m)) {
        return Err(format!("altered proposition text: {altered:?}"));
    }
    if flat.len() != expected.len() || flat.iter().zip(expected).any(|(a, b)| *a != b) {
        return Err(format!(
            "grouping is not an order-preserving partition ({} of {} propositions)",
            flat.len(),
            expected.len()
        ));
    }
    Ok(groups)
}
