//! Prompt templates and single-pass placeholder rendering.
//!
//! A placeholder is `{name}` where `name` is an identifier
//! (`[A-Za-z_][A-Za-z0-9_]*`). Any other brace is literal text, so the JSON
//! examples embedded in the templates need no escaping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    Router,
    Evaluator,
    Rewriter,
    AnswerWriter,
    QaGenerator,
    Proposition,
    AgenticGroup,
}

impl TemplateName {
    pub const ALL: [TemplateName; 7] = [
        TemplateName::Router,
        TemplateName::Evaluator,
        TemplateName::Rewriter,
        TemplateName::AnswerWriter,
        TemplateName::QaGenerator,
        TemplateName::Proposition,
        TemplateName::AgenticGroup,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("{0} unbound")]
    Unbound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub body: &'static str,
}

impl PromptTemplate {
    pub fn get(name: TemplateName) -> PromptTemplate {
        let body = match name {
            TemplateName::Router => ROUTER,
            TemplateName::Evaluator => EVALUATOR,
            TemplateName::Rewriter => REWRITER,
            TemplateName::AnswerWriter => ANSWER_WRITER,
            TemplateName::QaGenerator => QA_GENERATOR,
            TemplateName::Proposition => PROPOSITION,
            TemplateName::AgenticGroup => AGENTIC_GROUP,
        };
        PromptTemplate { name, body }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for piece in scan(self.body) {
            if let Piece::Slot(name) = piece {
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }

    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, RenderError> {
        render_prompt(self, bindings)
    }
}

/// Substitutes every placeholder exactly once. Bound values are inserted
/// literally; braces inside them are never expanded.
pub fn render_prompt(
    template: &PromptTemplate,
    bindings: &BTreeMap<String, String>,
) -> Result<String, RenderError> {
    render_text(template.body, bindings)
}

/// [`render_prompt`] over an arbitrary body, for prompts outside the fixed set.
pub fn render_text(body: &str, bindings: &BTreeMap<String, String>) -> Result<String, RenderError> {
    let mut out = String::with_capacity(body.len() + 256);
    for piece in scan(body) {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(name) => match bindings.get(name) {
                Some(v) => out.push_str(v),
                None => return Err(RenderError::Unbound(name.to_string())),
            },
        }
    }
    Ok(out)
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn scan(body: &str) -> Vec<Piece<'_>> {
    let bytes = body.as_bytes();
    let mut pieces = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(len) = slot_len(&bytes[i + 1..]) {
                if text_start < i {
                    pieces.push(Piece::Text(&body[text_start..i]));
                }
                pieces.push(Piece::Slot(&body[i + 1..i + 1 + len]));
                i += len + 2;
                text_start = i;
                continue;
            }
        }
        i += 1;
    }
    if text_start < body.len() {
        pieces.push(Piece::Text(&body[text_start..]));
    }
    pieces
}

/// Length of the identifier if `rest` starts with `ident}`.
fn slot_len(rest: &[u8]) -> Option<usize> {
    let first = *rest.first()?;
    if !(first.is_ascii_alphabetic() || first == b'_') {
        return None;
    }
    let len = rest
        .iter()
        .take_while(|b| b.is_ascii_alphanumeric() || **b == b'_')
        .count();
    (rest.get(len) == Some(&b'}')).then_some(len)
}

/// Convenience for building a binding map from pairs.
pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

const QA_GENERATOR: &str = r#"Act as a hazard expert, generate an exam-ready QA item grounded in the paragraph.
Context: The {disaster_type} occurred in {year} at {location}. 
A paragraph from the reconnaissance report describes the hazard: {paragraph}.

Rules:
1) Each question must be strictly grounded in factual evidence from the paragraph
   and reflect hazard-specific or multi-hazard knowledge.
2) The question statement must always be written as a general exam-style question,
   without mentioning the paragraph or the source text.
3) If the text is unsuitable (e.g., TOC, Acknowledgements, References):
   - Return { } only.
4) Otherwise, create one QA item following the JSON format:
   - True/False → {"statement": <string>, "answer": "true"|"false"}
   - MC (A–D, one correct) → {"question": <string>,
                               "options": ["A. ...","B. ...","C. ...","D. ..."],
                               "correct": "A"|"B"|"C"|"D"}
5) Categorize the question under the categories: Hazard Characteristics, Analysis
   Approach, Impacts and Damage, Response and Recovery, Invalid
6) No explanations or extra text."#;

const PROPOSITION: &str = r#"Act as a hazard domain expert. Decompose the given paragraph into clear, 
self-contained propositions that can be understood independently of the source text.
Context: The {disaster_type} occurred in {year} at {location}. 
A paragraph from the reconnaissance report describes the hazard: {paragraph}.

Rules:
1) Split complex or compound sentences into minimal, simple statements.
2) Keep original wording whenever possible; ensure each statement stand alone.
3) Replace pronouns (it, they, this, that) with full entity names.
4) Preserve explicit details such as dates, times (timezone/Z), locations, agencies.
5) Output the results in JSON format as a list of propositions:
   {"Prop": ["<proposition_1>", "<proposition_2>", ...]}

Example:
Input: The Los Angeles storm occurred in 2015 at Southern California .. at 22:02Z,
  a funnel cloud was sighted near Lake Hughes and flash flooding with a car stuck 
  in rock and mudslide. .."
Output: {"Prop": [
  "During the Los Angeles storm in 2015, at 22:02 Z on October 15, the NWS reported
  flash flooding near Lake Hughes with a car stuck in a rock and mudslide." ]}"#;

const AGENTIC_GROUP: &str = r#"Act as a hazard domain expert. Given a list of factual propositions, group 
semantically related ones and generate concise summaries to form aggregated, 
context-aware chunks optimized for RAG.
Context: The propositions are provided as: {list_of_prop}.

Rules:
1) Process propositions sequentially in the given order.
2) Group consecutive propositions that are semantically related into one chunk.
   When a proposition is unrelated, finalize the chunk and start a new one.
3) Each chunk must contain no more than ten propositions.
4) For each chunk, write a short summary that captures the shared meaning.
   - Summaries must be concise and precise.
   - Preserve hazard or event details (dates, units, measurements).
   - Use consistent terminology across summaries.
5) Output the results in JSON format:
   {
     "Chunks": [
       {
         "Summary": "<string>",
         "List of Propositions": ["<prop1>", "<prop2>", ...]
       }
     ]
   }
6) Do not alter or invent facts; keep all proposition text unchanged.
7) Return only the JSON object, no extra explanations or commentary."#;

const ROUTER: &str = r#"Act as a routing expert agent. Classify a user's question into probabilities over 
natural hazard categories. These probabilities determine which hazard-specific 
RAG agent(s) should be activated.
Question: {Question}

Rules:
1) Output only a valid JSON object exactly matching the output example below.
2) Use the following hazard categories as keys.
3) Assign a normalized probability (0–1) to each category so that the total sums to 1.
4) Categories with probability >= 0.2 indicate active agents.
5) Do not include explanations, text descriptions, or additional fields.

Output Example:
{
  "Wildfire": 0.01,
  "Storm": 0.10,
  "Landslide": 0.05,
  "Hurricane": 0.61,
  "Flood": 0.21,
  "Earthquake": 0.01,
  "Tsunami": 0.01
}"#;

const EVALUATOR: &str = r#"You are an expert in hazards and resilience.Decide whether the related excerpts
contain sufficient information to answer the question or evaluate the statement.
Question: {question}
Related Evidence: {evidence}

Rules:
1) Judge the factual sufficiency of the excerpts with respect to the question.
2) Do not infer or assume information beyond what is provided.
3) Output only a single value:
   - '1' if the evidence provide enough information.
   - '0' if the evidence are insufficient."#;

const REWRITER: &str = r#"You are an expert in hazards and resilience with strong knowledge of information 
retrieval. Rewrite the given question to improve retrieval accuracy.
Original Question: {question}
Retrieved Insufficient Information: {evidence}

Rules:
1) Replace vague expressions with precise, domain-relevant language.
2) If the question is too broad, narrow it to highlight key entities or events.
3) If the question is too narrow, generalize slightly for broader information.
4) Maintain the original intent and semantics of the question.
5) Output only the rewritten question, no explanations or commentary."#;

const ANSWER_WRITER: &str = r#"You are an expert in hazards and resilience. Determine the correct answer based
on the retrieved evidence provided by reports or online resources.
Question: {question}
Trustworthy Evidence (if applicable): {evidence}

Rules:
1) Judge strictly on the factual information in the evidence.
2) Do not infer or assume information beyond what is given.
3) Output format:
   - If the question is True/False, answer with one word: true or false.
   - If the question is Multiple Choice, answer with one letter: A, B, C, or D.
4) Do not include punctuation, explanations, or additional text."#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_per_template() {
        let p = |n| PromptTemplate::get(n).placeholders();
        assert_eq!(p(TemplateName::Router), vec!["Question"]);
        assert_eq!(p(TemplateName::Evaluator), vec!["question", "evidence"]);
        assert_eq!(p(TemplateName::Rewriter), vec!["question", "evidence"]);
        assert_eq!(p(TemplateName::AnswerWriter), vec!["question", "evidence"]);
        assert_eq!(
            p(TemplateName::QaGenerator),
            vec!["disaster_type", "year", "location", "paragraph"]
        );
        assert_eq!(
            p(TemplateName::Proposition),
            vec!["disaster_type", "year", "location", "paragraph"]
        );
        assert_eq!(p(TemplateName::AgenticGroup), vec!["list_of_prop"]);
    }

    #[test]
    fn router_contains_question_verbatim() {
        let q = "Which levee breached during Hurricane Katrina?";
        let out = PromptTemplate::get(TemplateName::Router)
            .render(&bindings([("Question", q)]))
            .unwrap();
        assert!(out.contains(&format!("Question: {q}\n")));
        assert!(out.contains("\"Hurricane\": 0.61"));
    }

    #[test]
    fn missing_binding_is_named() {
        let err = PromptTemplate::get(TemplateName::Evaluator)
            .render(&bindings([("question", "q")]))
            .unwrap_err();
        assert_eq!(err.to_string(), "evidence unbound");
    }

    #[test]
    fn braces_in_values_are_literal() {
        let out = PromptTemplate::get(TemplateName::Evaluator)
            .render(&bindings([("question", "{evidence}"), ("evidence", "{question} {x}")]))
            .unwrap();
        assert!(out.contains("Question: {evidence}\n"));
        assert!(out.contains("Related Evidence: {question} {x}\n"));
    }

    #[test]
    fn json_examples_survive_rendering() {
        let out = PromptTemplate::get(TemplateName::QaGenerator)
            .render(&bindings([
                ("disaster_type", "flood"),
                ("year", "2019"),
                ("location", "Nebraska"),
                ("paragraph", "p"),
            ]))
            .unwrap();
        assert!(out.contains("Return { } only."));
        assert!(out.contains(r#"{"statement": <string>, "answer": "true"|"false"}"#));
        assert!(out.starts_with("Act as a hazard expert"));
    }
}
