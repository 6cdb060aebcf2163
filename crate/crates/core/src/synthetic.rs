//! A seeded desk corpus and simulated agents that act on it.
//!
//! Every planted fact is one sentence of the form
//! `In the {Town} {hazard} of {year}, the {attribute} was {n} {unit}.`
//! The simulated agents read the template bindings of each request and
//! answer by exact lookup of that sentence prefix in the evidence, so the
//! outcome of a run depends only on what retrieval put in front of them.
//!
//! Decoy chunks are tagged with a hazard the desk corpus never uses. Each
//! echoes one question in lower case (so it scores at least as well as the
//! true chunk under lexical reranking) and then asserts a wrong value. A
//! unified index surfaces them first; routed retrieval never looks at their
//! database.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde_json::{json, Value};

use crate::agents::roles::routing_json;
use crate::agents::search::FixtureSearchBackend;
use crate::agents::{AgentProvider, AgentRole, CompletionRequest, ProviderError};
use crate::answer::{AnswerValue, Choice};
use crate::corpus::{chunk_paragraph, Chunk, ChunkSource, ChunkStrategy, Document};
use crate::eval::{ablate, AblationReport, EvalConfig, EvalError};
use crate::hashing::{fnv1a64, mix64};
use crate::hazard::Hazard;
use crate::pipeline::{Agents, Engine, PipelineConfig, PipelineVariant};
use crate::qagen::{build_dataset, LedgerEntry, QADataset, QaCategory};
use crate::retrieval::{LexicalScorer, RoutingDistribution};
use crate::vecstore::{build_index, CorpusIndex, HashEmbeddingProvider, VecError};

pub const DESK_HAZARDS: [Hazard; 3] = [Hazard::Flood, Hazard::Earthquake, Hazard::Wildfire];
pub const DOCS_PER_HAZARD: usize = 10;
/// Never used by desk documents.
pub const DECOY_HAZARD: Hazard = Hazard::Storm;
pub const DESK_EMBED_DIM: usize = 256;
pub const DESK_PROVIDER_ID: &str = "desk-sim-v1";

const ROUTER_PEAK: f64 = 0.94;
const VALUE_STEP: u32 = 37;

struct Attribute {
    name: &'static str,
    unit: &'static str,
    category: QaCategory,
}

const fn attr(name: &'static str, unit: &'static str, category: QaCategory) -> Attribute {
    Attribute { name, unit, category }
}

/// Four attributes per desk hazard, one per category.
const ATTRIBUTES: [[Attribute; 4]; 3] = [
    [
        attr("number of survey transects analyzed", "transects", QaCategory::AnalysisApproach),
        attr("peak river stage", "centimeters", QaCategory::HazardCharacteristics),
        attr("number of flooded homes", "homes", QaCategory::ImpactsAndDamage),
        attr("number of sandbag crews deployed", "crews", QaCategory::ResponseAndRecovery),
    ],
    [
        attr("number of accelerometer stations analyzed", "stations", QaCategory::AnalysisApproach),
        attr("surface rupture length", "kilometers", QaCategory::HazardCharacteristics),
        attr("number of collapsed buildings", "buildings", QaCategory::ImpactsAndDamage),
        attr("number of days until water service returned", "days", QaCategory::ResponseAndRecovery),
    ],
    [
        attr("number of satellite scenes analyzed", "scenes", QaCategory::AnalysisApproach),
        attr("burned area", "hectares", QaCategory::HazardCharacteristics),
        attr("number of destroyed structures", "structures", QaCategory::ImpactsAndDamage),
        attr("number of evacuation shelters opened", "shelters", QaCategory::ResponseAndRecovery),
    ],
];

const TOWN_STEMS: [&str; 10] = ["Ash", "Bel", "Cor", "Dun", "Eld", "Fen", "Gal", "Hol", "Ivy", "Jun"];
const TOWN_SUFFIXES: [&str; 3] = ["ford", "mont", "wick"];

static FACT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<key>In the (?P<town>[A-Z][a-z]+) (?P<hz>[a-z]+) of (?P<year>\d{4}), the (?P<attr>[a-z ]+?) was )(?P<value>\d+ [a-z]+)\.$").unwrap()
});
static STEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^In the (?P<event>[A-Z][a-z]+ [a-z]+ of \d{4}), what was the (?P<attr>[a-z ]+)\?$").unwrap());

/// One planted fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeskFact {
    pub document_id: String,
    pub paragraph_index: usize,
    pub category: QaCategory,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeskWorld {
    pub seed: u64,
    pub documents: Vec<Document>,
    pub facts: Vec<DeskFact>,
}

fn draw(seed: u64, key: &str, modulus: u64) -> u64 {
    mix64(fnv1a64(seed, key.as_bytes())) % modulus
}

fn fact_sentence(town: &str, hazard: &str, year: i32, a: &Attribute, value: u32) -> String {
    format!("In the {town} {hazard} of {year}, the {} was {value} {}.", a.name, a.unit)
}

impl DeskWorld {
    /// 3 hazards by 10 documents. Each document has a table of contents, an
    /// overview, one fact and a reference list; every third document carries
    /// a second fact. 40 facts in total.
    pub fn generate(seed: u64) -> DeskWorld {
        let mut documents = Vec::new();
        let mut facts = Vec::new();
        for (h, hazard) in DESK_HAZARDS.iter().enumerate() {
            let word = hazard.name().to_lowercase();
            for (d, stem) in TOWN_STEMS.iter().enumerate().take(DOCS_PER_HAZARD) {
                let town = format!("{}{}", stem, TOWN_SUFFIXES[h]);
                let year = 1995 + (h * DOCS_PER_HAZARD + d) as i32;
                let id = format!("desk-{word}-{d:02}");
                let mut paragraphs = vec![
                    "Table of Contents\n1. Overview .......... 1\n2. Observations .......... 3\n3. References .......... 9".to_string(),
                    format!(
                        "The {town} {word} of {year} affected the {town} district. Field teams documented conditions across the region over several weeks."
                    ),
                ];
                let mut slots = vec![d % 4];
                if (h * DOCS_PER_HAZARD + d).is_multiple_of(3) {
                    slots.push((d + 1) % 4);
                }
                for slot in slots {
                    let a = &ATTRIBUTES[h][slot];
                    let value = 100 + draw(seed, &format!("{id}/{slot}"), 800) as u32;
                    let sentence = fact_sentence(&town, &word, year, a, value);
                    facts.push(DeskFact {
                        document_id: id.clone(),
                        paragraph_index: paragraphs.len(),
                        category: a.category,
                        sentence: sentence.clone(),
                    });
                    paragraphs.push(sentence);
                }
                paragraphs.push(format!("References\n[1] Field reconnaissance notes, {town}, {year}."));
                documents.push(Document::from_texts(
                    id,
                    format!("{town} {word} reconnaissance"),
                    *hazard,
                    year,
                    town,
                    paragraphs,
                ));
            }
        }
        DeskWorld { seed, documents, facts }
    }

    /// Paragraph chunks of every document.
    pub fn chunks(&self) -> Vec<Chunk> {
        self.documents.iter().flat_map(chunk_paragraph).collect()
    }
}

fn category_of(attribute: &str) -> Option<QaCategory> {
    ATTRIBUTES.iter().flatten().find(|a| a.name == attribute).map(|a| a.category)
}

fn shifted(value: &str, k: u32) -> String {
    let (n, unit) = value.split_once(' ').expect("value has a unit");
    let n: u32 = n.parse().expect("numeric value");
    format!("{} {unit}", n + VALUE_STEP * k)
}

/// The JSON a QA writer would emit for `paragraph`, or `{}`.
fn qa_for(seed: u64, paragraph: &str) -> Value {
    let Some(c) = FACT.captures(paragraph) else {
        return json!({});
    };
    let category = category_of(&c["attr"]).expect("desk attribute").name();
    let value = &c["value"];
    match draw(seed, paragraph, 3) {
        0 => json!({"statement": paragraph, "answer": "true", "category": category}),
        1 => json!({
            "statement": format!("{}{}.", &c["key"], shifted(value, 1)),
            "answer": "false",
            "category": category,
        }),
        _ => {
            let correct = draw(seed ^ 1, paragraph, 4) as usize;
            let mut wrong = 1..;
            let options: Vec<String> = Choice::ALL
                .iter()
                .enumerate()
                .map(|(i, ch)| {
                    let v = if i == correct { value.to_string() } else { shifted(value, wrong.next().unwrap()) };
                    format!("{}. {v}", ch.letter())
                })
                .collect();
            json!({
                "question": format!("In the {} {} of {}, what was the {}?", &c["town"], &c["hz"], &c["year"], &c["attr"]),
                "options": options,
                "correct": Choice::ALL[correct].letter().to_string(),
                "category": category,
            })
        }
    }
}

/// The sentence prefix that would state the answer to `question` (first
/// line of a rendered question).
fn answer_key(question: &str) -> Option<String> {
    let first = question.lines().next()?.trim();
    if let Some(c) = FACT.captures(first) {
        return Some(c["key"].to_string());
    }
    STEM.captures(first)
        .map(|c| format!("In the {}, the {} was ", &c["event"], &c["attr"]))
}

/// The value the first matching sentence in `evidence` asserts.
fn lookup(evidence: &str, key: &str) -> Option<String> {
    let at = evidence.find(key)? + key.len();
    let rest = &evidence[at..];
    Some(rest[..rest.find('.').unwrap_or(rest.len())].trim().to_string())
}

fn answer(question: &str, evidence: &str) -> String {
    let Some(key) = answer_key(question) else {
        return "unknown".into();
    };
    let Some(found) = lookup(evidence, &key) else {
        return "unknown".into();
    };
    let mut lines = question.lines();
    let first = lines.next().unwrap_or("");
    if let Some(c) = FACT.captures(first.trim()) {
        return (c["value"] == found).to_string();
    }
    lines
        .filter_map(|o| o.split_once(". "))
        .find(|(_, text)| text.trim() == found)
        .map(|(letter, _)| letter.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn route(question: &str) -> RoutingDistribution {
    let lower = question.to_lowercase();
    let hit = Hazard::ALL
        .into_iter()
        .find(|h| lower.split(|c: char| !c.is_alphanumeric()).any(|t| t == h.name().to_lowercase()));
    match hit {
        Some(h) => {
            let rest = (1.0 - ROUTER_PEAK) / (Hazard::ALL.len() - 1) as f64;
            let mut probs = [rest; 7];
            probs[h.index()] = ROUTER_PEAK;
            RoutingDistribution::from_array(probs).expect("valid distribution")
        }
        None => RoutingDistribution::uniform(),
    }
}

/// Every agent role of the desk world behind one provider.
#[derive(Debug, Clone)]
pub struct DeskAgent {
    seed: u64,
}

impl DeskAgent {
    pub fn new(seed: u64) -> Self {
        DeskAgent { seed }
    }
}

impl AgentProvider for DeskAgent {
    fn identifier(&self) -> &str {
        DESK_PROVIDER_ID
    }

    fn complete(&self, r: &CompletionRequest) -> Result<String, ProviderError> {
        let b = |k: &str| r.binding(k).unwrap_or("");
        Ok(match r.role {
            AgentRole::Router => routing_json(&route(b("Question"))),
            AgentRole::Evaluator => {
                let found = answer_key(b("question")).is_some_and(|k| lookup(b("evidence"), &k).is_some());
                if found { "1" } else { "0" }.into()
            }
            AgentRole::Rewriter => format!("Regarding the reconnaissance report: {}", b("question")),
            AgentRole::AnswerWriter => answer(b("question"), b("evidence")),
            AgentRole::QaGenerator => qa_for(self.seed, b("paragraph")).to_string(),
            AgentRole::Relevance => {
                let hit = answer_key(b("question")).is_some_and(|k| b("passage").contains(&k));
                if hit { "1.0" } else { "0.0" }.into()
            }
            role => return Err(ProviderError::Scripted(format!("desk agent does not play {role}"))),
        })
    }
}

/// One decoy per dataset item, in dataset order.
pub fn decoy_chunks(dataset: &QADataset) -> Vec<Chunk> {
    dataset
        .items
        .iter()
        .enumerate()
        .map(|(n, item)| {
            let q = &item.statement_or_question;
            let key = answer_key(q).expect("desk question");
            let wrong = match item.gold {
                AnswerValue::Bool(true) => shifted(&FACT.captures(q).expect("statement")["value"], 11),
                AnswerValue::Bool(false) => FACT.captures(q).expect("statement")["value"].to_string(),
                AnswerValue::Choice(c) => {
                    let o = item.options.iter().find(|o| !o.starts_with(c.letter())).expect("options");
                    o.split_once(". ").expect("option").1.to_string()
                }
            };
            let echo = q.to_lowercase().replace([',', '?'], "");
            let doc = format!("decoy-{n:02}");
            Chunk {
                id: format!("{doc}:p:0000"),
                text: format!("Storm bulletin query log: {echo} The bulletin then asserted: {key}{wrong}."),
                hazard_type: DECOY_HAZARD,
                source: ChunkSource {
                    document_id: doc,
                    paragraphs: vec![0],
                    span: None,
                },
                summary: None,
                propositions: Vec::new(),
                strategy: ChunkStrategy::Paragraph,
            }
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum DeskError {
    #[error("desk dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Index(#[from] VecError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// The desk world, its generated dataset and a decoy-laden index.
pub struct DeskBenchmark {
    pub world: DeskWorld,
    pub dataset: QADataset,
    pub ledger: Vec<LedgerEntry>,
    pub chunks: Vec<Chunk>,
    pub decoys: Vec<Chunk>,
    pub index: Arc<CorpusIndex>,
    pub embedder: Arc<HashEmbeddingProvider>,
    pub agent: Arc<DeskAgent>,
}

impl DeskBenchmark {
    pub fn build(seed: u64, parallelism: usize) -> Result<DeskBenchmark, DeskError> {
        let world = DeskWorld::generate(seed);
        let agent = Arc::new(DeskAgent::new(seed));
        let build = build_dataset(&world.documents, agent.as_ref(), parallelism);
        if build.dataset.len() != world.facts.len() {
            return Err(DeskError::Dataset(format!(
                "{} items generated for {} planted facts",
                build.dataset.len(),
                world.facts.len()
            )));
        }
        let chunks = world.chunks();
        let decoys = decoy_chunks(&build.dataset);
        let embedder = Arc::new(HashEmbeddingProvider::new(DESK_EMBED_DIM, seed));
        let all: Vec<Chunk> = chunks.iter().chain(&decoys).cloned().collect();
        let index = Arc::new(build_index(&all, embedder.as_ref())?);
        Ok(DeskBenchmark {
            world,
            dataset: build.dataset,
            ledger: build.ledger,
            chunks,
            decoys,
            index,
            embedder,
            agent,
        })
    }

    pub fn engine(&self, variant: PipelineVariant) -> Engine {
        let agents = Agents::shared(self.agent.clone(), Arc::new(FixtureSearchBackend::new()));
        Engine::new(
            self.index.clone(),
            self.embedder.clone(),
            agents,
            Arc::new(LexicalScorer),
            PipelineConfig::for_variant(variant),
        )
    }

    /// Evaluates `variants` on the decoy-laden index; the first is the
    /// baseline of the returned deltas.
    pub fn ablate(&self, variants: &[PipelineVariant], parallelism: usize) -> Result<AblationReport, DeskError> {
        let engines: Vec<Engine> = variants.iter().map(|v| self.engine(*v)).collect();
        let runs: Vec<(EvalConfig, &Engine)> = variants
            .iter()
            .zip(&engines)
            .map(|(v, e)| (EvalConfig::new(v.label(), *v, ChunkStrategy::Paragraph), e))
            .collect();
        Ok(ablate(&self.dataset, &runs, parallelism)?)
    }

    /// Per-category item counts of the generated dataset.
    pub fn category_counts(&self) -> BTreeMap<QaCategory, usize> {
        let mut m = BTreeMap::new();
        for i in &self.dataset.items {
            *m.entry(i.category).or_insert(0) += 1;
        }
        m
    }
}
