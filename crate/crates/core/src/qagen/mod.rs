//! Evaluation-set construction: cleanse, generate, validate, categorize.

mod io;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::agents::prompts::{bindings, PromptTemplate, TemplateName};
use crate::agents::provider::{complete_structured, AgentProvider, AgentRole, CallLog, CompletionRequest, RetriesExhausted};
use crate::answer::{AnswerValue, Choice, Question, QuestionKind};
use crate::corpus::{cleanse, Document, Paragraph, ParagraphRole};
use crate::hashing::short_hash;
use crate::hazard::Hazard;
use crate::jsonutil::parse_model_json;

pub use io::{ledger_path, read_dataset_jsonl, summary_path, write_dataset, write_dataset_jsonl, write_ledger_jsonl};

/// Task category of a QA item. `Invalid` exists only as a generator
/// output and is never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QaCategory {
    #[serde(rename = "Analysis Approach")]
    AnalysisApproach,
    #[serde(rename = "Hazard Characteristics")]
    HazardCharacteristics,
    #[serde(rename = "Impacts and Damage")]
    ImpactsAndDamage,
    #[serde(rename = "Response and Recovery")]
    ResponseAndRecovery,
}

impl QaCategory {
    pub const ALL: [QaCategory; 4] = [
        QaCategory::AnalysisApproach,
        QaCategory::HazardCharacteristics,
        QaCategory::ImpactsAndDamage,
        QaCategory::ResponseAndRecovery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QaCategory::AnalysisApproach => "Analysis Approach",
            QaCategory::HazardCharacteristics => "Hazard Characteristics",
            QaCategory::ImpactsAndDamage => "Impacts and Damage",
            QaCategory::ResponseAndRecovery => "Response and Recovery",
        }
    }
}

impl fmt::Display for QaCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QaCategory {
    type Err = String;

    /// Case-insensitive; `&` and `and` are interchangeable.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace('&', "and").split_whitespace().collect::<Vec<_>>().join(" ");
        QaCategory::ALL
            .into_iter()
            .find(|c| c.name().to_lowercase() == norm)
            .ok_or_else(|| s.to_string())
    }
}

/// Where an item came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub document_id: String,
    pub paragraph_index: usize,
    pub hazard_type: Hazard,
    pub event_year: i32,
    pub event_location: String,
}

impl Provenance {
    pub fn of(document: &Document, paragraph: &Paragraph) -> Self {
        Provenance {
            document_id: document.id.clone(),
            paragraph_index: paragraph.index,
            hazard_type: document.hazard_type,
            event_year: document.event_year,
            event_location: document.event_location.clone(),
        }
    }
}

/// A validated QA item. Multiple-choice items carry exactly four options
/// prefixed `A.`..`D.` in order; True/False items carry none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub kind: QuestionKind,
    pub statement_or_question: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    pub gold: AnswerValue,
    pub category: QaCategory,
    pub provenance: Provenance,
}

impl QAItem {
    pub fn question(&self) -> Question {
        Question {
            kind: self.kind,
            text: self.statement_or_question.clone(),
            options: self.options.clone(),
        }
    }

    /// The generator-format object this item validates from.
    pub fn to_raw(&self) -> Value {
        match self.kind {
            QuestionKind::TrueFalse => json!({
                "statement": self.statement_or_question,
                "answer": self.gold.to_string(),
                "category": self.category.name(),
            }),
            QuestionKind::MultipleChoice => json!({
                "question": self.statement_or_question,
                "options": self.options,
                "correct": self.gold.to_string(),
                "category": self.category.name(),
            }),
        }
    }
}

/// Why a generated object was not accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum Rejection {
    #[error("bad kind: {0}")]
    BadKind(String),
    #[error("bad options: {0}")]
    BadOptions(String),
    #[error("bad gold: {0}")]
    BadGold(String),
    #[error("bad category: {0}")]
    BadCategory(String),
    #[error("empty text")]
    EmptyText,
}

/// Stable id from provenance and kind.
pub fn item_id(provenance: &Provenance, kind: QuestionKind) -> String {
    let key = format!("{}\u{0}{}\u{0}{}", provenance.document_id, provenance.paragraph_index, kind.name());
    format!("qa-{}", short_hash(key.as_bytes()))
}

fn text_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.get(key).or_else(|| {
        let mut cap = key.to_string();
        cap[..1].make_ascii_uppercase();
        obj.get(&cap)
    })
}

fn parse_options(v: Option<&Value>) -> Result<Vec<String>, Rejection> {
    let arr = v
        .and_then(Value::as_array)
        .ok_or_else(|| Rejection::BadOptions("missing options list".into()))?;
    if arr.len() != 4 {
        return Err(Rejection::BadOptions(format!("{} options, expected 4", arr.len())));
    }
    let mut out = Vec::with_capacity(4);
    for (o, want) in arr.iter().zip(Choice::ALL) {
        let s = o
            .as_str()
            .ok_or_else(|| Rejection::BadOptions("non-string option".into()))?
            .trim();
        let rest = s
            .strip_prefix(want.letter())
            .and_then(|r| r.strip_prefix('.'))
            .ok_or_else(|| Rejection::BadOptions(format!("option {s:?} lacks prefix '{}.'", want.letter())))?;
        if rest.trim().is_empty() {
            return Err(Rejection::BadOptions(format!("option {} is empty", want.letter())));
        }
        out.push(format!("{}. {}", want.letter(), rest.trim()));
    }
    Ok(out)
}

fn parse_gold(kind: QuestionKind, v: Option<&Value>) -> Result<AnswerValue, Rejection> {
    let raw = match v {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Bool(b)) if kind == QuestionKind::TrueFalse => b.to_string(),
        Some(other) => return Err(Rejection::BadGold(other.to_string())),
        None => return Err(Rejection::BadGold("missing".into())),
    };
    let ok = match kind {
        QuestionKind::TrueFalse => matches!(raw.to_lowercase().as_str(), "true" | "false"),
        QuestionKind::MultipleChoice => raw.len() == 1,
    };
    ok.then(|| AnswerValue::parse_token(kind, &raw))
        .flatten()
        .ok_or(Rejection::BadGold(raw))
}

/// Checks every item invariant. Accepts `category` or `Category`; the item
/// id derives from `provenance` and the detected kind.
pub fn validate_qa(raw: &Value, provenance: &Provenance) -> Result<QAItem, Rejection> {
    let obj = raw
        .as_object()
        .ok_or_else(|| Rejection::BadKind("not a JSON object".into()))?;
    let statement = text_field(obj, "statement");
    let question = text_field(obj, "question");
    let (kind, text) = match (statement, question) {
        (Some(s), None) => (QuestionKind::TrueFalse, s),
        (None, Some(q)) => (QuestionKind::MultipleChoice, q),
        (Some(_), Some(_)) => return Err(Rejection::BadKind("both statement and question present".into())),
        (None, None) => return Err(Rejection::BadKind("neither statement nor question present".into())),
    };
    let text = text
        .as_str()
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .ok_or(Rejection::EmptyText)?;
    let (options, gold) = match kind {
        QuestionKind::TrueFalse => {
            if text_field(obj, "options").is_some() {
                return Err(Rejection::BadOptions("true/false item has options".into()));
            }
            (Vec::new(), parse_gold(kind, text_field(obj, "answer"))?)
        }
        QuestionKind::MultipleChoice => (
            parse_options(text_field(obj, "options"))?,
            parse_gold(kind, text_field(obj, "correct"))?,
        ),
    };
    let cat = text_field(obj, "category")
        .ok_or_else(|| Rejection::BadCategory("missing".into()))?
        .as_str()
        .ok_or_else(|| Rejection::BadCategory("not a string".into()))?;
    if cat.trim().eq_ignore_ascii_case("invalid") {
        return Err(Rejection::BadCategory("Invalid".into()));
    }
    let category: QaCategory = cat.parse().map_err(Rejection::BadCategory)?;
    Ok(QAItem {
        id: item_id(provenance, kind),
        kind,
        statement_or_question: text.to_string(),
        options,
        gold,
        category,
        provenance: provenance.clone(),
    })
}

/// Asks the generator for one item. `Ok(None)` means the paragraph was
/// judged unsuitable (the generator returned an empty object).
pub fn generate_qa(
    provider: &dyn AgentProvider,
    document: &Document,
    paragraph: &Paragraph,
    log: &mut CallLog,
) -> Result<Option<Value>, RetriesExhausted> {
    let year = document.event_year.to_string();
    let binds = bindings([
        ("disaster_type", &document.hazard_type.name().to_lowercase()),
        ("year", &year),
        ("location", &document.event_location),
        ("paragraph", &paragraph.text),
    ]);
    let request = CompletionRequest {
        role: AgentRole::QaGenerator,
        system: PromptTemplate::get(TemplateName::QaGenerator)
            .render(&binds)
            .expect("generator bindings complete"),
        user: String::new(),
        bindings: binds,
        temperature: 0.0,
    };
    complete_structured(provider, &request, log, |raw| {
        let v = parse_model_json(raw)?;
        match v.as_object() {
            Some(o) if o.is_empty() => Ok(None),
            Some(_) => Ok(Some(v)),
            None => Err("generator output is not a JSON object".into()),
        }
    })
}

/// Counts in the shape of the kind × category table and the hazard breakdown.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub total: usize,
    pub by_kind: BTreeMap<QuestionKind, usize>,
    pub by_category: BTreeMap<QaCategory, usize>,
    pub by_category_kind: BTreeMap<QaCategory, BTreeMap<QuestionKind, usize>>,
    pub by_hazard: BTreeMap<Hazard, usize>,
}

impl DatasetSummary {
    pub fn of(items: &[QAItem]) -> Self {
        let mut s = DatasetSummary {
            total: items.len(),
            ..Default::default()
        };
        for k in [QuestionKind::TrueFalse, QuestionKind::MultipleChoice] {
            s.by_kind.insert(k, 0);
        }
        for c in QaCategory::ALL {
            s.by_category.insert(c, 0);
            s.by_category_kind
                .insert(c, [(QuestionKind::TrueFalse, 0), (QuestionKind::MultipleChoice, 0)].into());
        }
        for h in Hazard::ALL {
            s.by_hazard.insert(h, 0);
        }
        for it in items {
            *s.by_kind.entry(it.kind).or_default() += 1;
            *s.by_category.entry(it.category).or_default() += 1;
            *s.by_category_kind.entry(it.category).or_default().entry(it.kind).or_default() += 1;
            *s.by_hazard.entry(it.provenance.hazard_type).or_default() += 1;
        }
        s
    }

    /// Plain-text `Task Category | TF | MC | ALL` table with a total row.
    pub fn render(&self) -> String {
        let mut out = format!("{:<24}{:>6}{:>6}{:>6}\n", "Task Category", "TF", "MC", "ALL");
        for c in [
            QaCategory::HazardCharacteristics,
            QaCategory::ResponseAndRecovery,
            QaCategory::AnalysisApproach,
            QaCategory::ImpactsAndDamage,
        ] {
            let row = &self.by_category_kind[&c];
            let tf = row[&QuestionKind::TrueFalse];
            let mc = row[&QuestionKind::MultipleChoice];
            out.push_str(&format!("{:<24}{:>6}{:>6}{:>6}\n", c.name(), tf, mc, tf + mc));
        }
        out.push_str(&format!(
            "{:<24}{:>6}{:>6}{:>6}\n",
            "Total", self.by_kind[&QuestionKind::TrueFalse], self.by_kind[&QuestionKind::MultipleChoice], self.total
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QADataset {
    pub items: Vec<QAItem>,
    pub summary: DatasetSummary,
}

impl QADataset {
    /// Fails if ids repeat.
    pub fn new(items: Vec<QAItem>) -> Result<Self, String> {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = items.iter().find(|i| !seen.insert(i.id.as_str())) {
            return Err(format!("duplicate item id {}", dup.id));
        }
        Ok(QADataset {
            summary: DatasetSummary::of(&items),
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// A paragraph that produced no item, for the audit ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub provenance: Provenance,
    pub outcome: SkipReason,
    /// Generator output, when one was obtained.
    pub raw: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SkipReason {
    /// Generator returned an empty object.
    Unsuitable,
    GenerationFailed { error: String },
    Rejected { rejection: Rejection },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBuild {
    pub dataset: QADataset,
    pub ledger: Vec<LedgerEntry>,
    pub log: CallLog,
}

/// Cleanses each document, generates one item per content paragraph and
/// validates it. Failures land in the ledger. Items keep document and
/// paragraph order; an id seen before gets `-1`, `-2`, ... appended.
pub fn build_dataset(documents: &[Document], provider: &dyn AgentProvider, parallelism: usize) -> DatasetBuild {
    use rayon::prelude::*;

    let work: Vec<(&Document, Paragraph)> = documents
        .iter()
        .flat_map(|d| cleanse(d).into_iter().map(move |p| (d, p)))
        .collect();
    let run = |(d, p): &(&Document, Paragraph)| {
        debug_assert_eq!(p.role, ParagraphRole::Content);
        let mut log = CallLog::new();
        let prov = Provenance::of(d, p);
        let outcome = match generate_qa(provider, d, p, &mut log) {
            Err(e) => Err(LedgerEntry {
                provenance: prov,
                outcome: SkipReason::GenerationFailed { error: e.to_string() },
                raw: None,
            }),
            Ok(None) => Err(LedgerEntry {
                provenance: prov,
                outcome: SkipReason::Unsuitable,
                raw: Some(json!({})),
            }),
            Ok(Some(raw)) => validate_qa(&raw, &prov).map_err(|rejection| LedgerEntry {
                provenance: prov,
                outcome: SkipReason::Rejected { rejection },
                raw: Some(raw),
            }),
        };
        (outcome, log)
    };
    let results: Vec<_> = if parallelism <= 1 {
        work.iter().map(run).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .expect("thread pool")
            .install(|| work.par_iter().map(run).collect())
    };

    let mut items = Vec::new();
    let mut ledger = Vec::new();
    let mut log = CallLog::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (outcome, l) in results {
        log.append(l);
        match outcome {
            Ok(mut item) => {
                let n = seen.entry(item.id.clone()).or_insert(0);
                if *n > 0 {
                    item.id = format!("{}-{}", item.id, n);
                }
                *n += 1;
                items.push(item);
            }
            Err(entry) => {
                log::info!(
                    "{} paragraph {}: no item ({:?})",
                    entry.provenance.document_id,
                    entry.provenance.paragraph_index,
                    entry.outcome
                );
                ledger.push(entry);
            }
        }
    }
    DatasetBuild {
        dataset: QADataset::new(items).expect("ids deduplicated above"),
        ledger,
        log,
    }
}

#[cfg(test)]
mod tests;
