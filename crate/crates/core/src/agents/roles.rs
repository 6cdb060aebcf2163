//! Router, evaluator, rewriter and answer-writer agents.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::prompts::{bindings, PromptTemplate, TemplateName};
use super::provider::{complete_structured, AgentProvider, AgentRole, CallLog, CompletionRequest};
use crate::answer::{AnswerValue, FinalAnswer, Question};
use crate::hazard::Hazard;
use crate::jsonutil::parse_model_json;
use crate::retrieval::{EvidenceContext, QueryRouter, RoutingDistribution};

/// Router sums inside this window are renormalized; outside it the output
/// is treated as unreliable and regenerated.
pub const ROUTER_SUM_WINDOW: (f64, f64) = (0.8, 1.2);

fn request(role: AgentRole, template: TemplateName, binds: std::collections::BTreeMap<String, String>) -> CompletionRequest {
    let system = PromptTemplate::get(template)
        .render(&binds)
        .expect("role templates are fully bound by construction");
    CompletionRequest {
        role,
        system,
        user: String::new(),
        bindings: binds,
        temperature: 0.0,
    }
}

/// Parses a router reply: a JSON object with exactly the seven hazard keys
/// and numeric values. Values are clamped to [0, 1], then renormalized when
/// the sum falls inside [`ROUTER_SUM_WINDOW`].
pub fn parse_routing(raw: &str) -> Result<RoutingDistribution, String> {
    let v = parse_model_json(raw)?;
    let obj = v.as_object().ok_or("router output is not a JSON object")?;
    let mut probs = [0.0f64; Hazard::COUNT];
    let mut seen = [false; Hazard::COUNT];
    for (k, val) in obj {
        let h = Hazard::ALL
            .iter()
            .find(|h| h.name() == k)
            .ok_or_else(|| format!("unexpected key {k:?}"))?;
        let x = val.as_f64().ok_or_else(|| format!("{k}: not a number"))?;
        if !x.is_finite() {
            return Err(format!("{k}: not finite"));
        }
        probs[h.index()] = x.clamp(0.0, 1.0);
        seen[h.index()] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(format!("missing key {:?}", Hazard::ALL[i].name()));
    }
    let sum: f64 = probs.iter().sum();
    if !(ROUTER_SUM_WINDOW.0..=ROUTER_SUM_WINDOW.1).contains(&sum) {
        return Err(format!("probabilities sum to {sum:.4}, outside [0.8, 1.2]"));
    }
    if (sum - 1.0).abs() > 1e-9 {
        for p in &mut probs {
            *p /= sum;
        }
    }
    RoutingDistribution::from_array(probs).map_err(|e| e.to_string())
}

/// Total: falls back to the uniform distribution once retries are spent.
pub fn route(provider: &dyn AgentProvider, question: &str, log: &mut CallLog) -> RoutingDistribution {
    let req = request(AgentRole::Router, TemplateName::Router, bindings([("Question", question)]));
    complete_structured(provider, &req, log, parse_routing).unwrap_or_else(|_| RoutingDistribution::uniform())
}

/// [`QueryRouter`] backed by the router agent.
pub struct RouterAgent<'a> {
    pub provider: &'a dyn AgentProvider,
}

impl QueryRouter for RouterAgent<'_> {
    fn route(&self, question: &str, log: &mut CallLog) -> RoutingDistribution {
        route(self.provider, question, log)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficiencyVerdict {
    pub sufficient: bool,
    /// Last raw provider output; empty when no output arrived.
    pub raw: String,
}

/// Conservative: anything other than a bare `1` or `0` is regenerated, and
/// exhaustion yields an insufficient verdict.
pub fn evaluate_sufficiency(
    provider: &dyn AgentProvider,
    question: &str,
    evidence: &EvidenceContext,
    log: &mut CallLog,
) -> SufficiencyVerdict {
    let req = request(
        AgentRole::Evaluator,
        TemplateName::Evaluator,
        bindings([("question", question), ("evidence", &evidence.text)]),
    );
    let parsed = complete_structured(provider, &req, log, |raw| match raw.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(format!("expected '1' or '0', got {other:?}")),
    });
    match parsed {
        Ok(sufficient) => SufficiencyVerdict {
            sufficient,
            raw: log.calls.last().and_then(|c| c.raw.clone()).unwrap_or_default(),
        },
        Err(e) => SufficiencyVerdict {
            sufficient: false,
            raw: e.last_raw.unwrap_or_default(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rewrite {
    pub question: String,
    /// Set when the rewriter produced nothing usable and the input was kept.
    pub no_progress: bool,
}

/// Produces a single-line rewrite. Empty output, or output identical to the
/// input, is regenerated; after the budget the input is returned unchanged.
pub fn rewrite_question(
    provider: &dyn AgentProvider,
    question: &str,
    evidence: &EvidenceContext,
    log: &mut CallLog,
) -> Rewrite {
    let req = request(
        AgentRole::Rewriter,
        TemplateName::Rewriter,
        bindings([("question", question), ("evidence", &evidence.text)]),
    );
    let original = question.trim();
    let parsed = complete_structured(provider, &req, log, |raw| {
        let line = raw
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .ok_or("empty rewrite")?;
        if line == original {
            return Err("rewrite identical to input".into());
        }
        Ok(line.to_string())
    });
    match parsed {
        Ok(q) => Rewrite {
            question: q,
            no_progress: false,
        },
        Err(_) => Rewrite {
            question: question.to_string(),
            no_progress: true,
        },
    }
}

/// Answers `question`, grounded on `evidence` when given. Out-of-domain
/// tokens are regenerated; exhaustion yields an abstention.
pub fn write_answer(
    provider: &dyn AgentProvider,
    question: &Question,
    evidence: Option<&EvidenceContext>,
    log: &mut CallLog,
) -> FinalAnswer {
    let grounded = evidence.is_some();
    let rendered = question.render();
    let req = request(
        AgentRole::AnswerWriter,
        TemplateName::AnswerWriter,
        bindings([
            ("question", &rendered),
            ("evidence", evidence.map(|e| e.text.as_str()).unwrap_or("")),
        ]),
    );
    let kind = question.kind;
    let parsed = complete_structured(provider, &req, log, |raw| {
        AnswerValue::parse_token(kind, raw).ok_or_else(|| format!("not a {} answer: {:?}", kind.name(), raw.trim()))
    });
    match parsed {
        Ok(value) => FinalAnswer {
            kind,
            value: Some(value),
            grounded,
        },
        Err(_) => FinalAnswer::abstention(kind, grounded),
    }
}

/// Router mock helper: the JSON object form of a distribution.
pub fn routing_json(dist: &RoutingDistribution) -> String {
    let map: serde_json::Map<String, Value> = Hazard::ALL
        .iter()
        .map(|h| (h.name().to_string(), Value::from(dist.prob(*h))))
        .collect();
    Value::Object(map).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::mock::ScriptedProvider;
    use crate::answer::{Choice, QuestionKind};

    const APPENDIX: &str = r#"{
  "Wildfire": 0.01,
  "Storm": 0.10,
  "Landslide": 0.05,
  "Hurricane": 0.61,
  "Flood": 0.21,
  "Earthquake": 0.01,
  "Tsunami": 0.01
}"#;

    fn ev(text: &str) -> EvidenceContext {
        EvidenceContext {
            text: text.into(),
            sources: vec!["x".into()],
        }
    }

    #[test]
    fn appendix_routing_sums_to_one() {
        let p = ScriptedProvider::from_outputs(AgentRole::Router, [APPENDIX]);
        let d = route(&p, "q", &mut CallLog::new());
        let sum: f64 = Hazard::ALL.iter().map(|h| d.prob(*h)).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!((d.prob(Hazard::Hurricane) - 0.61).abs() < 1e-12);
    }

    #[test]
    fn sum_point_nine_is_renormalized() {
        let raw = r#"{"Wildfire":0.0,"Storm":0.0,"Landslide":0.0,"Hurricane":0.6,"Flood":0.3,"Earthquake":0.0,"Tsunami":0.0}"#;
        let d = parse_routing(raw).unwrap();
        assert!((d.prob(Hazard::Hurricane) - 0.6 / 0.9).abs() < 1e-12);
        assert!((d.prob(Hazard::Flood) - 0.3 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn malformed_router_falls_back_to_uniform() {
        let p = ScriptedProvider::from_outputs(AgentRole::Router, ["I think hurricane.", "Hurricane: 0.9", "{{"]);
        let mut log = CallLog::new();
        let d = route(&p, "q", &mut log);
        assert_eq!(d, RoutingDistribution::uniform());
        assert_eq!(log.count(AgentRole::Router), 3);
    }

    #[test]
    fn router_rejects_wrong_keys_and_bad_sums() {
        assert!(parse_routing(r#"{"Hurricane": 1.0}"#).is_err());
        let extra = r#"{"Wildfire":0,"Storm":0,"Landslide":0,"Hurricane":1,"Flood":0,"Earthquake":0,"Tsunami":0,"Drought":0}"#;
        assert!(parse_routing(extra).is_err());
        let low = r#"{"Wildfire":0,"Storm":0,"Landslide":0,"Hurricane":0.3,"Flood":0,"Earthquake":0,"Tsunami":0}"#;
        assert!(parse_routing(low).is_err());
        let high = r#"{"Wildfire":0.5,"Storm":0.5,"Landslide":0.5,"Hurricane":0.5,"Flood":0.5,"Earthquake":0,"Tsunami":0}"#;
        assert!(parse_routing(high).is_err());
        // clamping: -0.1 → 0, then sum 1.0
        let neg = r#"{"Wildfire":-0.1,"Storm":0,"Landslide":0,"Hurricane":1.0,"Flood":0,"Earthquake":0,"Tsunami":0}"#;
        assert_eq!(parse_routing(neg).unwrap().prob(Hazard::Wildfire), 0.0);
    }

    #[test]
    fn routing_json_round_trips() {
        let d = parse_routing(APPENDIX).unwrap();
        assert_eq!(parse_routing(&routing_json(&d)).unwrap(), d);
    }

    #[test]
    fn evaluator_verdicts() {
        let p = ScriptedProvider::from_outputs(AgentRole::Evaluator, ["1"]);
        assert!(evaluate_sufficiency(&p, "q", &ev("e"), &mut CallLog::new()).sufficient);
        let p = ScriptedProvider::from_outputs(AgentRole::Evaluator, [" 0\n"]);
        let v = evaluate_sufficiency(&p, "q", &ev("e"), &mut CallLog::new());
        assert!(!v.sufficient);
        assert_eq!(v.raw, " 0\n");
        let p = ScriptedProvider::from_outputs(AgentRole::Evaluator, ["yes", "yes", "yes"]);
        let mut log = CallLog::new();
        assert!(!evaluate_sufficiency(&p, "q", &ev("e"), &mut log).sufficient);
        assert_eq!(log.len(), 3);
    }

    #[test]
    fn evaluator_prompt_binds_evidence() {
        let p = crate::agents::mock::FnProvider::new("f", |r| {
            assert!(r.system.contains("Related Evidence: [1] (d, Flood) water"));
            Ok("1".into())
        });
        evaluate_sufficiency(&p, "q", &ev("[1] (d, Flood) water"), &mut CallLog::new());
    }

    #[test]
    fn rewriter_contract() {
        let p = ScriptedProvider::from_outputs(
            AgentRole::Rewriter,
            ["Which bridge abutment settled during Hurricane Sandy?"],
        );
        let r = rewrite_question(&p, "What settled?", &ev(""), &mut CallLog::new());
        assert_eq!(r.question, "Which bridge abutment settled during Hurricane Sandy?");
        assert!(!r.no_progress);

        let p = ScriptedProvider::from_outputs(AgentRole::Rewriter, ["", "  \n", ""]);
        let r = rewrite_question(&p, "What settled?", &ev(""), &mut CallLog::new());
        assert_eq!(r.question, "What settled?");
        assert!(r.no_progress);

        let p = ScriptedProvider::from_outputs(AgentRole::Rewriter, ["\n  First line?  \nSecond line"]);
        assert_eq!(rewrite_question(&p, "q", &ev(""), &mut CallLog::new()).question, "First line?");

        let p = ScriptedProvider::from_outputs(AgentRole::Rewriter, ["q", "q", "q"]);
        assert!(rewrite_question(&p, "q", &ev(""), &mut CallLog::new()).no_progress);
    }

    #[test]
    fn answer_writer_contract() {
        let tf = Question::true_false("Levees failed.");
        let p = ScriptedProvider::from_outputs(AgentRole::AnswerWriter, ["true"]);
        let a = write_answer(&p, &tf, Some(&ev("e")), &mut CallLog::new());
        assert_eq!(a.kind, QuestionKind::TrueFalse);
        assert_eq!(a.value, Some(AnswerValue::Bool(true)));
        assert!(a.grounded);

        let mc = Question::multiple_choice("Which?", vec!["A. w".into(), "B. x".into(), "C. y".into(), "D. z".into()]);
        let p = ScriptedProvider::from_outputs(AgentRole::AnswerWriter, ["b."]);
        assert_eq!(write_answer(&p, &mc, None, &mut CallLog::new()).value, Some(AnswerValue::Choice(Choice::B)));

        let p = ScriptedProvider::from_outputs(AgentRole::AnswerWriter, ["the answer is A"; 3]);
        let a = write_answer(&p, &mc, None, &mut CallLog::new());
        assert!(a.is_abstention());
        assert!(!a.grounded);
    }

    #[test]
    fn transport_failures_use_fallbacks() {
        let p = ScriptedProvider::new(Default::default());
        let mut log = CallLog::new();
        assert_eq!(route(&p, "q", &mut log), RoutingDistribution::uniform());
        assert!(!evaluate_sufficiency(&p, "q", &ev(""), &mut log).sufficient);
        assert!(rewrite_question(&p, "q", &ev(""), &mut log).no_progress);
        assert!(write_answer(&p, &Question::true_false("s"), None, &mut log).is_abstention());
        assert_eq!(log.len(), 12);
        assert!(log.calls.iter().all(|c| c.error.is_some()));
    }
}
