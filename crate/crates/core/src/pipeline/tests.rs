use std::sync::Arc;

use super::*;
use crate::agents::mock::{CountingProvider, Script, ScriptedProvider};
use crate::agents::roles::routing_json;
use crate::agents::search::FixtureSearchBackend;
use crate::agents::AgentRole;
use crate::answer::AnswerValue;
use crate::corpus::{Chunk, ChunkSource, ChunkStrategy};
use crate::hazard::Hazard;
use crate::retrieval::{LexicalScorer, RoutingDistribution};
use crate::vecstore::{build_index, HashEmbeddingProvider};

const Q: &str = "The levee at the Lakeview pump station breached.";

fn chunk(id: &str, text: &str) -> Chunk {
    Chunk {
        id: id.into(),
        text: text.into(),
        hazard_type: Hazard::Flood,
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

fn engine(script: Script, search: FixtureSearchBackend, variant: PipelineVariant) -> (Engine, Arc<CountingProvider<ScriptedProvider>>) {
    let embedder = Arc::new(HashEmbeddingProvider::new(128, 0));
    let chunks = vec![
        chunk("d1:p:0000", "The levee at the Lakeview pump station breached during the flood."),
        chunk("d2:p:0000", "Water depths reached two meters in the lower ward."),
    ];
    let index = Arc::new(build_index(&chunks, embedder.as_ref()).unwrap());
    let provider = Arc::new(CountingProvider::new(ScriptedProvider::new(script)));
    let agents = Agents::shared(provider.clone(), Arc::new(search));
    let e = Engine::new(index, embedder, agents, Arc::new(LexicalScorer), PipelineConfig::for_variant(variant));
    (e, provider)
}

fn flood_router() -> String {
    routing_json(&RoutingDistribution::point(Hazard::Flood))
}

#[test]
fn corpus_sufficient_first_iteration() {
    let s = Script::new()
        .default_for(AgentRole::Router, flood_router())
        .then(AgentRole::Evaluator, ["1"])
        .then(AgentRole::AnswerWriter, ["true"]);
    let (e, counter) = engine(s, FixtureSearchBackend::new(), PipelineVariant::FullMora);
    let (a, t) = e.infer(&Question::true_false(Q));
    assert_eq!(a.value, Some(AnswerValue::Bool(true)));
    assert!(a.grounded);
    assert_eq!(t.iterations.len(), 1);
    assert_eq!(t.evidence_source, EvidenceSource::Corpus);
    assert_eq!(t.evidence_sources[0], "d1:p:0000");
    assert_eq!(t.calls.len(), counter.total());
    assert_eq!(counter.total(), 3);
}

#[test]
fn online_evidence_replaces_corpus() {
    let s = Script::new()
        .default_for(AgentRole::Router, flood_router())
        .then(AgentRole::Evaluator, ["0", "1"])
        .then(AgentRole::AnswerWriter, ["false"]);
    let search = FixtureSearchBackend::new().with(Q, vec![("News: the levee held.", "https://news.example/levee")]);
    let (e, _) = engine(s, search, PipelineVariant::FullMora);
    let (a, t) = e.infer(&Question::true_false(Q));
    assert!(a.grounded);
    assert_eq!(t.evidence_source, EvidenceSource::Online);
    assert_eq!(t.evidence_sources, vec!["https://news.example/levee"]);
    let answer_call = t.calls.iter().find(|c| c.agent == AgentRole::AnswerWriter).unwrap();
    assert_eq!(answer_call.raw.as_deref(), Some("false"));
    assert!(t.iterations[0].rewritten_to.is_none());
}

#[test]
fn rewrite_feeds_next_iteration_and_answer() {
    let s = Script::new()
        .default_for(AgentRole::Router, flood_router())
        .then(AgentRole::Evaluator, ["0", "0", "1"])
        .then(AgentRole::Rewriter, ["Did the Lakeview levee breach?"])
        .then(AgentRole::AnswerWriter, ["true"]);
    let (e, _) = engine(s, FixtureSearchBackend::new(), PipelineVariant::FullMora);
    let (_, t) = e.infer(&Question::true_false(Q));
    assert_eq!(t.iterations.len(), 2);
    assert_eq!(t.iterations[1].query_used, t.iterations[0].rewritten_to.clone().unwrap());
    assert_eq!(t.final_query, "Did the Lakeview levee breach?");
    assert_eq!(t.question.text, Q);
}

#[test]
fn full_exhaustion() {
    let s = Script::new()
        .default_for(AgentRole::Router, flood_router())
        .default_for(AgentRole::Evaluator, "0")
        .then(AgentRole::Rewriter, ["r1", "r2", "r3", "r4", "r5"])
        .then(AgentRole::AnswerWriter, ["false"]);
    let (e, counter) = engine(s, FixtureSearchBackend::new(), PipelineVariant::FullMora);
    let (a, t) = e.infer(&Question::true_false(Q));
    assert_eq!(t.iterations.len(), 5);
    assert_eq!(t.rewrite_count(), 4);
    assert!(t.iterations[4].rewritten_to.is_none());
    assert_eq!(t.evidence_source, EvidenceSource::None);
    assert!(!a.grounded);
    assert_eq!(a.value, Some(AnswerValue::Bool(false)));
    assert_eq!(counter.count(AgentRole::Router), 5);
    assert_eq!(counter.count(AgentRole::Evaluator), 10);
    assert_eq!(counter.count(AgentRole::Rewriter), 4);
    assert_eq!(t.calls.len(), counter.total() + 5);
}

#[test]
fn zero_shot_and_vanilla_skip_agents() {
    for variant in [PipelineVariant::ZeroShot, PipelineVariant::VanillaRag] {
        let s = Script::new().default_for(AgentRole::AnswerWriter, "true");
        let (e, counter) = engine(s, FixtureSearchBackend::new(), variant);
        let (a, t) = e.infer(&Question::true_false(Q));
        assert_eq!(counter.total(), 1, "{variant}");
        assert_eq!(counter.count(AgentRole::AnswerWriter), 1);
        assert_eq!(a.grounded, variant == PipelineVariant::VanillaRag);
        let expected = if variant == PipelineVariant::ZeroShot { EvidenceSource::None } else { EvidenceSource::Corpus };
        assert_eq!(t.evidence_source, expected);
    }
}

#[test]
fn batch_preserves_order_and_isolates_failures() {
    let mut s = Script::new()
        .default_for(AgentRole::Router, flood_router())
        .default_for(AgentRole::Evaluator, "1");
    let qs: Vec<Question> = (0..10).map(|i| Question::true_false(format!("Statement number {i} about the levee."))).collect();
    for (i, q) in qs.iter().enumerate() {
        if i == 3 {
            s = s.keyed(AgentRole::AnswerWriter, q.text.clone(), vec![crate::agents::ScriptStep::Fail { fail: "dead".into() }; 3]);
        } else {
            let tok = if i % 2 == 0 { "true" } else { "false" };
            s = s.keyed(AgentRole::AnswerWriter, q.text.clone(), [tok]);
        }
    }
    let (e1, _) = engine(s.clone(), FixtureSearchBackend::new(), PipelineVariant::FullMora);
    let (e4, _) = engine(s, FixtureSearchBackend::new(), PipelineVariant::FullMora);
    let serial = e1.infer_batch(&qs, 1);
    let parallel = e4.infer_batch(&qs, 4);
    assert_eq!(parallel.len(), 10);
    for (i, (a, t)) in parallel.iter().enumerate() {
        assert_eq!(t.question, qs[i]);
        if i == 3 {
            assert!(a.is_abstention());
        } else {
            assert_eq!(a.value, Some(AnswerValue::Bool(i % 2 == 0)));
        }
    }
    let strip = |v: &[(FinalAnswer, InferenceTrace)]| v.iter().map(|(_, t)| t.without_timings()).collect::<Vec<_>>();
    assert_eq!(strip(&serial), strip(&parallel));
}

#[test]
fn panicking_provider_is_isolated() {
    let p = Arc::new(crate::agents::mock::FnProvider::new("boom", |r| {
        if r.system.contains("explode") {
            panic!("provider crashed");
        }
        Ok("true".into())
    }));
    let embedder = Arc::new(HashEmbeddingProvider::new(16, 0));
    let index = Arc::new(build_index(&[chunk("d:p:0000", "text")], embedder.as_ref()).unwrap());
    let e = Engine::new(index, embedder, Agents::without_search(p), Arc::new(LexicalScorer), PipelineConfig::for_variant(PipelineVariant::ZeroShot));
    let out = e.infer_batch(&[Question::true_false("fine"), Question::true_false("explode")], 2);
    assert_eq!(out[0].0.value, Some(AnswerValue::Bool(true)));
    assert!(out[1].0.is_abstention());
    assert!(out[1].1.error.as_deref().unwrap().contains("crashed"));
}

#[test]
fn trace_jsonl_round_trip_and_version_check() {
    let s = Script::new()
        .default_for(AgentRole::Router, flood_router())
        .then(AgentRole::Evaluator, ["0", "0", "1"])
        .then(AgentRole::Rewriter, ["Did it breach?"])
        .then(AgentRole::AnswerWriter, ["true"]);
    let (e, _) = engine(s, FixtureSearchBackend::new(), PipelineVariant::FullMora);
    let (_, t) = e.infer(&Question::true_false(Q));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    write_traces_jsonl(&path, &[t.clone(), t.clone()]).unwrap();
    assert_eq!(read_traces_jsonl(&path).unwrap(), vec![t.clone(), t]);
    let tampered = std::fs::read_to_string(&path).unwrap().replace("\"trace_version\":1", "\"trace_version\":9");
    std::fs::write(&path, tampered).unwrap();
    assert!(read_traces_jsonl(&path).is_err());
}

#[test]
fn variant_names_parse() {
    for v in PipelineVariant::ALL {
        assert_eq!(v.name().parse::<PipelineVariant>().unwrap(), v);
    }
    assert!("mora".parse::<PipelineVariant>().is_err());
    assert_eq!("Full-MoRA".parse::<PipelineVariant>().unwrap(), PipelineVariant::FullMora);
}
