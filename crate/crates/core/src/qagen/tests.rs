use proptest::prelude::*;
use serde_json::json;

use super::*;
use crate::agents::mock::{FnProvider, ScriptedProvider};

fn prov() -> Provenance {
    Provenance {
        document_id: "harvey".into(),
        paragraph_index: 3,
        hazard_type: Hazard::Hurricane,
        event_year: 2017,
        event_location: "Houston".into(),
    }
}

fn mc(options: Value, correct: &str) -> Value {
    json!({"question": "Which river crested first?", "options": options, "correct": correct, "category": "Hazard Characteristics"})
}

fn four() -> Value {
    json!(["A. Brazos", "B. San Jacinto", "C. Trinity", "D. Colorado"])
}

#[test]
fn true_false_accepted() {
    let raw = json!({"statement": "Harvey stalled over Houston.", "answer": "true", "category": "Hazard Characteristics"});
    let it = validate_qa(&raw, &prov()).unwrap();
    assert_eq!(it.kind, QuestionKind::TrueFalse);
    assert_eq!(it.gold, AnswerValue::Bool(true));
    assert_eq!(it.category, QaCategory::HazardCharacteristics);
    assert!(it.options.is_empty());
    assert!(it.id.starts_with("qa-"));
}

#[test]
fn gold_is_normalized() {
    let raw = json!({"statement": "s", "answer": " FALSE ", "Category": "impacts & damage"});
    let it = validate_qa(&raw, &prov()).unwrap();
    assert_eq!(it.gold, AnswerValue::Bool(false));
    assert_eq!(it.category, QaCategory::ImpactsAndDamage);
    assert_eq!(validate_qa(&mc(four(), "b"), &prov()).unwrap().gold, AnswerValue::Choice(Choice::B));
}

#[test]
fn rejections() {
    assert!(matches!(validate_qa(&mc(four(), "E"), &prov()), Err(Rejection::BadGold(_))));
    assert!(matches!(
        validate_qa(&mc(json!(["A. x", "B. y", "C. z"]), "A"), &prov()),
        Err(Rejection::BadOptions(_))
    ));
    assert!(matches!(
        validate_qa(&mc(json!(["A. x", "B. y", "B. z", "D. w"]), "A"), &prov()),
        Err(Rejection::BadOptions(_))
    ));
    let invalid = json!({"statement": "See Figure 3.", "answer": "true", "category": "Invalid"});
    assert!(matches!(validate_qa(&invalid, &prov()), Err(Rejection::BadCategory(_))));
    let uncategorized = json!({"statement": "s", "answer": "true"});
    assert!(matches!(validate_qa(&uncategorized, &prov()), Err(Rejection::BadCategory(_))));
    let empty = json!({"statement": "  ", "answer": "true", "category": "Analysis Approach"});
    assert_eq!(validate_qa(&empty, &prov()), Err(Rejection::EmptyText));
    assert!(matches!(validate_qa(&json!({"foo": 1}), &prov()), Err(Rejection::BadKind(_))));
    assert!(matches!(validate_qa(&json!([1]), &prov()), Err(Rejection::BadKind(_))));
    let tf_yes = json!({"statement": "s", "answer": "yes", "category": "Analysis Approach"});
    assert!(matches!(validate_qa(&tf_yes, &prov()), Err(Rejection::BadGold(_))));
}

#[test]
fn generator_empty_object_means_unsuitable() {
    let d = Document::from_texts("d", "t", Hazard::Flood, 2019, "NE", ["Some content."]);
    let p = ScriptedProvider::from_outputs(AgentRole::QaGenerator, ["{ }"]);
    assert_eq!(generate_qa(&p, &d, &d.body[0], &mut CallLog::new()).unwrap(), None);
    let p = ScriptedProvider::from_outputs(
        AgentRole::QaGenerator,
        [r#"{"statement": "x", "answer": "true", "category": "Analysis Approach"}"#],
    );
    assert!(generate_qa(&p, &d, &d.body[0], &mut CallLog::new()).unwrap().is_some());
}

#[test]
fn five_paragraphs_three_valid() {
    let d = Document::from_texts(
        "d",
        "t",
        Hazard::Flood,
        2019,
        "NE",
        ["p zero", "p one", "p two", "p three", "p four"],
    );
    let p = FnProvider::new("gen", |r| {
        let para = r.binding("paragraph").unwrap();
        Ok(match para {
            "p one" => "{}".to_string(),
            "p three" => json!({"question": "q", "options": ["A. a", "B. b", "C. c"], "correct": "A", "category": "Analysis Approach"}).to_string(),
            _ => json!({"statement": format!("{para} is true"), "answer": "true", "category": "Analysis Approach"}).to_string(),
        })
    });
    let b = build_dataset(&[d], &p, 1);
    assert_eq!(b.dataset.len(), 3);
    assert_eq!(b.ledger.len(), 2);
    assert_eq!(b.ledger[0].outcome, SkipReason::Unsuitable);
    assert!(matches!(b.ledger[1].outcome, SkipReason::Rejected { rejection: Rejection::BadOptions(_) }));
    assert_eq!(b.dataset.summary.total, 3);
    assert_eq!(b.dataset.summary.by_category[&QaCategory::AnalysisApproach], 3);
    assert_eq!(b.dataset.summary.by_hazard[&Hazard::Flood], 3);
}

#[test]
fn noncontent_paragraphs_never_reach_the_generator() {
    let d = Document::from_texts("d", "t", Hazard::Flood, 2019, "NE", ["References", "Real content here."]);
    let p = FnProvider::new("gen", |r| {
        assert_ne!(r.binding("paragraph"), Some("References"));
        Ok(json!({"statement": "s", "answer": "true", "category": "Analysis Approach"}).to_string())
    });
    let b = build_dataset(&[d], &p, 1);
    assert_eq!(b.dataset.items.len(), 1);
    assert_eq!(b.dataset.items[0].provenance.paragraph_index, 1);
}

#[test]
fn empty_input_gives_zeroed_counts() {
    let b = build_dataset(&[], &ScriptedProvider::new(Default::default()), 4);
    assert!(b.dataset.is_empty());
    assert_eq!(b.dataset.summary.total, 0);
    assert!(b.dataset.summary.by_kind.values().all(|&n| n == 0));
    assert_eq!(b.dataset.summary.by_hazard.len(), 7);
}

#[test]
fn duplicate_provenance_gets_suffixes() {
    let d = Document::from_texts("d", "t", Hazard::Flood, 2019, "NE", ["only"]);
    let p = FnProvider::new("gen", |_| Ok(json!({"statement": "s", "answer": "true", "category": "Analysis Approach"}).to_string()));
    let b = build_dataset(&[d.clone(), d.clone(), d], &p, 2);
    let ids: Vec<_> = b.dataset.items.iter().map(|i| i.id.clone()).collect();
    assert_eq!(ids[1], format!("{}-1", ids[0]));
    assert_eq!(ids[2], format!("{}-2", ids[0]));
}

#[test]
fn generation_failure_is_logged_not_fatal() {
    let d = Document::from_texts("d", "t", Hazard::Flood, 2019, "NE", ["a", "b"]);
    let p = ScriptedProvider::from_outputs(
        AgentRole::QaGenerator,
        ["nope", "nope", "nope", r#"{"statement": "s", "answer": "false", "category": "Response and Recovery"}"#],
    );
    let b = build_dataset(&[d], &p, 1);
    assert_eq!(b.dataset.len(), 1);
    assert!(matches!(b.ledger[0].outcome, SkipReason::GenerationFailed { .. }));
    assert_eq!(b.log.count(AgentRole::QaGenerator), 4);
}

#[test]
fn files_round_trip() {
    let d = Document::from_texts("d", "t", Hazard::Storm, 2015, "LA", ["a", "b"]);
    let p = FnProvider::new("gen", |r| {
        Ok(if r.binding("paragraph") == Some("a") {
            json!({"question": "q?", "options": ["A. 1", "B. 2", "C. 3", "D. 4"], "correct": "C", "category": "Impacts and Damage"}).to_string()
        } else {
            "{}".to_string()
        })
    });
    let b = build_dataset(&[d], &p, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("qa.jsonl");
    write_dataset(&path, &b).unwrap();
    assert_eq!(read_dataset_jsonl(&path).unwrap(), b.dataset);
    assert!(summary_path(&path).exists());
    assert_eq!(std::fs::read_to_string(ledger_path(&path)).unwrap().lines().count(), 1);
    let tampered = std::fs::read_to_string(&path).unwrap().replace("\"C\"", "\"E\"");
    std::fs::write(&path, tampered).unwrap();
    assert!(read_dataset_jsonl(&path).is_err());
}

#[test]
fn summary_table_renders_totals() {
    let raw = json!({"statement": "s", "answer": "true", "category": "Hazard Characteristics"});
    let ds = QADataset::new(vec![validate_qa(&raw, &prov()).unwrap()]).unwrap();
    let t = ds.summary.render();
    assert!(t.lines().next().unwrap().starts_with("Task Category"));
    assert!(t.lines().last().unwrap().ends_with("1"));
}

fn arb_raw() -> impl Strategy<Value = Value> {
    let cat = prop_oneof![
        Just("Hazard Characteristics"),
        Just("analysis approach"),
        Just("Impacts & Damage"),
        Just("Response and Recovery"),
        Just("Invalid"),
        Just("Weather"),
    ];
    let text = "[ a-zA-Z0-9?.]{0,30}";
    let tf = (text, prop_oneof![Just("true"), Just("FALSE"), Just("maybe")], cat.clone())
        .prop_map(|(t, a, c)| json!({"statement": t, "answer": a, "category": c}));
    let opt = "[a-z ]{0,8}";
    let mc = (
        text,
        prop::collection::vec(opt, 3..=5),
        prop_oneof![Just(true), Just(false)],
        "[A-Ea-e]",
        cat,
    )
        .prop_map(|(t, opts, prefix, g, c)| {
            let opts: Vec<String> = opts
                .iter()
                .enumerate()
                .map(|(i, o)| if prefix { format!("{}. {o}", (b'A' + i as u8) as char) } else { o.clone() })
                .collect();
            json!({"question": t, "options": opts, "correct": g, "category": c})
        });
    prop_oneof![tf, mc]
}

proptest! {
    #[test]
    fn revalidation_is_a_fixpoint(raw in arb_raw()) {
        if let Ok(item) = validate_qa(&raw, &prov()) {
            let again = validate_qa(&item.to_raw(), &item.provenance).unwrap();
            prop_assert_eq!(&again, &item);
            let text = serde_json::to_string(&item).unwrap();
            prop_assert_eq!(serde_json::from_str::<QAItem>(&text).unwrap(), item);
        }
    }

    #[test]
    fn summary_sums_agree(n_tf in 0usize..20, n_mc in 0usize..20) {
        let mut items = Vec::new();
        for i in 0..n_tf + n_mc {
            let mut p = prov();
            p.paragraph_index = i;
            p.hazard_type = Hazard::ALL[i % 7];
            let cat = QaCategory::ALL[i % 4].name();
            let raw = if i < n_tf {
                json!({"statement": "s", "answer": "true", "category": cat})
            } else {
                mc(four(), "A").as_object().cloned().map(|mut o| { o.insert("category".into(), cat.into()); Value::Object(o) }).unwrap()
            };
            items.push(validate_qa(&raw, &p).unwrap());
        }
        let s = DatasetSummary::of(&items);
        prop_assert_eq!(s.by_kind.values().sum::<usize>(), s.total);
        prop_assert_eq!(s.by_category.values().sum::<usize>(), s.total);
        prop_assert_eq!(s.by_hazard.values().sum::<usize>(), s.total);
        let cells: usize = s.by_category_kind.values().flat_map(|r| r.values()).sum();
        prop_assert_eq!(cells, s.total);
    }
}
