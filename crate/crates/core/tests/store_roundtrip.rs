use formalex_core::store::{Category, Corpus, HumanVerdict, MetaDecision, MetaInput, Payload, Sample, Status};
use formalex_core::verify::{VerifierKind, VerifierReport};
use formalex_core::{evaluate, FactSet, RuleTree};

const TREE: &str = r#"[
    {"p": "may_process", "op": "ALL", "conditions": ["has_basis", "purpose_limited"], "exceptions": ["objection_upheld"]},
    {"p": "has_basis", "op": "ANY", "conditions": ["consent", "contract", "legal_obligation"]}
]"#;

const ATOMS: [&str; 5] = ["consent", "contract", "legal_obligation", "purpose_limited", "objection_upheld"];

fn sample(i: usize) -> Sample {
    let tree = RuleTree::parse(TREE).unwrap();
    let chosen: Vec<&str> = ATOMS.iter().enumerate().filter(|(k, _)| i >> k & 1 == 1).map(|(_, a)| *a).collect();
    let facts = FactSet::parse(&serde_json::to_string(&chosen).unwrap()).unwrap();
    let label = evaluate(&tree, &facts, None, None).unwrap().value;
    let reports = VerifierKind::ALL
        .into_iter()
        .enumerate()
        .map(|(k, kind)| VerifierReport::new(kind, ((i * 7 + k * 13) % 101) as u32, format!("report {i}/{k}")))
        .collect();
    Sample::new(
        format!("Art. {}", 5 + i % 4),
        format!("Scenario number {i} with a controller, a processor and a data subject."),
        format!("May the controller process the data in case {i}?"),
        tree,
        facts,
        label,
        reports,
    )
}

fn verdict(who: &str, category: Category) -> HumanVerdict {
    let good = category == Category::Good;
    HumanVerdict {
        annotator_id: who.into(),
        relevant: true,
        well_formalized: good,
        logically_sound: true,
        category,
        notes: String::new(),
        timestamp: chrono::Utc::now(),
    }
}

#[test]
fn hundred_samples_round_trip_and_export_the_curated_subset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let mut corpus = Corpus::open(&path).unwrap();
    let mut ids = Vec::new();
    for i in 0..100 {
        ids.push(corpus.append(sample(i)).unwrap());
    }
    let mut expected_curated = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        if i % 5 == 4 {
            continue;
        }
        corpus.transition(id, Status::AutoVerified, Payload::None).unwrap();
        if i % 5 == 3 {
            corpus.transition(id, Status::Rejected, Payload::None).unwrap();
            continue;
        }
        corpus.transition(id, Status::Queued, Payload::None).unwrap();
        let category = if i % 3 == 0 { Category::Bad } else { Category::Good };
        corpus.transition(id, Status::HumanVerified, Payload::Verdict(verdict("ann", category))).unwrap();
        if i % 5 == 2 {
            continue;
        }
        let decision = if i % 7 == 0 { MetaDecision::Overturn } else { MetaDecision::Confirm };
        let reviewed = corpus
            .transition(
                id,
                Status::MetaReviewed,
                Payload::Meta(MetaInput { reviewer_id: "meta".into(), decision, rationale: String::new() }),
            )
            .unwrap();
        if reviewed.final_category() == Some(Category::Good) {
            expected_curated.push(id);
        }
    }

    let reopened = Corpus::open(&path).unwrap();
    assert_eq!(reopened.len(), 100);
    assert_eq!(reopened.samples(), corpus.samples());

    let out = dir.path().join("curated.jsonl");
    let n = reopened.export_curated(&out).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let exported: Vec<Sample> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(n, exported.len());
    assert_eq!(exported.iter().map(|s| s.id).collect::<Vec<_>>(), expected_curated);
    assert!(!expected_curated.is_empty());
    for s in &exported {
        assert_eq!(s.status, Status::MetaReviewed);
        assert_eq!(s.final_category(), Some(Category::Good));
        assert_eq!(evaluate(&s.rule_tree, &s.facts, None, None).unwrap().value, s.label);
    }

    let stats = reopened.stats();
    assert_eq!(stats.total, 100);
    assert_eq!(stats.curated, expected_curated.len());
}

#[test]
fn corrupt_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let mut corpus = Corpus::open(&path).unwrap();
    corpus.append(sample(1)).unwrap();
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"id\": 3}\n");
    std::fs::write(&path, text).unwrap();
    let err = Corpus::open(&path).unwrap_err().to_string();
    assert!(err.contains(":2"), "{err}");
}
