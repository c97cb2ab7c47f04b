//! Property tests over the dataset/split/batch plumbing, the action grammar,
//! metric bounds, the usage ledger, and retrieval determinism.

use std::collections::BTreeSet;

use proptest::prelude::*;

use openhospital_core::domain::{
    CaseDataset, CaseId, DepartmentId, ObjectiveFindings, PatientRecord, PersonaProfile, Sex,
    SubjectiveOntology, SymptomReport,
};
use openhospital_core::embedding::{cosine, default_embedder, rank_by_cosine};
use openhospital_core::eval::{canonical_name, examination_precision};
use openhospital_core::gateway::{estimate_tokens, Purpose, RequestTags, TokenUsage, UsageLedger};
use openhospital_core::physician::{parse_action, render_action, Action};

fn record(i: usize, complaint: &str, history: Vec<String>) -> PatientRecord {
    let mut exam_reports = std::collections::BTreeMap::new();
    exam_reports.insert("panel".to_string(), format!("report text {i}"));
    let mut gold_exams = BTreeSet::new();
    gold_exams.insert("panel".to_string());
    PatientRecord {
        id: CaseId::new(format!("P-{i}")),
        department: DepartmentId::new("General"),
        persona: PersonaProfile {
            age: 20 + (i % 70) as u32,
            sex: Sex::Other,
            occupation: format!("occupation {i}"),
            traits: vec![format!("trait {i}")],
            communication_style: "plain".to_string(),
        },
        subjective: SubjectiveOntology {
            chief_complaint: complaint.to_string(),
            symptoms: vec![SymptomReport {
                description: format!("symptom {i}"),
                onset: "recently".to_string(),
            }],
            history,
        },
        objective: ObjectiveFindings {
            exam_reports,
            gold_diagnosis: format!("diagnosis {i}"),
            gold_exams,
            gold_treatment: format!("treatment {i}"),
        },
    }
}

fn dataset(n: usize) -> CaseDataset {
    let records = (0..n)
        .map(|i| record(i, "a steady complaint", vec![format!("item {i}")]))
        .collect();
    CaseDataset::from_records(records).unwrap()
}

fn payload() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9][a-zA-Z0-9 ,.?-]{0,38}".prop_map(|s| s.trim().to_string()).prop_filter(
        "nonempty after trim",
        |s| !s.is_empty(),
    )
}

fn exam_list() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec("[a-zA-Z][a-zA-Z0-9 ]{0,18}", 1..5).prop_map(|names| {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for name in names {
            let trimmed = name.trim().to_string();
            if trimmed.is_empty() {
                continue;
            }
            if seen.insert(canonical_name(&trimmed)) {
                out.push(trimmed);
            }
        }
        if out.is_empty() {
            out.push("fallback exam".to_string());
        }
        out
    })
}

fn arb_action() -> impl Strategy<Value = Action> {
    prop_oneof![
        Just(Action::Perceive),
        payload().prop_map(|question| Action::Inquire { question }),
        exam_list().prop_map(|exams| Action::OrderExam { exams }),
        (payload(), payload()).prop_map(|(dept, question)| Action::Consult {
            target_department: DepartmentId::new(dept),
            question,
        }),
        payload().prop_map(|query| Action::RetrieveKnowledge { query }),
        payload().prop_map(|diagnosis| Action::Diagnose { diagnosis }),
        payload().prop_map(|plan| Action::Treat { plan }),
    ]
}

proptest! {
    #[test]
    fn split_is_disjoint_and_exhaustive(n in 2usize..60, fraction in 0.05f64..0.95, seed in any::<u64>()) {
        let split = dataset(n).split(fraction, seed).unwrap();
        let train: BTreeSet<_> = split.train_ids.iter().cloned().collect();
        let test: BTreeSet<_> = split.test_ids.iter().cloned().collect();
        prop_assert!(train.is_disjoint(&test));
        prop_assert_eq!(train.len() + test.len(), n);
        let expected_train = (fraction * n as f64).round() as usize;
        prop_assert_eq!(train.len(), expected_train.min(n));
    }

    #[test]
    fn split_is_deterministic(n in 2usize..40, seed in any::<u64>()) {
        let a = dataset(n).split(0.7, seed).unwrap();
        let b = dataset(n).split(0.7, seed).unwrap();
        prop_assert_eq!(a.train_ids, b.train_ids);
        prop_assert_eq!(a.test_ids, b.test_ids);
    }

    #[test]
    fn batching_partitions_train_ids(n in 4usize..80, k in 1usize..10, seed in any::<u64>()) {
        let split = dataset(n).split(0.8, seed).unwrap();
        prop_assume!(k <= split.train_ids.len());
        let expected = split.train_ids.clone();
        let batched = split.into_batches(k).unwrap();
        let rejoined: Vec<_> = batched
            .batches
            .iter()
            .flat_map(|b| b.case_ids.iter().cloned())
            .collect();
        prop_assert_eq!(rejoined, expected);
        let sizes: Vec<usize> = batched.batches.iter().map(|b| b.case_ids.len()).collect();
        let max = sizes.iter().max().unwrap();
        let min = sizes.iter().min().unwrap();
        prop_assert!(max - min <= 1);
    }

    #[test]
    fn record_file_round_trip(complaint in "\\PC{1,30}", history in proptest::collection::vec("\\PC{0,40}", 0..4)) {
        prop_assume!(!complaint.trim().is_empty());
        let records = vec![record(0, &complaint, history)];
        let original = CaseDataset::from_records(records).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        original.save(&path).unwrap();
        let loaded = CaseDataset::load(&path).unwrap();
        prop_assert_eq!(loaded.records(), original.records());
    }

    #[test]
    fn action_grammar_round_trips(action in arb_action()) {
        let rendered = render_action(&action);
        let parsed = parse_action(&rendered).unwrap();
        prop_assert_eq!(parsed, action);
    }

    #[test]
    fn grammar_rejects_untagged_text(text in "[^:]*") {
        prop_assert!(parse_action(&text).is_err());
    }

    #[test]
    fn precision_stays_in_unit_interval(
        pred in proptest::collection::vec("[a-z]{1,6}", 0..8),
        gold in proptest::collection::vec("[a-z]{1,6}", 0..8),
    ) {
        let p = examination_precision(
            pred.iter().map(String::as_str),
            gold.iter().map(String::as_str),
        );
        prop_assert!((0.0..=1.0).contains(&p));
        let pred_set: BTreeSet<String> = pred.iter().map(|s| canonical_name(s)).collect();
        let gold_set: BTreeSet<String> = gold.iter().map(|s| canonical_name(s)).collect();
        if !pred_set.is_empty() && pred_set.is_subset(&gold_set) {
            prop_assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn ledger_totals_are_additive(tokens in proptest::collection::vec((0usize..4, 0u64..1000), 0..30)) {
        let purposes = [Purpose::Patient, Purpose::Physician, Purpose::Judge, Purpose::Synth];
        let ledger = UsageLedger::new();
        for (which, prompt) in &tokens {
            ledger.append(
                RequestTags::new(purposes[*which], "a", "c"),
                TokenUsage::new(*prompt, 1),
                false,
            );
        }
        let total = ledger.total_input_tokens(None);
        let partitioned: u64 = purposes
            .into_iter()
            .map(|p| ledger.total_input_tokens(Some(&move |t: &RequestTags| t.purpose == p)))
            .sum();
        prop_assert_eq!(total, partitioned);
    }

    #[test]
    fn token_estimate_is_monotone(a in "\\PC{0,40}", b in "\\PC{0,40}") {
        let joined = format!("{a}{b}");
        prop_assert!(estimate_tokens(&joined) >= estimate_tokens(&a));
        prop_assert!(estimate_tokens(&joined) >= estimate_tokens(&b));
    }

    #[test]
    fn retrieval_matches_exhaustive_sort_on_small_memories(
        texts in proptest::collection::vec("[a-z ]{1,30}", 1..50),
        query in "[a-z ]{1,20}",
        k in 1usize..8,
    ) {
        let embed = default_embedder();
        let vectors: Vec<Vec<f64>> = texts.iter().map(|t| embed(t)).collect();
        let qv = embed(&query);
        let ranked = rank_by_cosine(&qv, &vectors, k);

        let mut oracle: Vec<(usize, f64)> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, cosine(&qv, v)))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let expected: Vec<usize> = oracle.iter().take(k).map(|&(i, _)| i).collect();
        prop_assert_eq!(ranked, expected);
    }
}
