//! Benchmarks for the paths that dominate large runs: hashed embeddings and
//! top-k retrieval, the diversity metrics, exam-set scoring, action parsing,
//! and 12k-record split/batch plumbing.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use openhospital_core::domain::{
    CaseDataset, CaseId, DepartmentId, ObjectiveFindings, PatientRecord, PersonaProfile, Sex,
    SubjectiveOntology, SymptomReport,
};
use openhospital_core::embedding::{embed_default, rank_by_cosine};
use openhospital_core::eval::{examination_precision, self_bleu4, tfidf_diversity};
use openhospital_core::physician::parse_action;

fn record(i: usize) -> PatientRecord {
    let mut exam_reports = std::collections::BTreeMap::new();
    exam_reports.insert("panel".to_string(), format!("finding {i}"));
    let mut gold_exams = std::collections::BTreeSet::new();
    gold_exams.insert("panel".to_string());
    PatientRecord {
        id: CaseId::new(format!("C-{i:05}")),
        department: DepartmentId::new("General"),
        persona: PersonaProfile {
            age: 20 + (i % 70) as u32,
            sex: Sex::Other,
            occupation: "worker".to_string(),
            traits: vec!["steady".to_string()],
            communication_style: "plain".to_string(),
        },
        subjective: SubjectiveOntology {
            chief_complaint: format!("complaint number {i} with several tokens"),
            symptoms: vec![SymptomReport {
                description: "generic symptom".to_string(),
                onset: "recently".to_string(),
            }],
            history: vec![],
        },
        objective: ObjectiveFindings {
            exam_reports,
            gold_diagnosis: format!("diagnosis {i}"),
            gold_exams,
            gold_treatment: format!("treatment {i}"),
        },
    }
}

fn bench_embedding(c: &mut Criterion) {
    let text = "persistent evening fever with chills, night sweats, and a dry cough \
                that worsens when lying down";
    c.bench_function("embed_default_100_chars", |b| {
        b.iter(|| embed_default(black_box(text)))
    });

    let vectors: Vec<Vec<f64>> = (0..1000)
        .map(|i| embed_default(&format!("memory chunk number {i} with injected words {}", i % 37)))
        .collect();
    let query = embed_default("fever chunk with injected words");
    c.bench_function("rank_by_cosine_1000x256_top5", |b| {
        b.iter(|| rank_by_cosine(black_box(&query), black_box(&vectors), 5))
    });
}

fn bench_diversity(c: &mut Criterion) {
    let docs: Vec<String> = (0..20)
        .map(|i| {
            format!(
                "patient {i} reports a {} ache that started {} days ago and responds to rest",
                ["dull", "sharp", "burning", "throbbing"][i % 4],
                i + 1
            )
        })
        .collect();
    c.bench_function("self_bleu4_20_docs", |b| {
        b.iter(|| self_bleu4(black_box(&docs)).unwrap())
    });
    c.bench_function("tfidf_diversity_20_docs", |b| {
        b.iter(|| tfidf_diversity(black_box(&docs)).unwrap())
    });
}

fn bench_scoring_and_parsing(c: &mut Criterion) {
    let pred = ["throat culture", "EBV antibody panel", "syphilis serology"];
    let gold = ["throat culture", "rapid antigen test"];
    c.bench_function("examination_precision_small_sets", |b| {
        b.iter(|| examination_precision(black_box(pred), black_box(gold)))
    });

    let reply = "Considering the findings so far.\nACTION: ORDER_EXAM\nCONTENT: throat culture; \
                 EBV antibody panel; syphilis serology";
    c.bench_function("parse_action_order_exam", |b| {
        b.iter(|| parse_action(black_box(reply)).unwrap())
    });
}

fn bench_dataset_plumbing(c: &mut Criterion) {
    c.bench_function("split_and_batch_12k_records", |b| {
        b.iter_batched(
            || {
                CaseDataset::from_records((0..12_000).map(record).collect()).unwrap()
            },
            |dataset| {
                dataset
                    .split(0.9, 7)
                    .unwrap()
                    .into_batches(22)
                    .unwrap()
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(
    benches,
    bench_embedding,
    bench_diversity,
    bench_scoring_and_parsing,
    bench_dataset_plumbing
);
criterion_main!(benches);
