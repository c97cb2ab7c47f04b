//! Shared fixtures for CLI and acceptance tests: a small knowledge base,
//! persona seeds, mock record files, scripted providers, and config files.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use openhospital_core::domain::dataset::write_record_line;
use openhospital_core::domain::{
    CaseId, ComorbidityPair, DepartmentId, DiseaseEntry, KnowledgeBase, ObjectiveFindings,
    PatientRecord, PersonaProfile, Sex, SubjectiveOntology, SymptomReport,
};
use openhospital_core::gateway::{Purpose, Script, ScriptStep, TokenUsage};

pub const GOLD_DIAGNOSIS: &str = "streptococcal pharyngitis";
pub const GOLD_TREATMENT: &str = "oral penicillin V for ten days with supportive care";

pub fn fixture_kb() -> KnowledgeBase {
    KnowledgeBase {
        departments: vec![
            DepartmentId::new("Infectious Diseases"),
            DepartmentId::new("Cardiology"),
        ],
        diseases: vec![
            DiseaseEntry {
                name: GOLD_DIAGNOSIS.to_string(),
                department: DepartmentId::new("Infectious Diseases"),
                typical_symptoms: vec![
                    "sore throat".to_string(),
                    "fever".to_string(),
                    "painful swallowing".to_string(),
                ],
                standard_exams: vec!["throat culture".to_string()],
                guideline_treatment: "oral penicillin V for ten days".to_string(),
                prevalence_weight: 1.0,
            },
            DiseaseEntry {
                name: "atrial fibrillation".to_string(),
                department: DepartmentId::new("Cardiology"),
                typical_symptoms: vec!["palpitations".to_string()],
                standard_exams: vec!["electrocardiogram".to_string()],
                guideline_treatment: "rate control and anticoagulation".to_string(),
                prevalence_weight: 0.0,
            },
        ],
        comorbidities: vec![ComorbidityPair {
            disease_a: GOLD_DIAGNOSIS.to_string(),
            disease_b: "atrial fibrillation".to_string(),
            interaction_note: "febrile illness may trigger arrhythmia".to_string(),
        }],
    }
}

/// A record whose gold exam set has four entries, so scripts can hit any
/// precision in {1/2, 2/3, 3/4, 1}.
pub fn fixture_record(id: &str) -> PatientRecord {
    let mut exam_reports = BTreeMap::new();
    for (name, report) in [
        ("throat culture", "heavy growth of group A streptococcus colonies"),
        ("EBV antibody panel", "VCA IgM negative, consistent with past exposure"),
        ("syphilis serology", "non-reactive rapid plasma reagin"),
        ("rapid antigen test", "positive for streptococcal antigen"),
    ] {
        exam_reports.insert(name.to_string(), report.to_string());
    }
    let gold_exams: BTreeSet<String> =
        exam_reports.keys().cloned().collect();
    PatientRecord {
        id: CaseId::new(id),
        department: DepartmentId::new("Infectious Diseases"),
        persona: PersonaProfile {
            age: 34,
            sex: Sex::Female,
            occupation: "teacher".to_string(),
            traits: vec!["anxious".to_string(), "precise".to_string()],
            communication_style: "talkative".to_string(),
        },
        subjective: SubjectiveOntology {
            chief_complaint: "sore throat and fever for three days".to_string(),
            symptoms: vec![
                SymptomReport {
                    description: "painful swallowing".to_string(),
                    onset: "three days ago".to_string(),
                },
                SymptomReport {
                    description: "evening fever".to_string(),
                    onset: "two days ago".to_string(),
                },
            ],
            history: vec!["no known drug allergies".to_string()],
        },
        objective: ObjectiveFindings {
            exam_reports,
            gold_diagnosis: GOLD_DIAGNOSIS.to_string(),
            gold_exams,
            gold_treatment: GOLD_TREATMENT.to_string(),
        },
    }
}

pub fn write_records(path: &Path, records: &[PatientRecord]) {
    let file = File::create(path).unwrap();
    let mut writer = BufWriter::new(file);
    for record in records {
        write_record_line(&mut writer, record).unwrap();
    }
    writer.flush().unwrap();
}

pub fn write_fixture_dataset(path: &Path, n: usize) {
    let records: Vec<PatientRecord> = (0..n)
        .map(|i| fixture_record(&format!("C-{i:03}")))
        .collect();
    write_records(path, &records);
}

pub fn write_kb(path: &Path) {
    fixture_kb().save(path).unwrap();
}

pub fn write_personas(path: &Path, n: usize) {
    let mut file = File::create(path).unwrap();
    for i in 0..n {
        writeln!(
            file,
            r#"{{"age": {}, "sex": "female", "occupation": "worker {i}", "temperament": "calm"}}"#,
            25 + (i % 50)
        )
        .unwrap();
    }
}

pub fn decide_step(reply: &str) -> ScriptStep {
    ScriptStep::new(Purpose::Physician, reply, TokenUsage::new(100, 12))
        .with_pattern("Decide your next action")
}

pub fn patient_step(reply: &str) -> ScriptStep {
    ScriptStep::new(Purpose::Patient, reply, TokenUsage::new(80, 10))
}

pub fn judge_step(safety: u8, effectiveness: u8, personalization: u8) -> ScriptStep {
    ScriptStep::new(
        Purpose::Judge,
        format!(
            "SAFETY: {safety}\nEFFECTIVENESS: {effectiveness}\nPERSONALIZATION: {personalization}\nRATIONALE: scripted verdict"
        ),
        TokenUsage::new(45, 9),
    )
}

pub fn reflect_step(lessons: usize) -> ScriptStep {
    let mut reply = String::from(
        "DIAGNOSTIC_CRITIQUE: reasoning was sound\n\
         EXAMINATION_CRITIQUE: ordering was focused\n\
         TREATMENT_CRITIQUE: plan tracked the guideline\n",
    );
    for i in 0..lessons {
        reply.push_str(&format!(
            "LESSON: diagnostic | pharyngitis | transferable lesson number {i}\n"
        ));
    }
    ScriptStep::new(Purpose::Physician, reply, TokenUsage::new(75, 20)).with_pattern("self-critique")
}

/// Steps for one case: inquire, order the given exams, diagnose, treat, be
/// judged, and optionally reflect with the given lesson count.
pub fn case_steps(
    exams: &str,
    diagnosis: &str,
    training: bool,
    lessons: usize,
) -> Vec<ScriptStep> {
    let mut steps = vec![
        decide_step("ACTION: INQUIRE\nCONTENT: when did the symptoms start?"),
        patient_step("It started three days ago, doctor."),
        decide_step(&format!("ACTION: ORDER_EXAM\nCONTENT: {exams}")),
        decide_step(&format!("ACTION: DIAGNOSE\nCONTENT: {diagnosis}")),
        decide_step(&format!("ACTION: TREAT\nCONTENT: {GOLD_TREATMENT}")),
        judge_step(5, 4, 4),
    ];
    if training {
        steps.push(reflect_step(lessons));
    }
    steps
}

/// Script for a full `run`: per batch, its training cases then one test pass
/// over `n_test` cases.
pub fn run_script(batch_train_counts: &[usize], n_test: usize, lessons: usize) -> Script {
    let mut steps = Vec::new();
    for &count in batch_train_counts {
        for _ in 0..count {
            steps.extend(case_steps(
                "throat culture; rapid antigen test",
                GOLD_DIAGNOSIS,
                true,
                lessons,
            ));
        }
        for _ in 0..n_test {
            steps.extend(case_steps(
                "throat culture; rapid antigen test",
                GOLD_DIAGNOSIS,
                false,
                0,
            ));
        }
    }
    Script::new(steps)
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub dataset_path: PathBuf,
}

/// Writes a complete scripted-run fixture: dataset, kb, personas, script,
/// and a config pointing at all of them.
pub fn scripted_fixture(
    n_records: usize,
    n_batches: usize,
    script: &Script,
    extra_config: &str,
) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let dataset_path = root.join("records.jsonl");
    write_fixture_dataset(&dataset_path, n_records);
    write_kb(&root.join("kb.json"));
    write_personas(&root.join("personas.jsonl"), 5);
    script.save(root.join("script.jsonl")).unwrap();
    let out_dir = root.join("out");

    let config_path = root.join("config.toml");
    let body = format!(
        r#"schema = "openhospital-config/v1"
seed = 42

[paths]
dataset = {dataset:?}
knowledge_base = {kb:?}
personas = {personas:?}
out_dir = {out:?}

[provider]
kind = "scripted"
script = {script:?}

[run]
train_fraction = 0.9
n_batches = {n_batches}
max_turns = 12
{extra_config}
"#,
        dataset = dataset_path.display().to_string(),
        kb = root.join("kb.json").display().to_string(),
        personas = root.join("personas.jsonl").display().to_string(),
        out = out_dir.display().to_string(),
        script = root.join("script.jsonl").display().to_string(),
    );
    std::fs::write(&config_path, body).unwrap();
    Fixture {
        dir,
        config_path,
        out_dir,
        dataset_path,
    }
}
