//! The validate-and-repair refinement loop. Each pass runs the structural
//! validator plus a deterministic semantic checklist against the disease
//! entry; open issues are handed to a repair call that re-emits the full
//! record. A repair that increases the issue count is discarded and the
//! previous draft retried. Records still structurally invalid after the
//! iteration budget are rejected, never emitted.

use std::collections::BTreeSet;

use crate::domain::{validate_record, DiseaseEntry, PatientRecord};
use crate::embedding::tokenize_alnum;
use crate::eval::metrics::canonical_name;
use crate::gateway::{CallSettings, ChatMessage, ChatRequest, Gateway, Purpose, RequestTags};
use crate::prompts;

use super::draft::{parse_assessment, parse_objective, parse_subjective};
use super::{DraftRecord, SynthError};

/// Result of a refinement run: the accepted record, how many repair
/// iterations it took, and how many semantic issues remain open.
#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub record: PatientRecord,
    pub iterations: u32,
    pub remaining_issues: usize,
}

fn content_tokens(text: &str) -> BTreeSet<String> {
    tokenize_alnum(text)
        .into_iter()
        .filter(|t| t.chars().count() >= 4)
        .collect()
}

/// The deterministic semantic checklist: symptoms must echo the disease's
/// typical picture, at least one standard exam must be among the gold exams,
/// and the treatment must share content with the guideline text.
pub fn semantic_issues(record: &PatientRecord, disease: &DiseaseEntry) -> Vec<String> {
    let mut issues = Vec::new();

    let reported = content_tokens(&format!(
        "{} {}",
        record.subjective.chief_complaint,
        record
            .subjective
            .symptoms
            .iter()
            .map(|s| s.description.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    ));
    let expected = content_tokens(&disease.typical_symptoms.join(" "));
    if !expected.is_empty() && reported.is_disjoint(&expected) {
        issues.push(format!(
            "symptoms do not reflect the typical picture of {} ({})",
            disease.name,
            disease.typical_symptoms.join(", ")
        ));
    }

    if !disease.standard_exams.is_empty() {
        let gold: BTreeSet<String> = record
            .objective
            .gold_exams
            .iter()
            .map(|e| canonical_name(e))
            .collect();
        let standard_hit = disease
            .standard_exams
            .iter()
            .any(|e| gold.contains(&canonical_name(e)));
        if !standard_hit {
            issues.push(format!(
                "gold exams omit every standard exam for {} ({})",
                disease.name,
                disease.standard_exams.join(", ")
            ));
        }
    }

    let treatment_tokens = content_tokens(&record.objective.gold_treatment);
    let guideline_tokens = content_tokens(&disease.guideline_treatment);
    if !guideline_tokens.is_empty() && treatment_tokens.is_disjoint(&guideline_tokens) {
        issues.push(format!(
            "treatment does not match the guideline for {} ({:?})",
            disease.name, disease.guideline_treatment
        ));
    }

    issues
}

fn all_issues(record: &PatientRecord, disease: &DiseaseEntry) -> Vec<String> {
    let mut issues: Vec<String> = validate_record(record)
        .iter()
        .map(|v| v.to_string())
        .collect();
    issues.extend(semantic_issues(record, disease));
    issues
}

fn render_draft(record: &PatientRecord) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "CHIEF_COMPLAINT: {}\n",
        record.subjective.chief_complaint
    ));
    for s in &record.subjective.symptoms {
        out.push_str(&format!("SYMPTOM: {} | {}\n", s.description, s.onset));
    }
    for h in &record.subjective.history {
        out.push_str(&format!("HISTORY: {h}\n"));
    }
    for (name, report) in &record.objective.exam_reports {
        out.push_str(&format!("EXAM: {name} | {report}\n"));
    }
    for g in &record.objective.gold_exams {
        out.push_str(&format!("GOLD_EXAM: {g}\n"));
    }
    out.push_str(&format!(
        "DIAGNOSIS: {}\n",
        record.objective.gold_diagnosis
    ));
    out.push_str(&format!(
        "TREATMENT: {}",
        record.objective.gold_treatment
    ));
    out
}

fn parse_repair(text: &str, base: &PatientRecord) -> Result<PatientRecord, String> {
    let subjective = parse_subjective(text)?;
    let objective = parse_objective(text)?;
    let assessment = parse_assessment(text)?;
    let mut record = base.clone();
    record.subjective.chief_complaint = subjective.chief_complaint;
    record.subjective.symptoms = subjective.symptoms;
    record.subjective.history = subjective.history;
    record.objective.exam_reports = objective.exam_reports;
    record.objective.gold_exams = objective.gold_exams;
    record.objective.gold_diagnosis = assessment.diagnosis;
    record.objective.gold_treatment = assessment.treatment;
    Ok(record)
}

/// Runs validation passes and bounded repair calls until the draft is clean
/// or the budget is spent. Exits early at zero issues; a structurally invalid
/// record after `max_iters` repairs is rejected.
pub fn refine(
    draft: DraftRecord,
    disease: &DiseaseEntry,
    gateway: &Gateway,
    call: &CallSettings,
    max_iters: u32,
) -> Result<RefineOutcome, SynthError> {
    let mut current = draft.record;
    let mut issues = all_issues(&current, disease);
    let mut iterations = 0u32;

    while !issues.is_empty() && iterations < max_iters {
        iterations += 1;
        let prompt = prompts::render(
            prompts::SYNTH_REPAIR,
            &[
                ("draft", &render_draft(&current)),
                (
                    "issues",
                    &issues
                        .iter()
                        .map(|i| format!("- {i}"))
                        .collect::<Vec<_>>()
                        .join("\n"),
                ),
            ],
        );
        let request = ChatRequest {
            model: call.model.clone(),
            messages: vec![ChatMessage::user(prompt)],
            temperature: call.temperature,
            max_tokens: call.max_tokens,
            tags: RequestTags::new(Purpose::Synth, "synth-pipeline", current.id.as_str()),
        };
        let response = gateway.complete(&request)?;
        match parse_repair(&response.content, &current) {
            Ok(repaired) => {
                let repaired_issues = all_issues(&repaired, disease);
                // Non-increasing issue count is the acceptance bar for a
                // repair; a worse repair is dropped and the budget spent.
                if repaired_issues.len() <= issues.len() {
                    current = repaired;
                    issues = repaired_issues;
                }
            }
            Err(_) => {
                // An unparseable repair reply consumes the iteration.
            }
        }
    }

    if !validate_record(&current).is_empty() {
        return Err(SynthError::Rejected {
            iterations,
            issues: issues.len(),
        });
    }
    Ok(RefineOutcome {
        record: current,
        iterations,
        remaining_issues: issues.len(),
    })
}
