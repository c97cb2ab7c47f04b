//! Staged record drafting. Three gateway calls build the record in the order
//! the data model names its components: subjective ontology, objective
//! findings, then the ground-truth assessment. Each stage parses a tagged
//! reply format (documented in `docs/synthesis-stages.md`) and is retried a
//! bounded number of times on parse failure.

use std::collections::{BTreeMap, BTreeSet};

use crate::domain::{CaseId, ObjectiveFindings, PatientRecord, PersonaProfile, SubjectiveOntology, SymptomReport};
use crate::gateway::{CallSettings, ChatMessage, ChatRequest, Gateway, Purpose, RequestTags};
use crate::prompts;

use super::{CaseSpec, DraftRecord, SynthError};

/// Retries per stage before the spec is declared a synthesis failure.
pub const MAX_STAGE_RETRIES: u32 = 2;

fn tagged_values<'a>(text: &'a str, tag: &str) -> Vec<&'a str> {
    text.lines()
        .filter_map(|line| {
            let trimmed = line.trim();
            // ASCII tag, so the byte-level prefix check is char-safe.
            if trimmed.len() >= tag.len()
                && trimmed.as_bytes()[..tag.len()].eq_ignore_ascii_case(tag.as_bytes())
            {
                Some(trimmed[tag.len()..].trim())
            } else {
                None
            }
        })
        .filter(|v| !v.is_empty())
        .collect()
}

pub(super) fn render_persona(persona: &PersonaProfile) -> String {
    format!(
        "{}-year-old {} {}; traits: {}; communication style: {}",
        persona.age,
        persona.sex,
        persona.occupation,
        persona.traits.join(", "),
        persona.communication_style
    )
}

pub(super) struct ParsedSubjective {
    pub chief_complaint: String,
    pub symptoms: Vec<SymptomReport>,
    pub history: Vec<String>,
}

pub(super) fn parse_subjective(text: &str) -> Result<ParsedSubjective, String> {
    let complaints = tagged_values(text, "CHIEF_COMPLAINT:");
    let complaint = complaints
        .first()
        .ok_or("missing CHIEF_COMPLAINT line")?
        .to_string();
    let mut symptoms = Vec::new();
    for raw in tagged_values(text, "SYMPTOM:") {
        let (description, onset) = match raw.split_once('|') {
            Some((d, o)) => (d.trim().to_string(), o.trim().to_string()),
            None => (raw.to_string(), "unspecified".to_string()),
        };
        if !description.is_empty() {
            symptoms.push(SymptomReport { description, onset });
        }
    }
    if symptoms.is_empty() {
        return Err("no SYMPTOM lines".to_string());
    }
    let history = tagged_values(text, "HISTORY:")
        .into_iter()
        .map(str::to_string)
        .collect();
    Ok(ParsedSubjective {
        chief_complaint: complaint,
        symptoms,
        history,
    })
}

pub(super) struct ParsedObjective {
    pub exam_reports: BTreeMap<String, String>,
    pub gold_exams: BTreeSet<String>,
}

pub(super) fn parse_objective(text: &str) -> Result<ParsedObjective, String> {
    let mut exam_reports = BTreeMap::new();
    for raw in tagged_values(text, "EXAM:") {
        let Some((name, report)) = raw.split_once('|') else {
            return Err(format!("EXAM line without '|': {raw:?}"));
        };
        let name = name.trim();
        let report = report.trim();
        if name.is_empty() || report.is_empty() {
            return Err("EXAM line with empty name or report".to_string());
        }
        exam_reports.insert(name.to_string(), report.to_string());
    }
    if exam_reports.is_empty() {
        return Err("no EXAM lines".to_string());
    }
    let gold_exams: BTreeSet<String> = tagged_values(text, "GOLD_EXAM:")
        .into_iter()
        .map(str::to_string)
        .collect();
    if gold_exams.is_empty() {
        return Err("no GOLD_EXAM lines".to_string());
    }
    // A gold exam naming a missing report is NOT a parse failure: it is a
    // structural violation recorded for the refinement loop to repair.
    Ok(ParsedObjective {
        exam_reports,
        gold_exams,
    })
}

pub(super) struct ParsedAssessment {
    pub diagnosis: String,
    pub treatment: String,
}

pub(super) fn parse_assessment(text: &str) -> Result<ParsedAssessment, String> {
    let diagnosis = tagged_values(text, "DIAGNOSIS:")
        .first()
        .ok_or("missing DIAGNOSIS line")?
        .to_string();
    let treatment = tagged_values(text, "TREATMENT:")
        .first()
        .ok_or("missing TREATMENT line")?
        .to_string();
    Ok(ParsedAssessment {
        diagnosis,
        treatment,
    })
}

fn run_stage<T>(
    stage: &'static str,
    prompt: String,
    spec: &CaseSpec,
    gateway: &Gateway,
    call: &CallSettings,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<T, SynthError> {
    let mut messages = vec![ChatMessage::user(prompt)];
    let mut last_detail = String::new();
    for attempt in 1..=(MAX_STAGE_RETRIES + 1) {
        let request = ChatRequest {
            model: call.model.clone(),
            messages: messages.clone(),
            temperature: call.temperature,
            max_tokens: call.max_tokens,
            tags: RequestTags::new(
                Purpose::Synth,
                "synth-pipeline",
                format!("spec-{}", spec.rng_seed),
            ),
        };
        let response = gateway.complete(&request)?;
        match parse(&response.content) {
            Ok(parsed) => return Ok(parsed),
            Err(detail) => {
                messages.push(ChatMessage::assistant(response.content));
                messages.push(ChatMessage::user(format!(
                    "Your reply could not be parsed ({detail}). Emit the tagged lines for this \
                     stage again, exactly as instructed."
                )));
                last_detail = detail;
                let _ = attempt;
            }
        }
    }
    Err(SynthError::StageParse {
        stage,
        attempts: MAX_STAGE_RETRIES + 1,
        detail: last_detail,
    })
}

/// Runs the three generation stages for one spec and assembles the draft.
/// The draft's issue list starts empty; the refinement loop owns validation.
pub fn draft_record(
    spec: &CaseSpec,
    id: CaseId,
    typical_symptoms: &[String],
    standard_exams: &[String],
    guideline_treatment: &str,
    gateway: &Gateway,
    call: &CallSettings,
) -> Result<DraftRecord, SynthError> {
    let persona_text = render_persona(&spec.persona_seed);
    let comorbidity_text = spec.comorbidity.clone().unwrap_or_else(|| "none".to_string());

    let subjective_prompt = prompts::render(
        prompts::SYNTH_SUBJECTIVE,
        &[
            ("primary_disease", spec.primary_disease.as_str()),
            ("typical_symptoms", &typical_symptoms.join(", ")),
            ("comorbidity", &comorbidity_text),
            ("persona", &persona_text),
        ],
    );
    let subjective = run_stage(
        "subjective",
        subjective_prompt,
        spec,
        gateway,
        call,
        parse_subjective,
    )?;

    let subjective_text = format!(
        "{}\n{}",
        subjective.chief_complaint,
        subjective
            .symptoms
            .iter()
            .map(|s| format!("{} ({})", s.description, s.onset))
            .collect::<Vec<_>>()
            .join("\n")
    );
    let objective_prompt = prompts::render(
        prompts::SYNTH_OBJECTIVE,
        &[
            ("primary_disease", spec.primary_disease.as_str()),
            ("standard_exams", &standard_exams.join(", ")),
            ("subjective", &subjective_text),
        ],
    );
    let objective = run_stage(
        "objective",
        objective_prompt,
        spec,
        gateway,
        call,
        parse_objective,
    )?;

    let exams_text = objective
        .exam_reports
        .iter()
        .map(|(name, report)| format!("{name}: {report}"))
        .collect::<Vec<_>>()
        .join("\n");
    let assessment_prompt = prompts::render(
        prompts::SYNTH_ASSESSMENT,
        &[
            ("primary_disease", spec.primary_disease.as_str()),
            ("guideline_treatment", guideline_treatment),
            ("subjective", &subjective_text),
            ("exams", &exams_text),
        ],
    );
    let assessment = run_stage(
        "assessment",
        assessment_prompt,
        spec,
        gateway,
        call,
        parse_assessment,
    )?;

    let record = PatientRecord {
        id,
        department: spec.department.clone(),
        persona: spec.persona_seed.clone(),
        subjective: SubjectiveOntology {
            chief_complaint: subjective.chief_complaint,
            symptoms: subjective.symptoms,
            history: subjective.history,
        },
        objective: ObjectiveFindings {
            exam_reports: objective.exam_reports,
            gold_diagnosis: assessment.diagnosis,
            gold_exams: objective.gold_exams,
            gold_treatment: assessment.treatment,
        },
    };
    Ok(DraftRecord {
        record,
        issues: Vec::new(),
        iteration: 0,
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::gateway::{ScriptStep, TokenUsage};

    /// Scripted replies for one clean three-stage drafting pass.
    pub fn clean_stage_steps() -> Vec<ScriptStep> {
        vec![
            ScriptStep::new(
                Purpose::Synth,
                "CHIEF_COMPLAINT: my throat has been burning for days\n\
                 SYMPTOM: painful swallowing | three days ago\n\
                 SYMPTOM: evening fever | two days ago\n\
                 HISTORY: no chronic conditions",
                TokenUsage::new(40, 30),
            )
            .with_pattern("Stage: subjective"),
            ScriptStep::new(
                Purpose::Synth,
                "EXAM: throat culture | heavy growth of group A streptococcus\n\
                 EXAM: rapid antigen test | positive for streptococcal antigen\n\
                 GOLD_EXAM: throat culture",
                TokenUsage::new(50, 25),
            )
            .with_pattern("Stage: objective"),
            ScriptStep::new(
                Purpose::Synth,
                "DIAGNOSIS: streptococcal pharyngitis\n\
                 TREATMENT: oral penicillin V for ten days",
                TokenUsage::new(60, 15),
            )
            .with_pattern("Stage: assessment"),
        ]
    }
}
