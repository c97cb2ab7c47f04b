//! Physician operations: the decision loop prompt, consultation replies,
//! post-case reflection, and the two retrieval paths (experience and
//! knowledge base).

use thiserror::Error;

use crate::domain::{CaseId, DepartmentId, KnowledgeBase, PatientRecord};
use crate::embedding::{rank_by_cosine, Embedder};
use crate::gateway::{
    CallSettings, ChatMessage, ChatRequest, Gateway, GatewayError, Purpose, RequestTags,
    TokenUsage,
};
use crate::prompts;

use super::grammar::{parse_action, ActionParseError};
use super::{Action, Dimension, ExperienceEntry, PhysicianAgent, ReflectionReport};

/// How many grammar re-prompts a decision turn gets before it is declared a
/// parse failure.
pub const MAX_PARSE_RETRIES: u32 = 2;

#[derive(Debug, Error)]
pub enum ConsultError {
    #[error("cannot consult one's own department ({0})")]
    OwnDepartment(DepartmentId),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Everything a physician sees while working a case. Built by the arena from
/// the subjective surface and the episode's own events; gold data cannot be
/// reached through this type.
#[derive(Debug, Clone)]
pub struct EpisodeContext {
    pub case_id: CaseId,
    pub department: DepartmentId,
    /// Demographics plus the stated reason for the visit.
    pub case_brief: String,
    /// Departments the physician may consult (its own excluded).
    pub consultable_departments: Vec<DepartmentId>,
    /// One line per completed turn: what was done and what came back.
    pub log: Vec<String>,
}

impl EpisodeContext {
    pub fn new(record: &PatientRecord) -> Self {
        let persona = &record.persona;
        let case_brief = format!(
            "{}-year-old {} {}; states: {}",
            persona.age, persona.sex, persona.occupation, record.subjective.chief_complaint
        );
        Self {
            case_id: record.id.clone(),
            department: record.department.clone(),
            case_brief,
            consultable_departments: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn with_departments(mut self, departments: &[DepartmentId]) -> Self {
        self.consultable_departments = departments
            .iter()
            .filter(|d| **d != self.department)
            .cloned()
            .collect();
        self
    }

    pub fn push_turn(&mut self, turn: u32, summary: String) {
        self.log.push(format!("Turn {turn}: {summary}"));
    }

    fn log_text(&self) -> String {
        if self.log.is_empty() {
            "(no actions yet)".to_string()
        } else {
            self.log.join("\n")
        }
    }

    /// Features used to retrieve relevant experience for this case.
    pub fn features(&self) -> String {
        format!("{} {}", self.case_brief, self.log_text())
    }
}

/// Outcome of one decision turn: a parsed action, or a persistent parse
/// failure after the bounded re-prompts. Either way the accumulated usage is
/// returned so the transcript can attribute every token.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Act(Action),
    ParseFailure { attempts: u32, last_error: String },
}

fn decide_messages(
    physician: &PhysicianAgent,
    ctx: &EpisodeContext,
    experience: &[&ExperienceEntry],
) -> Vec<ChatMessage> {
    let system = prompts::render(
        prompts::PHYSICIAN_SYSTEM,
        &[
            ("physician_id", &physician.id),
            ("department", physician.department.as_str()),
        ],
    );
    let experience_text = if experience.is_empty() {
        "(none)".to_string()
    } else {
        experience
            .iter()
            .map(|e| format!("- [{}] {}: {}", e.dimension, e.disease_tag, e.lesson))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let departments = if ctx.consultable_departments.is_empty() {
        "(none)".to_string()
    } else {
        ctx.consultable_departments
            .iter()
            .map(|d| d.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let user = prompts::render(
        prompts::PHYSICIAN_USER,
        &[
            ("case_id", ctx.case_id.as_str()),
            ("case_brief", &ctx.case_brief),
            ("departments", &departments),
            ("experience", &experience_text),
            ("log", &ctx.log_text()),
        ],
    );
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

/// Asks the physician model for the next action and parses the reply against
/// the action grammar. Parse failures are re-prompted with a grammar reminder
/// up to [`MAX_PARSE_RETRIES`] times; gateway errors propagate.
///
/// With `experience_k == 0` the prompt is provably independent of the
/// accumulated experience (the ablation hook).
pub fn decide_next_action(
    physician: &PhysicianAgent,
    ctx: &EpisodeContext,
    gateway: &Gateway,
    call: &CallSettings,
    experience_k: usize,
    embed: &Embedder,
) -> Result<(Decision, TokenUsage), GatewayError> {
    let experience = retrieve_experience(physician, &ctx.features(), experience_k, embed);
    let mut messages = decide_messages(physician, ctx, &experience);
    let mut usage = TokenUsage::default();
    let mut last_error: Option<ActionParseError> = None;

    for attempt in 0..=MAX_PARSE_RETRIES {
        let request = ChatRequest {
            model: call.model.clone(),
            messages: messages.clone(),
            temperature: call.temperature,
            max_tokens: call.max_tokens,
            tags: RequestTags::new(Purpose::Physician, &physician.id, ctx.case_id.as_str()),
        };
        let response = gateway.complete(&request)?;
        usage += response.usage;
        match parse_action(&response.content) {
            Ok(action) => return Ok((Decision::Act(action), usage)),
            Err(err) => {
                messages.push(ChatMessage::assistant(response.content));
                messages.push(ChatMessage::user(format!(
                    "Your reply could not be parsed ({err}). Respond again using only the \
                     tagged lines of the action grammar: an ACTION line, a TARGET line for \
                     CONSULT, and a CONTENT line for every action except PERCEIVE."
                )));
                last_error = Some(err);
                let _ = attempt;
            }
        }
    }
    Ok((
        Decision::ParseFailure {
            attempts: MAX_PARSE_RETRIES + 1,
            last_error: last_error.expect("at least one parse attempt").to_string(),
        },
        usage,
    ))
}

/// A consultant's free-text advice, produced with its own experience in
/// context. Consulting one's own department is a precondition violation.
#[allow(clippy::too_many_arguments)]
pub fn consult_reply(
    consultant: &PhysicianAgent,
    requesting_department: &DepartmentId,
    question: &str,
    case_summary: &str,
    case_id: &CaseId,
    gateway: &Gateway,
    call: &CallSettings,
    experience_k: usize,
    embed: &Embedder,
) -> Result<(String, TokenUsage), ConsultError> {
    if consultant.department == *requesting_department {
        return Err(ConsultError::OwnDepartment(consultant.department.clone()));
    }
    let features = format!("{case_summary} {question}");
    let experience = retrieve_experience(consultant, &features, experience_k, embed);
    let experience_text = if experience.is_empty() {
        "(none)".to_string()
    } else {
        experience
            .iter()
            .map(|e| format!("- [{}] {}: {}", e.dimension, e.disease_tag, e.lesson))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let user = prompts::render(
        prompts::CONSULT_USER,
        &[
            ("physician_id", &consultant.id),
            ("department", consultant.department.as_str()),
            ("requesting_department", requesting_department.as_str()),
            ("case_summary", case_summary),
            ("experience", &experience_text),
            ("question", question),
        ],
    );
    let request = ChatRequest {
        model: call.model.clone(),
        messages: vec![ChatMessage::user(user)],
        temperature: call.temperature,
        max_tokens: call.max_tokens,
        tags: RequestTags::new(Purpose::Physician, &consultant.id, case_id.as_str()),
    };
    let response = gateway.complete(&request)?;
    Ok((response.content, response.usage))
}

/// Per-case results handed to reflection. Mirrors the scoring surface without
/// depending on the evaluation module.
#[derive(Debug, Clone, Copy)]
pub struct ReflectionScores {
    pub exam_precision: f64,
    pub diag_accuracy: f64,
    pub treatment_alignment: f64,
}

/// Outcome fields reflection compares against gold.
#[derive(Debug, Clone)]
pub struct ReflectionOutcome {
    pub final_diagnosis: String,
    pub ordered_exams: Vec<String>,
    pub treatment_plan: String,
}

fn tagged_value<'a>(line: &'a str, tag: &str) -> Option<&'a str> {
    let trimmed = line.trim();
    // ASCII tag, so the byte-level prefix check is char-safe.
    if trimmed.len() >= tag.len()
        && trimmed.as_bytes()[..tag.len()].eq_ignore_ascii_case(tag.as_bytes())
    {
        Some(trimmed[tag.len()..].trim())
    } else {
        None
    }
}

/// Parses the reflection reply: the three critiques plus structured
/// `LESSON: <dimension> | <disease tag> | <text>` lines. Free-text replies
/// without LESSON lines yield a report with zero entries.
pub fn parse_reflection(
    text: &str,
    source_case: &CaseId,
    batch_index: usize,
) -> ReflectionReport {
    let mut report = ReflectionReport {
        diagnostic_critique: String::new(),
        examination_critique: String::new(),
        treatment_critique: String::new(),
        extracted_entries: Vec::new(),
    };
    for line in text.lines() {
        if let Some(v) = tagged_value(line, "DIAGNOSTIC_CRITIQUE:") {
            report.diagnostic_critique = v.to_string();
        } else if let Some(v) = tagged_value(line, "EXAMINATION_CRITIQUE:") {
            report.examination_critique = v.to_string();
        } else if let Some(v) = tagged_value(line, "TREATMENT_CRITIQUE:") {
            report.treatment_critique = v.to_string();
        } else if let Some(v) = tagged_value(line, "LESSON:") {
            let parts: Vec<&str> = v.splitn(3, '|').map(str::trim).collect();
            if parts.len() == 3 {
                if let Some(dimension) = Dimension::parse(parts[0]) {
                    if !parts[2].is_empty() {
                        report.extracted_entries.push(ExperienceEntry {
                            disease_tag: parts[1].to_string(),
                            lesson: parts[2].to_string(),
                            source_case: source_case.clone(),
                            batch_index,
                            dimension,
                        });
                    }
                }
            }
        }
    }
    report
}

/// Post-case self-critique against the gold record. Extracted lessons are
/// appended to the physician's experience; on gateway errors the experience
/// is left untouched and the caller logs the skip. Gold records reach this
/// function only — never the decision loop.
#[allow(clippy::too_many_arguments)]
pub fn reflect(
    physician: &mut PhysicianAgent,
    outcome: &ReflectionOutcome,
    gold: &PatientRecord,
    scores: &ReflectionScores,
    batch_index: usize,
    gateway: &Gateway,
    call: &CallSettings,
) -> Result<(ReflectionReport, TokenUsage), GatewayError> {
    let gold_exams = gold
        .objective
        .gold_exams
        .iter()
        .cloned()
        .collect::<Vec<_>>()
        .join("; ");
    let user = prompts::render(
        prompts::REFLECT_USER,
        &[
            ("physician_id", &physician.id),
            ("department", physician.department.as_str()),
            ("case_id", gold.id.as_str()),
            ("final_diagnosis", &outcome.final_diagnosis),
            ("gold_diagnosis", &gold.objective.gold_diagnosis),
            ("ordered_exams", &outcome.ordered_exams.join("; ")),
            ("gold_exams", &gold_exams),
            ("treatment_plan", &outcome.treatment_plan),
            ("gold_treatment", &gold.objective.gold_treatment),
            ("exam_precision", &format!("{:.2}", scores.exam_precision)),
            ("diag_accuracy", &format!("{:.0}", scores.diag_accuracy)),
            (
                "treatment_alignment",
                &format!("{:.2}", scores.treatment_alignment),
            ),
        ],
    );
    let request = ChatRequest {
        model: call.model.clone(),
        messages: vec![ChatMessage::user(user)],
        temperature: call.temperature,
        max_tokens: call.max_tokens,
        tags: RequestTags::new(Purpose::Physician, &physician.id, gold.id.as_str()),
    };
    let response = gateway.complete(&request)?;
    let report = parse_reflection(&response.content, &gold.id, batch_index);
    physician
        .experience
        .extend(report.extracted_entries.iter().cloned());
    Ok((report, response.usage))
}

/// Top-k experience entries ranked by similarity of lesson + disease tag to
/// the case features. `k == 0` always yields an empty list.
pub fn retrieve_experience<'a>(
    physician: &'a PhysicianAgent,
    case_features: &str,
    k: usize,
    embed: &Embedder,
) -> Vec<&'a ExperienceEntry> {
    if k == 0 || physician.experience.is_empty() {
        return Vec::new();
    }
    let query = embed(case_features);
    let vectors: Vec<Vec<f64>> = physician
        .experience
        .iter()
        .map(|e| embed(&format!("{} {}", e.disease_tag, e.lesson)))
        .collect();
    rank_by_cosine(&query, &vectors, k)
        .into_iter()
        .map(|i| &physician.experience[i])
        .collect()
}

/// Top-k disease summaries by similarity of the query to disease name plus
/// typical symptoms. Deterministic for a fixed knowledge base.
pub fn retrieve_knowledge(
    kb: &KnowledgeBase,
    query: &str,
    k: usize,
    embed: &Embedder,
) -> Vec<String> {
    if k == 0 || kb.diseases.is_empty() {
        return Vec::new();
    }
    let query_vector = embed(query);
    let vectors: Vec<Vec<f64>> = kb
        .diseases
        .iter()
        .map(|d| embed(&format!("{} {}", d.name, d.typical_symptoms.join(" "))))
        .collect();
    rank_by_cosine(&query_vector, &vectors, k)
        .into_iter()
        .map(|i| {
            let d = &kb.diseases[i];
            format!(
                "{} ({}): typical symptoms {}; standard exams {}; guideline: {}",
                d.name,
                d.department,
                d.typical_symptoms.join(", "),
                d.standard_exams.join(", "),
                d.guideline_treatment
            )
        })
        .collect()
}
