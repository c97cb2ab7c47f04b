//! The episode turn loop. Per turn: the owning physician decides one action,
//! the arena dispatches it (patient inquiry, exam serving, consultation,
//! knowledge lookup, or recording the diagnosis/plan), and the observation
//! flows back into the context. The episode ends once both DIAGNOSE and TREAT
//! have been emitted, at the turn budget, or on a persistent parse failure.
//!
//! Gold data never enters this loop: exam reports are revealed one explicit
//! order at a time, and the diagnosis/treatment strings stay inside the
//! record's objective findings.

use std::collections::BTreeSet;

use crate::domain::{KnowledgeBase, PatientRecord};
use crate::embedding::Embedder;
use crate::eval::metrics::canonical_name;
use crate::eval::SynonymTable;
use crate::gateway::{CallSettings, Gateway, TokenUsage};
use crate::patient::{build_patient, ChunkingConfig};
use crate::physician::{
    consult_reply, decide_next_action, Action, Decision, EpisodeContext, PhysicianAgent,
};

use super::router::pick_consultant;
use super::{ActionEvent, ArenaError, EpisodeOutcome, EventBody, Termination};

/// Sentinel served for exams the record has no report for.
pub const EXAM_UNAVAILABLE: &str = "examination unavailable";

#[derive(Debug, Clone)]
pub struct ArenaConfig {
    pub max_turns: u32,
    pub reflection: bool,
    /// When set, reflection lessons propagate to the department colleague.
    pub shared_experience: bool,
    pub patient_k: usize,
    pub experience_k: usize,
    pub knowledge_k: usize,
    /// How many trailing log lines a consultation summary carries.
    pub consult_log_window: usize,
    pub agent_call: CallSettings,
    pub judge_call: CallSettings,
    pub chunking: ChunkingConfig,
    pub synonyms: Option<SynonymTable>,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            max_turns: 30,
            reflection: true,
            shared_experience: false,
            patient_k: 4,
            experience_k: 5,
            knowledge_k: 3,
            consult_log_window: 6,
            agent_call: CallSettings::default(),
            judge_call: CallSettings::default(),
            chunking: ChunkingConfig::default(),
            synonyms: None,
        }
    }
}

/// Reports are looked up by canonical exam name; absent exams get the
/// sentinel. Serving never mutates the record.
pub fn serve_examination(record: &PatientRecord, exam: &str) -> String {
    let wanted = canonical_name(exam);
    record
        .objective
        .exam_reports
        .iter()
        .find(|(name, _)| canonical_name(name) == wanted)
        .map(|(_, report)| report.clone())
        .unwrap_or_else(|| EXAM_UNAVAILABLE.to_string())
}

fn summarize(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let cut: String = text.chars().take(max_chars).collect();
    format!("{cut}…")
}

/// Runs one full episode for the routed physician. Returns the outcome plus
/// the transcript events; all gateway usage is attributed to exactly one
/// event each.
pub fn run_episode(
    record: &PatientRecord,
    physician: &PhysicianAgent,
    roster: &[PhysicianAgent],
    kb: &KnowledgeBase,
    gateway: &Gateway,
    config: &ArenaConfig,
    embed: &Embedder,
) -> Result<(EpisodeOutcome, Vec<ActionEvent>), ArenaError> {
    let mut patient = build_patient(record, embed, &config.chunking);
    let mut ctx = EpisodeContext::new(record).with_departments(&kb.departments);
    let mut events: Vec<ActionEvent> = Vec::new();
    let mut event_seq = 0u32;
    let mut next_seq = || {
        event_seq += 1;
        event_seq
    };

    let mut ordered_exams: BTreeSet<String> = BTreeSet::new();
    let mut diagnosis: Option<String> = None;
    let mut treatment: Option<String> = None;
    let mut terminated_by = Termination::MaxTurns;
    let mut decision_turns = 0u32;

    while decision_turns < config.max_turns {
        decision_turns += 1;
        let (decision, decide_usage) = decide_next_action(
            physician,
            &ctx,
            gateway,
            &config.agent_call,
            config.experience_k,
            embed,
        )?;
        let action = match decision {
            Decision::Act(action) => action,
            Decision::ParseFailure { attempts, last_error } => {
                events.push(ActionEvent {
                    turn: next_seq(),
                    actor: physician.id.clone(),
                    body: EventBody::ParseFailure {
                        attempts,
                        detail: last_error,
                    },
                    observation: "episode terminated: action grammar never satisfied".to_string(),
                    usage: decide_usage,
                });
                terminated_by = Termination::ParseFailure;
                diagnosis = Some(String::new());
                treatment = Some(String::new());
                break;
            }
        };

        let action_turn = next_seq();
        let mut aux_events: Vec<ActionEvent> = Vec::new();
        let observation = match &action {
            Action::Perceive => {
                let persona = &record.persona;
                format!(
                    "{}-year-old {} {}; traits: {}; communication style: {}. States: {}",
                    persona.age,
                    persona.sex,
                    persona.occupation,
                    persona.traits.join(", "),
                    persona.communication_style,
                    record.subjective.chief_complaint
                )
            }
            Action::Inquire { question } => {
                let (utterance, usage) = patient.respond(
                    question,
                    gateway,
                    embed,
                    config.patient_k,
                    &config.agent_call,
                )?;
                aux_events.push(ActionEvent {
                    turn: next_seq(),
                    actor: format!("patient:{}", record.id),
                    body: EventBody::PatientUtterance {
                        utterance: utterance.clone(),
                    },
                    observation: String::new(),
                    usage,
                });
                format!("Patient: {utterance}")
            }
            Action::OrderExam { exams } => {
                let mut lines = Vec::new();
                for exam in exams {
                    let report = serve_examination(record, exam);
                    ordered_exams.insert(canonical_name(exam));
                    aux_events.push(ActionEvent {
                        turn: next_seq(),
                        actor: "exam-desk".to_string(),
                        body: EventBody::ExamServed { exam: exam.clone() },
                        observation: report.clone(),
                        usage: TokenUsage::default(),
                    });
                    lines.push(format!("{exam}: {report}"));
                }
                lines.join("\n")
            }
            Action::Consult {
                target_department,
                question,
            } => {
                if *target_department == physician.department {
                    "consultation declined: cannot consult one's own department".to_string()
                } else {
                    match pick_consultant(roster, target_department, &physician.id) {
                        None => format!(
                            "consultation unavailable: no physician in department {target_department}"
                        ),
                        Some(consultant) => {
                            let recent = ctx
                                .log
                                .iter()
                                .rev()
                                .take(config.consult_log_window)
                                .rev()
                                .cloned()
                                .collect::<Vec<_>>()
                                .join("\n");
                            let case_summary = format!("{}\n{}", ctx.case_brief, recent);
                            let (reply, usage) = consult_reply(
                                consultant,
                                &physician.department,
                                question,
                                &case_summary,
                                &record.id,
                                gateway,
                                &config.agent_call,
                                config.experience_k,
                                embed,
                            )
                            .map_err(|e| match e {
                                crate::physician::ops::ConsultError::Gateway(g) => {
                                    ArenaError::Gateway(g)
                                }
                                other => ArenaError::Gateway(
                                    crate::gateway::GatewayError::InvalidRequest(other.to_string()),
                                ),
                            })?;
                            aux_events.push(ActionEvent {
                                turn: next_seq(),
                                actor: consultant.id.clone(),
                                body: EventBody::ConsultReply {
                                    reply: reply.clone(),
                                },
                                observation: String::new(),
                                usage,
                            });
                            format!("{}: {reply}", consultant.id)
                        }
                    }
                }
            }
            Action::RetrieveKnowledge { query } => {
                let hits =
                    crate::physician::retrieve_knowledge(kb, query, config.knowledge_k, embed);
                if hits.is_empty() {
                    "(no reference entries found)".to_string()
                } else {
                    hits.join("\n")
                }
            }
            Action::Diagnose { diagnosis: d } => {
                diagnosis = Some(d.clone());
                "diagnosis recorded".to_string()
            }
            Action::Treat { plan } => {
                treatment = Some(plan.clone());
                "treatment plan recorded".to_string()
            }
        };

        ctx.push_turn(
            decision_turns,
            format!("{} -> {}", action.verb(), summarize(&observation, 500)),
        );
        events.push(ActionEvent {
            turn: action_turn,
            actor: physician.id.clone(),
            body: EventBody::Action { action },
            observation,
            usage: decide_usage,
        });
        events.extend(aux_events);
        events.sort_by_key(|e| e.turn);

        if diagnosis.is_some() && treatment.is_some() {
            terminated_by = Termination::Completed;
            break;
        }
    }

    let outcome = EpisodeOutcome {
        case_id: record.id.clone(),
        ordered_exams,
        final_diagnosis: diagnosis.unwrap_or_default(),
        treatment_plan: treatment.unwrap_or_default(),
        n_turns: decision_turns,
        terminated_by: if terminated_by == Termination::ParseFailure {
            Termination::ParseFailure
        } else if terminated_by == Termination::Completed {
            Termination::Completed
        } else {
            Termination::MaxTurns
        },
    };
    Ok((outcome, events))
}
