//! The line-tagged action grammar. Plain tagged lines are robust across
//! backends and diff cleanly in transcripts; the exact grammar is documented
//! in `docs/action-grammar.md`.
//!
//! ```text
//! ACTION: <PERCEIVE|INQUIRE|ORDER_EXAM|CONSULT|RETRIEVE_KNOWLEDGE|DIAGNOSE|TREAT>
//! TARGET: <department>    (CONSULT only)
//! CONTENT: <text>         (required unless PERCEIVE; ORDER_EXAM separates exams with ";")
//! ```
//!
//! Parsing scans for the tagged lines and ignores any surrounding chatter;
//! a reply without an `ACTION:` line is rejected outright.

use thiserror::Error;

use crate::domain::DepartmentId;

use super::Action;

#[derive(Debug, Error, PartialEq)]
pub enum ActionParseError {
    #[error("reply has no ACTION line")]
    MissingActionTag,
    #[error("unknown action verb {0:?}")]
    UnknownVerb(String),
    #[error("{0} requires a CONTENT line")]
    MissingContent(&'static str),
    #[error("CONSULT requires a TARGET line naming a department")]
    MissingTarget,
    #[error("{0} has an empty payload")]
    EmptyPayload(&'static str),
}

fn tagged_line<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    for line in text.lines() {
        let trimmed = line.trim();
        // The tag is ASCII, so a byte-level prefix check is char-safe.
        if trimmed.len() >= tag.len()
            && trimmed.as_bytes()[..tag.len()].eq_ignore_ascii_case(tag.as_bytes())
        {
            return Some(trimmed[tag.len()..].trim());
        }
    }
    None
}

/// Canonical form used to deduplicate exam names: case-folded with internal
/// whitespace collapsed.
pub fn canonical_exam_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Parses one backend reply into exactly one action.
pub fn parse_action(text: &str) -> Result<Action, ActionParseError> {
    let verb = tagged_line(text, "ACTION:").ok_or(ActionParseError::MissingActionTag)?;
    let content = tagged_line(text, "CONTENT:");
    let target = tagged_line(text, "TARGET:");

    let require_content = |name: &'static str| -> Result<String, ActionParseError> {
        let c = content.ok_or(ActionParseError::MissingContent(name))?;
        if c.is_empty() {
            return Err(ActionParseError::EmptyPayload(name));
        }
        Ok(c.to_string())
    };

    match verb.to_uppercase().as_str() {
        "PERCEIVE" => Ok(Action::Perceive),
        "INQUIRE" => Ok(Action::Inquire {
            question: require_content("INQUIRE")?,
        }),
        "ORDER_EXAM" => {
            let raw = require_content("ORDER_EXAM")?;
            let mut exams = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for part in raw.split(';') {
                let name = part.trim();
                if name.is_empty() {
                    continue;
                }
                // Duplicates collapse to the first spelling.
                if seen.insert(canonical_exam_name(name)) {
                    exams.push(name.to_string());
                }
            }
            if exams.is_empty() {
                return Err(ActionParseError::EmptyPayload("ORDER_EXAM"));
            }
            Ok(Action::OrderExam { exams })
        }
        "CONSULT" => {
            let target = target.ok_or(ActionParseError::MissingTarget)?;
            if target.is_empty() {
                return Err(ActionParseError::MissingTarget);
            }
            Ok(Action::Consult {
                target_department: DepartmentId::new(target),
                question: require_content("CONSULT")?,
            })
        }
        "RETRIEVE_KNOWLEDGE" => Ok(Action::RetrieveKnowledge {
            query: require_content("RETRIEVE_KNOWLEDGE")?,
        }),
        "DIAGNOSE" => Ok(Action::Diagnose {
            diagnosis: require_content("DIAGNOSE")?,
        }),
        "TREAT" => Ok(Action::Treat {
            plan: require_content("TREAT")?,
        }),
        other => Err(ActionParseError::UnknownVerb(other.to_string())),
    }
}

/// Renders an action back into canonical grammar text.
pub fn render_action(action: &Action) -> String {
    match action {
        Action::Perceive => "ACTION: PERCEIVE".to_string(),
        Action::Inquire { question } => {
            format!("ACTION: INQUIRE\nCONTENT: {question}")
        }
        Action::OrderExam { exams } => {
            format!("ACTION: ORDER_EXAM\nCONTENT: {}", exams.join("; "))
        }
        Action::Consult {
            target_department,
            question,
        } => format!("ACTION: CONSULT\nTARGET: {target_department}\nCONTENT: {question}"),
        Action::RetrieveKnowledge { query } => {
            format!("ACTION: RETRIEVE_KNOWLEDGE\nCONTENT: {query}")
        }
        Action::Diagnose { diagnosis } => {
            format!("ACTION: DIAGNOSE\nCONTENT: {diagnosis}")
        }
        Action::Treat { plan } => format!("ACTION: TREAT\nCONTENT: {plan}"),
    }
}
