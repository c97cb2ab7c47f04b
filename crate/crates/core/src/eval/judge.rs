//! LLM-as-judge rubric scoring with a fixed machine-parseable answer schema.
//! Every judge exchange is ledgered under `purpose=judge`; unparseable
//! replies get a bounded re-ask and then surface as a parse error so the case
//! can be flagged and excluded from means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    CallSettings, ChatMessage, ChatRequest, Gateway, GatewayError, Purpose, RequestTags,
    TokenUsage,
};
use crate::prompts;

use super::metrics::alignment_from_scores;

/// Re-asks allowed before a judge reply is declared unparseable.
pub const MAX_JUDGE_RETRIES: u32 = 2;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge reply unparseable after {attempts} attempt(s): {detail}")]
    Parse { attempts: u32, detail: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// The three shipped rubrics and their answer dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rubric {
    /// Internal consistency of a synthesized record (single dimension).
    MedicalConsistency,
    /// Dynamic patient-response quality: accuracy, relevance, persona
    /// alignment.
    ResponseQuality,
    /// Treatment plans: safety, effectiveness, personalization.
    Treatment,
}

impl Rubric {
    pub fn dimensions(&self) -> &'static [&'static str] {
        match self {
            Rubric::MedicalConsistency => &["CONSISTENCY"],
            Rubric::ResponseQuality => &["ACCURACY", "RELEVANCE", "PERSONA_ALIGNMENT"],
            Rubric::Treatment => &["SAFETY", "EFFECTIVENESS", "PERSONALIZATION"],
        }
    }

    fn template(&self) -> &'static str {
        match self {
            Rubric::MedicalConsistency => prompts::JUDGE_CONSISTENCY,
            Rubric::ResponseQuality => prompts::JUDGE_RESPONSE_QUALITY,
            Rubric::Treatment => prompts::JUDGE_TREATMENT,
        }
    }
}

/// Parsed rubric scores: each dimension an integer 1–5, plus the rationale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRubricResult {
    pub scores: BTreeMap<String, u8>,
    pub rationale: String,
    pub usage: TokenUsage,
}

fn parse_rubric_reply(text: &str, dimensions: &[&str]) -> Result<(BTreeMap<String, u8>, String), String> {
    let mut scores = BTreeMap::new();
    let mut rationale = String::new();
    for line in text.lines() {
        let trimmed = line.trim();
        let Some((key, value)) = trimmed.split_once(':') else {
            continue;
        };
        let key = key.trim().to_uppercase();
        let value = value.trim();
        if key == "RATIONALE" {
            rationale = value.to_string();
            continue;
        }
        if dimensions.contains(&key.as_str()) {
            match value.parse::<u8>() {
                Ok(score @ 1..=5) => {
                    scores.insert(key, score);
                }
                Ok(out_of_range) => {
                    return Err(format!("{key} score {out_of_range} outside 1-5"));
                }
                Err(_) => return Err(format!("{key} score {value:?} is not an integer")),
            }
        }
    }
    for dimension in dimensions {
        if !scores.contains_key(*dimension) {
            return Err(format!("missing dimension {dimension}"));
        }
    }
    Ok((scores, rationale))
}

/// Scores `subject` under the named rubric. The judge prompt embeds the
/// subject and supporting context; the reply must contain one
/// `<DIMENSION>: <1-5>` line per dimension.
pub fn judge_rubric(
    subject: &str,
    context: &str,
    rubric: Rubric,
    gateway: &Gateway,
    call: &CallSettings,
    case_id: &str,
) -> Result<JudgeRubricResult, JudgeError> {
    let vars: Vec<(&str, &str)> = match rubric {
        Rubric::Treatment => vec![("plan", subject), ("gold_plan", context)],
        _ => vec![("subject", subject), ("context", context)],
    };
    let mut messages = vec![ChatMessage::user(prompts::render(rubric.template(), &vars))];
    let mut usage = TokenUsage::default();
    let mut last_detail = String::new();

    for attempt in 1..=(MAX_JUDGE_RETRIES + 1) {
        let request = ChatRequest {
            model: call.model.clone(),
            messages: messages.clone(),
            temperature: call.temperature,
            max_tokens: call.max_tokens,
            tags: RequestTags::new(Purpose::Judge, "judge", case_id),
        };
        let response = gateway.complete(&request)?;
        usage += response.usage;
        match parse_rubric_reply(&response.content, rubric.dimensions()) {
            Ok((scores, rationale)) => {
                return Ok(JudgeRubricResult {
                    scores,
                    rationale,
                    usage,
                })
            }
            Err(detail) => {
                messages.push(ChatMessage::assistant(response.content));
                messages.push(ChatMessage::user(format!(
                    "Your reply could not be parsed ({detail}). Answer again with one \
                     `<DIMENSION>: <integer 1-5>` line for each of: {} — then a RATIONALE line.",
                    rubric.dimensions().join(", ")
                )));
                last_detail = detail;
                let _ = attempt;
            }
        }
    }
    Err(JudgeError::Parse {
        attempts: MAX_JUDGE_RETRIES + 1,
        detail: last_detail,
    })
}

/// Judge-scored agreement of a plan with the gold plan, mapped onto [0,1]
/// via the 1→0, 5→1 linear scale and averaged over the three dimensions.
/// The raw rubric result is returned alongside the scalar.
pub fn treatment_alignment(
    plan: &str,
    gold_plan: &str,
    gateway: &Gateway,
    call: &CallSettings,
    case_id: &str,
) -> Result<(f64, JudgeRubricResult), JudgeError> {
    let result = judge_rubric(plan, gold_plan, Rubric::Treatment, gateway, call, case_id)?;
    let scores = [
        result.scores["SAFETY"],
        result.scores["EFFECTIVENESS"],
        result.scores["PERSONALIZATION"],
    ];
    Ok((alignment_from_scores(scores), result))
}
