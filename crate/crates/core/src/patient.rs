//! Patient agent under a strict epistemic boundary: it is constructed from
//! the subjective view only, so exam reports, the gold diagnosis, and the
//! gold treatment can never reach its memory, its prompts, or its utterances.
//! Disclosure pacing is additionally instructed in the prompt, but the
//! boundary itself is structural: the model cannot leak what it never sees.

use serde::{Deserialize, Serialize};

use crate::domain::{CaseId, PatientRecord, PersonaProfile, SymptomReport};
use crate::embedding::{rank_by_cosine, Embedder};
use crate::gateway::{
    CallSettings, ChatMessage, ChatRequest, Gateway, GatewayError, Purpose, RequestTags,
    TokenUsage,
};
use crate::prompts;

/// The only slice of a record a patient agent may hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveView {
    pub persona: PersonaProfile,
    pub chief_complaint: String,
    pub symptoms: Vec<SymptomReport>,
    pub history: Vec<String>,
}

impl SubjectiveView {
    /// Copies the subjective fields; the objective findings are not readable
    /// through this type at all.
    pub fn from_record(record: &PatientRecord) -> Self {
        Self {
            persona: record.persona.clone(),
            chief_complaint: record.subjective.chief_complaint.clone(),
            symptoms: record.subjective.symptoms.clone(),
            history: record.subjective.history.clone(),
        }
    }
}

/// One embedded span of subjective text in the agent's semantic memory.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryChunk {
    pub text: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueTurn {
    pub inquiry: String,
    pub utterance: String,
}

/// Chunking granularity for building the memory. Record fields are already
/// sentence-scaled, so the default is one chunk per field; oversized chunks
/// are split at whitespace.
#[derive(Debug, Clone)]
pub struct ChunkingConfig {
    pub max_chunk_chars: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            max_chunk_chars: 480,
        }
    }
}

pub struct PatientAgent {
    pub case_id: CaseId,
    pub subjective: SubjectiveView,
    pub memory: Vec<MemoryChunk>,
    pub dialogue_history: Vec<DialogueTurn>,
}

/// Builds a patient agent whose memory holds the embedded chunks of the
/// subjective text only: the chief complaint, each symptom, and each history
/// item.
pub fn build_patient(
    record: &PatientRecord,
    embed: &Embedder,
    chunking: &ChunkingConfig,
) -> PatientAgent {
    let subjective = SubjectiveView::from_record(record);
    let mut texts = Vec::new();
    texts.push(format!("Chief complaint: {}", subjective.chief_complaint));
    for symptom in &subjective.symptoms {
        texts.push(format!(
            "Symptom: {} (onset: {})",
            symptom.description, symptom.onset
        ));
    }
    for item in &subjective.history {
        texts.push(format!("History: {item}"));
    }

    let mut memory = Vec::new();
    for text in texts {
        for piece in split_to_size(&text, chunking.max_chunk_chars) {
            let vector = embed(&piece);
            memory.push(MemoryChunk { text: piece, vector });
        }
    }

    PatientAgent {
        case_id: record.id.clone(),
        subjective,
        memory,
        dialogue_history: Vec::new(),
    }
}

fn split_to_size(text: &str, max_chars: usize) -> Vec<String> {
    if text.chars().count() <= max_chars {
        return vec![text.to_string()];
    }
    let mut pieces = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        if !current.is_empty() && current.chars().count() + word.chars().count() + 1 > max_chars {
            pieces.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces
}

/// Top-k memory chunks by descending cosine similarity to the query vector;
/// ties keep insertion order. Returns `min(k, |memory|)` chunks.
pub fn retrieve<'a>(memory: &'a [MemoryChunk], query: &[f64], k: usize) -> Vec<&'a MemoryChunk> {
    let vectors: Vec<Vec<f64>> = memory.iter().map(|c| c.vector.clone()).collect();
    rank_by_cosine(query, &vectors, k)
        .into_iter()
        .map(|i| &memory[i])
        .collect()
}

impl PatientAgent {
    /// Assembles the outgoing prompt for an inquiry: persona, retrieved
    /// memory, dialogue so far, and the disclosure instruction. Public so the
    /// boundary invariant can be checked directly on prompts.
    pub fn build_prompt(&self, inquiry: &str, retrieved: &[&MemoryChunk]) -> Vec<ChatMessage> {
        let persona = &self.subjective.persona;
        let system = prompts::render(
            prompts::PATIENT_SYSTEM,
            &[
                ("age", &persona.age.to_string()),
                ("sex", &persona.sex.to_string()),
                ("occupation", &persona.occupation),
                ("traits", &persona.traits.join(", ")),
                ("communication_style", &persona.communication_style),
            ],
        );
        let memory_text = if retrieved.is_empty() {
            "(nothing relevant)".to_string()
        } else {
            retrieved
                .iter()
                .map(|c| format!("- {}", c.text))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let dialogue = if self.dialogue_history.is_empty() {
            "(none yet)".to_string()
        } else {
            self.dialogue_history
                .iter()
                .map(|t| format!("Physician: {}\nYou: {}", t.inquiry, t.utterance))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let user = prompts::render(
            prompts::PATIENT_USER,
            &[
                ("memory", &memory_text),
                ("dialogue", &dialogue),
                ("inquiry", inquiry),
            ],
        );
        vec![ChatMessage::system(system), ChatMessage::user(user)]
    }

    /// Answers one inquiry: retrieves the top-k memory chunks, sends the
    /// assembled prompt, and appends the exchange to the dialogue history.
    /// On gateway errors the agent state is unchanged.
    pub fn respond(
        &mut self,
        inquiry: &str,
        gateway: &Gateway,
        embed: &Embedder,
        k: usize,
        call: &CallSettings,
    ) -> Result<(String, TokenUsage), GatewayError> {
        if inquiry.trim().is_empty() {
            return Err(GatewayError::InvalidRequest(
                "inquiry must be nonempty".to_string(),
            ));
        }
        let query = embed(inquiry);
        let retrieved = retrieve(&self.memory, &query, k);
        let messages = self.build_prompt(inquiry, &retrieved);
        let request = ChatRequest {
            model: call.model.clone(),
            messages,
            temperature: call.temperature,
            max_tokens: call.max_tokens,
            tags: RequestTags::new(
                Purpose::Patient,
                format!("patient:{}", self.case_id),
                self.case_id.to_string(),
            ),
        };
        let response = gateway.complete(&request)?;
        self.dialogue_history.push(DialogueTurn {
            inquiry: inquiry.to_string(),
            utterance: response.content.clone(),
        });
        Ok((response.content, response.usage))
    }
}

/// True when any contiguous substring of `secret` with length at least
/// `min_len` occurs in `text`. This is the leak test used by the epistemic
/// boundary checks.
pub fn contains_substring_of(text: &str, secret: &str, min_len: usize) -> bool {
    let secret_chars: Vec<char> = secret.chars().collect();
    if secret_chars.len() < min_len {
        return false;
    }
    for window in secret_chars.windows(min_len) {
        let needle: String = window.iter().collect();
        if text.contains(&needle) {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::testutil::sample_record;
    use crate::embedding::default_embedder;
    use crate::gateway::{Script, ScriptStep, ScriptedProvider, UsageLedger};
    use std::sync::Arc;

    fn agent() -> PatientAgent {
        build_patient(
            &sample_record("C-1"),
            &default_embedder(),
            &ChunkingConfig::default(),
        )
    }

    #[test]
    fn memory_counts_chief_complaint_symptoms_and_history() {
        let a = agent();
        // 1 complaint + 2 symptoms + 1 history item
        assert_eq!(a.memory.len(), 4);
        assert!(a.dialogue_history.is_empty());
    }

    #[test]
    fn empty_history_leaves_complaint_and_symptom_chunks() {
        let mut record = sample_record("C-1");
        record.subjective.history.clear();
        let a = build_patient(&record, &default_embedder(), &ChunkingConfig::default());
        assert_eq!(a.memory.len(), 3);
        assert!(a.memory.iter().any(|c| c.text.contains("Chief complaint")));
        assert!(a.memory.iter().all(|c| !c.text.contains("History:")));
    }

    #[test]
    fn memory_vectors_have_unit_norm() {
        let a = agent();
        for chunk in &a.memory {
            let norm: f64 = chunk.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "chunk {:?} norm {norm}", chunk.text);
        }
    }

    #[test]
    fn memory_never_contains_objective_text() {
        let record = sample_record("C-1");
        let a = build_patient(&record, &default_embedder(), &ChunkingConfig::default());
        for chunk in &a.memory {
            assert!(!contains_substring_of(
                &chunk.text,
                &record.objective.gold_diagnosis,
                8
            ));
            assert!(!contains_substring_of(
                &chunk.text,
                &record.objective.gold_treatment,
                8
            ));
            for report in record.objective.exam_reports.values() {
                assert!(!contains_substring_of(&chunk.text, report, 8));
            }
        }
    }

    #[test]
    fn query_equal_to_chunk_text_ranks_it_first() {
        let a = agent();
        let embed = default_embedder();
        let target = &a.memory[2];
        let query = embed(&target.text);
        let retrieved = retrieve(&a.memory, &query, 1);
        assert_eq!(retrieved[0].text, target.text);
    }

    #[test]
    fn k_larger_than_memory_returns_whole_memory() {
        let a = agent();
        let embed = default_embedder();
        let retrieved = retrieve(&a.memory, &embed("fever"), 50);
        assert_eq!(retrieved.len(), a.memory.len());
    }

    #[test]
    fn retrieval_matches_full_sort_oracle() {
        let a = agent();
        let embed = default_embedder();
        let query = embed("how high is the fever");
        let retrieved: Vec<String> = retrieve(&a.memory, &query, 2)
            .iter()
            .map(|c| c.text.clone())
            .collect();

        let mut oracle: Vec<(f64, usize)> = a
            .memory
            .iter()
            .enumerate()
            .map(|(i, c)| (crate::embedding::cosine(&query, &c.vector), i))
            .collect();
        oracle.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        let expected: Vec<String> = oracle
            .iter()
            .take(2)
            .map(|&(_, i)| a.memory[i].text.clone())
            .collect();
        assert_eq!(retrieved, expected);
    }

    #[test]
    fn respond_appends_history_and_returns_scripted_reply() {
        let mut a = agent();
        let ledger = Arc::new(UsageLedger::new());
        let gateway = Gateway::new(
            Arc::new(ScriptedProvider::new(Script::new(vec![ScriptStep::new(
                Purpose::Patient,
                "It started three days ago, doctor.",
                TokenUsage::new(120, 15),
            )]))),
            ledger.clone(),
        );
        let embed = default_embedder();
        let (utterance, usage) = a
            .respond(
                "When did the sore throat start?",
                &gateway,
                &embed,
                4,
                &CallSettings::default(),
            )
            .unwrap();
        assert_eq!(utterance, "It started three days ago, doctor.");
        assert_eq!(usage.prompt_tokens, 120);
        assert_eq!(a.dialogue_history.len(), 1);
        assert_eq!(ledger.len(), 1);
    }

    #[test]
    fn respond_leaves_state_unchanged_on_error() {
        let mut a = agent();
        let gateway = Gateway::new(
            Arc::new(ScriptedProvider::new(Script::new(vec![]))),
            Arc::new(UsageLedger::new()),
        );
        let embed = default_embedder();
        let err = a.respond("anything?", &gateway, &embed, 4, &CallSettings::default());
        assert!(err.is_err());
        assert!(a.dialogue_history.is_empty());
    }

    #[test]
    fn prompt_never_contains_gold_diagnosis() {
        let record = sample_record("C-1");
        let a = build_patient(&record, &default_embedder(), &ChunkingConfig::default());
        let embed = default_embedder();
        let query = embed("what is wrong with you");
        let retrieved = retrieve(&a.memory, &query, 4);
        let prompt = a
            .build_prompt("what is wrong with you", &retrieved)
            .iter()
            .map(|m| m.content.clone())
            .collect::<Vec<_>>()
            .join("\n");
        assert!(!contains_substring_of(
            &prompt,
            &record.objective.gold_diagnosis,
            8
        ));
        assert!(!contains_substring_of(
            &prompt,
            &record.objective.gold_treatment,
            8
        ));
    }

    #[test]
    fn oversized_chunks_are_split() {
        let mut record = sample_record("C-1");
        record.subjective.history = vec!["word ".repeat(200).trim().to_string()];
        let a = build_patient(
            &record,
            &default_embedder(),
            &ChunkingConfig {
                max_chunk_chars: 100,
            },
        );
        assert!(a.memory.len() > 4);
        for chunk in &a.memory {
            assert!(chunk.text.chars().count() <= 100);
        }
    }
}
