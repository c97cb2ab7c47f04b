//! Canonical clinical data model: diseases, patients, datasets, and the
//! split/batching machinery that drives batch-by-batch evolution runs.

pub mod dataset;
pub mod kb;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use dataset::{Batch, CaseDataset, DatasetError};
pub use kb::{ComorbidityPair, DiseaseEntry, KbError, KnowledgeBase};

/// Schema tag carried by every record line on disk.
pub const RECORD_SCHEMA: &str = "patient-record/v1";

/// Identifier of a single synthetic case.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseId(pub String);

impl CaseId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifier of a clinical department. The vocabulary is configured by the
/// knowledge base, not hard-coded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DepartmentId(pub String);

impl DepartmentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DepartmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
    Other,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sex::Female => f.write_str("female"),
            Sex::Male => f.write_str("male"),
            Sex::Other => f.write_str("other"),
        }
    }
}

/// Demographic and psychosocial attributes injected into the patient prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub age: u32,
    pub sex: Sex,
    pub occupation: String,
    pub traits: Vec<String>,
    pub communication_style: String,
}

/// One reported symptom with its onset as free text ("three days ago").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomReport {
    pub description: String,
    pub onset: String,
}

/// Everything the patient agent is allowed to know about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveOntology {
    pub chief_complaint: String,
    pub symptoms: Vec<SymptomReport>,
    pub history: Vec<String>,
}

/// Hidden ground truth: exam reports plus the gold diagnosis, exam set, and
/// treatment. Never exposed to the patient agent and only revealed to the
/// physician through explicit examination orders or post-episode reflection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveFindings {
    pub exam_reports: BTreeMap<String, String>,
    pub gold_diagnosis: String,
    pub gold_exams: BTreeSet<String>,
    pub gold_treatment: String,
}

/// A complete synthetic case: persona, subjective ontology, and hidden
/// objective findings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: CaseId,
    pub department: DepartmentId,
    pub persona: PersonaProfile,
    pub subjective: SubjectiveOntology,
    pub objective: ObjectiveFindings,
}

/// A single invariant violation found by [`validate_record`]. Violations are
/// data, not failures: an invalid record is still representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks the structural invariants of a single record. Returns an empty list
/// iff the record is valid; each violation names the offending field and the
/// violated rule. Semantic plausibility is judged elsewhere.
pub fn validate_record(record: &PatientRecord) -> Vec<Violation> {
    let mut violations = Vec::new();

    if record.id.as_str().trim().is_empty() {
        violations.push(Violation::new("id", "must be nonempty"));
    }
    if record.department.as_str().trim().is_empty() {
        violations.push(Violation::new("department", "must be nonempty"));
    }
    if record.persona.age == 0 || record.persona.age >= 120 {
        violations.push(Violation::new(
            "persona.age",
            format!(
                "must be strictly between 0 and 120, got {}",
                record.persona.age
            ),
        ));
    }
    if record.persona.traits.is_empty() {
        violations.push(Violation::new("persona.traits", "must be nonempty"));
    }
    if record.subjective.chief_complaint.trim().is_empty() {
        violations.push(Violation::new(
            "subjective.chief_complaint",
            "must be nonempty",
        ));
    }
    if record.objective.gold_diagnosis.trim().is_empty() {
        violations.push(Violation::new(
            "objective.gold_diagnosis",
            "must be nonempty",
        ));
    }
    for exam in &record.objective.gold_exams {
        if !record.objective.exam_reports.contains_key(exam) {
            violations.push(Violation::new(
                "objective.gold_exams",
                format!("gold exam {exam:?} has no entry in exam_reports"),
            ));
        }
    }

    violations
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// A minimal valid record for unit tests.
    pub fn sample_record(id: &str) -> PatientRecord {
        let mut exam_reports = BTreeMap::new();
        exam_reports.insert(
            "throat culture".to_string(),
            "Culture positive for group A streptococcus colonies.".to_string(),
        );
        exam_reports.insert(
            "EBV antibody panel".to_string(),
            "EBV VCA IgM negative, IgG positive; past exposure pattern.".to_string(),
        );
        let mut gold_exams = BTreeSet::new();
        gold_exams.insert("throat culture".to_string());

        PatientRecord {
            id: CaseId::new(id),
            department: DepartmentId::new("Infectious Diseases"),
            persona: PersonaProfile {
                age: 34,
                sex: Sex::Female,
                occupation: "teacher".to_string(),
                traits: vec!["anxious".to_string(), "detail-oriented".to_string()],
                communication_style: "talkative, asks many questions".to_string(),
            },
            subjective: SubjectiveOntology {
                chief_complaint: "sore throat and fever for three days".to_string(),
                symptoms: vec![
                    SymptomReport {
                        description: "painful swallowing".to_string(),
                        onset: "three days ago".to_string(),
                    },
                    SymptomReport {
                        description: "fever up to 38.5C in the evenings".to_string(),
                        onset: "two days ago".to_string(),
                    },
                ],
                history: vec!["no known drug allergies".to_string()],
            },
            objective: ObjectiveFindings {
                exam_reports,
                gold_diagnosis: "streptococcal pharyngitis".to_string(),
                gold_exams,
                gold_treatment: "oral penicillin V for ten days with supportive care".to_string(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::sample_record;
    use super::*;

    #[test]
    fn valid_record_has_no_violations() {
        assert!(validate_record(&sample_record("C-1")).is_empty());
    }

    #[test]
    fn gold_exam_without_report_is_flagged() {
        let mut record = sample_record("C-1");
        record.objective.gold_exams.insert("MRI".to_string());
        let violations = validate_record(&record);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field, "objective.gold_exams");
        assert!(violations[0].rule.contains("MRI"));
    }

    #[test]
    fn out_of_range_age_is_flagged() {
        let mut record = sample_record("C-1");
        record.persona.age = 150;
        let violations = validate_record(&record);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].field, "persona.age");
    }

    #[test]
    fn multiple_violations_are_all_reported() {
        let mut record = sample_record("C-1");
        record.persona.age = 0;
        record.subjective.chief_complaint = "  ".to_string();
        record.objective.gold_diagnosis = String::new();
        let violations = validate_record(&record);
        let fields: Vec<&str> = violations.iter().map(|v| v.field.as_str()).collect();
        assert!(fields.contains(&"persona.age"));
        assert!(fields.contains(&"subjective.chief_complaint"));
        assert!(fields.contains(&"objective.gold_diagnosis"));
    }
}
