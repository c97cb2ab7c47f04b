//! Disease knowledge base: the curated disease entries, comorbidity pairs,
//! and the configurable department vocabulary.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::DepartmentId;

pub const KB_SCHEMA: &str = "knowledge-base/v1";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed knowledge base: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported knowledge-base schema {found:?}, expected {KB_SCHEMA:?}")]
    Schema { found: String },
    #[error("knowledge base invalid: {0}")]
    Invalid(String),
}

/// One disease with the expectations used for synthesis and knowledge
/// retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseEntry {
    pub name: String,
    pub department: DepartmentId,
    pub typical_symptoms: Vec<String>,
    pub standard_exams: Vec<String>,
    pub guideline_treatment: String,
    pub prevalence_weight: f64,
}

/// A curated unordered pair of co-occurring diseases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComorbidityPair {
    pub disease_a: String,
    pub disease_b: String,
    pub interaction_note: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub departments: Vec<DepartmentId>,
    pub diseases: Vec<DiseaseEntry>,
    pub comorbidities: Vec<ComorbidityPair>,
}

#[derive(Serialize, Deserialize)]
struct KbFile {
    schema: String,
    #[serde(flatten)]
    kb: KnowledgeBase,
}

impl KnowledgeBase {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let parsed: KbFile = serde_json::from_str(&text)?;
        if parsed.schema != KB_SCHEMA {
            return Err(KbError::Schema {
                found: parsed.schema,
            });
        }
        parsed.kb.validate()?;
        Ok(parsed.kb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KbError> {
        let path = path.as_ref();
        let file = KbFile {
            schema: KB_SCHEMA.to_string(),
            kb: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        fs::write(path, text).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Referential integrity: unique nonempty disease names, departments from
    /// the configured vocabulary, nonnegative weights, and comorbidity pairs
    /// over distinct known diseases with no unordered duplicates.
    pub fn validate(&self) -> Result<(), KbError> {
        let departments: HashSet<&DepartmentId> = self.departments.iter().collect();
        let mut names = HashSet::new();
        for disease in &self.diseases {
            if disease.name.trim().is_empty() {
                return Err(KbError::Invalid("disease with empty name".to_string()));
            }
            if !names.insert(disease.name.as_str()) {
                return Err(KbError::Invalid(format!(
                    "duplicate disease name {:?}",
                    disease.name
                )));
            }
            if !departments.contains(&disease.department) {
                return Err(KbError::Invalid(format!(
                    "disease {:?} references unknown department {:?}",
                    disease.name, disease.department
                )));
            }
            if disease.prevalence_weight.is_nan() || disease.prevalence_weight < 0.0 {
                return Err(KbError::Invalid(format!(
                    "disease {:?} has negative or non-finite prevalence weight",
                    disease.name
                )));
            }
        }
        let mut pairs = HashSet::new();
        for pair in &self.comorbidities {
            if pair.disease_a == pair.disease_b {
                return Err(KbError::Invalid(format!(
                    "comorbidity pairs a disease with itself: {:?}",
                    pair.disease_a
                )));
            }
            for name in [&pair.disease_a, &pair.disease_b] {
                if !names.contains(name.as_str()) {
                    return Err(KbError::Invalid(format!(
                        "comorbidity references unknown disease {name:?}"
                    )));
                }
            }
            let key = if pair.disease_a <= pair.disease_b {
                (pair.disease_a.clone(), pair.disease_b.clone())
            } else {
                (pair.disease_b.clone(), pair.disease_a.clone())
            };
            if !pairs.insert(key) {
                return Err(KbError::Invalid(format!(
                    "duplicate comorbidity pair {:?} / {:?}",
                    pair.disease_a, pair.disease_b
                )));
            }
        }
        Ok(())
    }

    pub fn disease(&self, name: &str) -> Option<&DiseaseEntry> {
        self.diseases.iter().find(|d| d.name == name)
    }

    /// Comorbidity partners of the given disease, in declaration order.
    pub fn partners_of(&self, name: &str) -> Vec<&str> {
        self.comorbidities
            .iter()
            .filter_map(|p| {
                if p.disease_a == name {
                    Some(p.disease_b.as_str())
                } else if p.disease_b == name {
                    Some(p.disease_a.as_str())
                } else {
                    None
                }
            })
            .collect()
    }
}
