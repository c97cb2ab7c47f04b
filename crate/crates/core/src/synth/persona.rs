//! Persona seed ingestion: flat attribute maps from a public seed file are
//! cleaned against a sensitive-attribute blocklist and shaped into persona
//! profiles. Seeds violating profile invariants are rejected and counted.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde_json::Value;

use crate::domain::{PersonaProfile, Sex};

use super::SynthError;

/// Attribute names never copied into a profile, checked case-insensitively.
pub const SENSITIVE_ATTRIBUTES: &[&str] = &[
    "name",
    "full_name",
    "email",
    "phone",
    "address",
    "id_number",
    "ssn",
    "race",
    "ethnicity",
    "religion",
    "political_views",
    "sexual_orientation",
    "income",
];

/// Ingestion result: the retained profiles plus reject accounting.
#[derive(Debug, Clone)]
pub struct PersonaIngest {
    pub profiles: Vec<PersonaProfile>,
    pub rejected: usize,
    pub dropped_attributes: usize,
}

fn parse_sex(value: Option<&Value>) -> Sex {
    match value.and_then(Value::as_str).map(str::to_lowercase).as_deref() {
        Some("female" | "f") => Sex::Female,
        Some("male" | "m") => Sex::Male,
        _ => Sex::Other,
    }
}

fn profile_from_seed(seed: &Value) -> (Option<PersonaProfile>, usize) {
    let Some(map) = seed.as_object() else {
        return (None, 0);
    };
    let age = map.get("age").and_then(Value::as_u64).unwrap_or(0) as u32;
    let sex = parse_sex(map.get("sex"));
    let occupation = map
        .get("occupation")
        .and_then(Value::as_str)
        .unwrap_or("unstated occupation")
        .to_string();
    let communication_style = map
        .get("communication_style")
        .and_then(Value::as_str)
        .unwrap_or("plain and direct")
        .to_string();

    let mut traits = Vec::new();
    let mut dropped = 0usize;
    for (key, value) in map {
        let lower = key.to_lowercase();
        if SENSITIVE_ATTRIBUTES.contains(&lower.as_str()) {
            dropped += 1;
            continue;
        }
        if ["age", "sex", "occupation", "communication_style"].contains(&lower.as_str()) {
            continue;
        }
        match value {
            Value::String(s) if !s.trim().is_empty() => {
                traits.push(format!("{key}: {}", s.trim()));
            }
            Value::Array(items) => {
                for item in items {
                    if let Some(s) = item.as_str() {
                        if !s.trim().is_empty() {
                            traits.push(s.trim().to_string());
                        }
                    }
                }
            }
            _ => {}
        }
    }

    let profile = PersonaProfile {
        age,
        sex,
        occupation,
        traits,
        communication_style,
    };
    let valid = profile.age > 0 && profile.age < 120 && !profile.traits.is_empty();
    (valid.then_some(profile), dropped)
}

/// Reads a line-delimited seed file: each line one JSON object of attributes.
/// Blocklisted attributes are dropped, invalid seeds rejected and counted,
/// and output order follows the file.
pub fn ingest_persona_seeds(path: impl AsRef<Path>) -> Result<PersonaIngest, SynthError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut profiles = Vec::new();
    let mut rejected = 0usize;
    let mut dropped_attributes = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let seed: Value = serde_json::from_str(&line)?;
        let (profile, dropped) = profile_from_seed(&seed);
        dropped_attributes += dropped;
        match profile {
            Some(p) => profiles.push(p),
            None => rejected += 1,
        }
    }
    Ok(PersonaIngest {
        profiles,
        rejected,
        dropped_attributes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_seeds(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("personas.jsonl");
        let mut f = File::create(&path).unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        (dir, path)
    }

    #[test]
    fn blocked_attribute_never_reaches_the_profile() {
        let (_dir, path) = write_seeds(&[
            r#"{"age": 41, "sex": "female", "occupation": "engineer", "religion": "private", "temperament": "stoic"}"#,
        ]);
        let ingest = ingest_persona_seeds(&path).unwrap();
        assert_eq!(ingest.profiles.len(), 1);
        assert_eq!(ingest.dropped_attributes, 1);
        let rendered = ingest.profiles[0].traits.join(" ");
        assert!(!rendered.to_lowercase().contains("religion"));
        assert!(rendered.contains("stoic"));
    }

    #[test]
    fn out_of_range_age_is_rejected_and_counted() {
        let (_dir, path) = write_seeds(&[
            r#"{"age": 150, "sex": "male", "occupation": "sailor", "temperament": "gruff"}"#,
            r#"{"age": 36, "sex": "male", "occupation": "sailor", "temperament": "gruff"}"#,
        ]);
        let ingest = ingest_persona_seeds(&path).unwrap();
        assert_eq!(ingest.profiles.len(), 1);
        assert_eq!(ingest.rejected, 1);
    }

    #[test]
    fn traitless_seed_is_rejected() {
        let (_dir, path) = write_seeds(&[r#"{"age": 30, "sex": "female", "occupation": "clerk"}"#]);
        let ingest = ingest_persona_seeds(&path).unwrap();
        assert_eq!(ingest.profiles.len(), 0);
        assert_eq!(ingest.rejected, 1);
    }

    #[test]
    fn many_valid_seeds_stay_in_order() {
        let lines: Vec<String> = (0..100)
            .map(|i| {
                format!(
                    r#"{{"age": {}, "sex": "other", "occupation": "worker {i}", "style": "curt"}}"#,
                    20 + (i % 60)
                )
            })
            .collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let (_dir, path) = write_seeds(&refs);
        let ingest = ingest_persona_seeds(&path).unwrap();
        assert_eq!(ingest.profiles.len(), 100);
        assert_eq!(ingest.rejected, 0);
        assert_eq!(ingest.profiles[7].occupation, "worker 7");
    }

    #[test]
    fn trait_arrays_are_flattened() {
        let (_dir, path) = write_seeds(&[
            r#"{"age": 25, "sex": "f", "occupation": "student", "traits": ["meticulous", "quiet"]}"#,
        ]);
        let ingest = ingest_persona_seeds(&path).unwrap();
        assert_eq!(
            ingest.profiles[0].traits,
            vec!["meticulous".to_string(), "quiet".to_string()]
        );
    }
}
