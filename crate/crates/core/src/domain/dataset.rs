//! Case dataset loading, persistence, train/test splitting, and batching.
//!
//! The on-disk format is line-delimited JSON: one record per line, each line
//! carrying a `schema` field. Streamable for 12k-record datasets and
//! diff-friendly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stable::stable_hash64;

use super::{validate_record, CaseId, PatientRecord, RECORD_SCHEMA};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported record schema {found:?}, expected {RECORD_SCHEMA:?}")]
    Schema { line: usize, found: String },
    #[error("duplicate record id {id:?} on lines {first} and {second}")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
    #[error("line {line}: record {id:?} violates invariants: {details}")]
    InvalidRecord {
        line: usize,
        id: String,
        details: String,
    },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    FractionOutOfRange(f64),
    #[error("cannot form {n_batches} batches from {n_train} training cases")]
    TooManyBatches { n_batches: usize, n_train: usize },
    #[error("dataset has no train split; call split first")]
    MissingSplit,
    #[error("unknown case id {0:?}")]
    UnknownCase(String),
}

/// One contiguous slice of the training split. Indices are 1-based so batch 1
/// is the first batch an agent ever sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub index: usize,
    pub case_ids: Vec<CaseId>,
}

/// An immutable collection of patient records plus the derived train/test
/// split and batch partition.
#[derive(Debug, Clone, Default)]
pub struct CaseDataset {
    records: Vec<PatientRecord>,
    by_id: HashMap<CaseId, usize>,
    pub train_ids: Vec<CaseId>,
    pub test_ids: Vec<CaseId>,
    pub batches: Vec<Batch>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    schema: String,
    #[serde(flatten)]
    record: PatientRecord,
}

impl CaseDataset {
    /// Builds a dataset from in-memory records, enforcing id uniqueness and
    /// per-record invariants. Line numbers in errors are 1-based positions.
    pub fn from_records(records: Vec<PatientRecord>) -> Result<Self, DatasetError> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, record) in records.iter().enumerate() {
            let line = i + 1;
            if let Some(&first) = by_id.get(&record.id) {
                return Err(DatasetError::DuplicateId {
                    id: record.id.to_string(),
                    first: first + 1,
                    second: line,
                });
            }
            let violations = validate_record(record);
            if !violations.is_empty() {
                let details = violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; ");
                return Err(DatasetError::InvalidRecord {
                    line,
                    id: record.id.to_string(),
                    details,
                });
            }
            by_id.insert(record.id.clone(), i);
        }
        Ok(Self {
            records,
            by_id,
            train_ids: Vec::new(),
            test_ids: Vec::new(),
            batches: Vec::new(),
        })
    }

    /// Loads a dataset from a line-delimited record file, preserving on-disk
    /// order. Every record is validated; the first problem aborts the load
    /// with its line number.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reader = BufReader::new(file);

        let mut records = Vec::new();
        let mut seen: HashMap<CaseId, usize> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| DatasetError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RecordLine = serde_json::from_str(&line)
                .map_err(|source| DatasetError::Parse { line: line_no, source })?;
            if parsed.schema != RECORD_SCHEMA {
                return Err(DatasetError::Schema {
                    line: line_no,
                    found: parsed.schema,
                });
            }
            if let Some(&first) = seen.get(&parsed.record.id) {
                return Err(DatasetError::DuplicateId {
                    id: parsed.record.id.to_string(),
                    first,
                    second: line_no,
                });
            }
            seen.insert(parsed.record.id.clone(), line_no);
            let violations = validate_record(&parsed.record);
            if !violations.is_empty() {
                let details = violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; ");
                return Err(DatasetError::InvalidRecord {
                    line: line_no,
                    id: parsed.record.id.to_string(),
                    details,
                });
            }
            records.push(parsed.record);
        }
        Self::from_records(records)
    }

    /// Writes the records back out in the line-delimited format. Loading the
    /// result reproduces the record data exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut writer = BufWriter::new(file);
        for record in &self.records {
            write_record_line(&mut writer, record).map_err(|source| DatasetError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        writer.flush().map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn get(&self, id: &CaseId) -> Option<&PatientRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn require(&self, id: &CaseId) -> Result<&PatientRecord, DatasetError> {
        self.get(id)
            .ok_or_else(|| DatasetError::UnknownCase(id.to_string()))
    }

    /// Splits the dataset into train and test sets. The assignment is a
    /// deterministic function of the record ids and the seed: each id is
    /// ranked by a stable hash of (seed, id) and the lowest-ranked
    /// `round(train_fraction * N)` ids become the training set. Both id lists
    /// keep the original record order, so batches stay sequential.
    pub fn split(mut self, train_fraction: f64, seed: u64) -> Result<Self, DatasetError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(DatasetError::FractionOutOfRange(train_fraction));
        }
        let n = self.records.len();
        let n_train = ((train_fraction * n as f64).round() as usize).min(n);

        let mut ranked: Vec<(u64, &CaseId)> = self
            .records
            .iter()
            .map(|r| {
                let h = stable_hash64(&[&seed.to_le_bytes(), r.id.as_str().as_bytes()]);
                (h, &r.id)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        let train_set: std::collections::HashSet<&CaseId> =
            ranked[..n_train].iter().map(|(_, id)| *id).collect();

        self.train_ids = self
            .records
            .iter()
            .filter(|r| train_set.contains(&r.id))
            .map(|r| r.id.clone())
            .collect();
        self.test_ids = self
            .records
            .iter()
            .filter(|r| !train_set.contains(&r.id))
            .map(|r| r.id.clone())
            .collect();
        self.batches.clear();
        Ok(self)
    }

    /// Partitions the training split into `n_batches` contiguous batches whose
    /// sizes differ by at most one. With `n = q * k + r`, the first `r`
    /// batches get `q + 1` cases and the rest get `q`.
    pub fn into_batches(mut self, n_batches: usize) -> Result<Self, DatasetError> {
        if self.train_ids.is_empty() {
            return Err(DatasetError::MissingSplit);
        }
        let n_train = self.train_ids.len();
        if n_batches == 0 || n_batches > n_train {
            return Err(DatasetError::TooManyBatches { n_batches, n_train });
        }
        let q = n_train / n_batches;
        let r = n_train % n_batches;
        let mut batches = Vec::with_capacity(n_batches);
        let mut cursor = 0usize;
        for i in 0..n_batches {
            let size = if i < r { q + 1 } else { q };
            batches.push(Batch {
                index: i + 1,
                case_ids: self.train_ids[cursor..cursor + size].to_vec(),
            });
            cursor += size;
        }
        self.batches = batches;
        Ok(self)
    }
}

/// Parses one schema-tagged record line without dataset-level checks; used
/// by lenient scanners that want to report every problem instead of stopping
/// at the first.
pub fn parse_record_line(line: &str) -> Result<PatientRecord, String> {
    let parsed: RecordLine =
        serde_json::from_str(line).map_err(|e| format!("parse error: {e}"))?;
    if parsed.schema != RECORD_SCHEMA {
        return Err(format!(
            "unsupported record schema {:?}, expected {RECORD_SCHEMA:?}",
            parsed.schema
        ));
    }
    Ok(parsed.record)
}

/// Serializes one record as a schema-tagged JSON line.
pub fn write_record_line<W: Write>(writer: &mut W, record: &PatientRecord) -> std::io::Result<()> {
    let line = RecordLine {
        schema: RECORD_SCHEMA.to_string(),
        record: record.clone(),
    };
    serde_json::to_writer(&mut *writer, &line)?;
    writer.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::testutil::sample_record;

    fn dataset_of(n: usize) -> CaseDataset {
        let records = (0..n).map(|i| sample_record(&format!("C-{i}"))).collect();
        CaseDataset::from_records(records).unwrap()
    }

    #[test]
    fn load_three_valid_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        dataset_of(3).save(&path).unwrap();
        let loaded = CaseDataset::load(&path).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.records()[1].id, CaseId::new("C-1"));
    }

    #[test]
    fn duplicate_id_error_cites_both_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut records: Vec<_> = (0..9).map(|i| sample_record(&format!("R-{i}"))).collect();
        records[1].id = CaseId::new("C-7");
        records[8].id = CaseId::new("C-7");
        let file = File::create(&path).unwrap();
        let mut w = BufWriter::new(file);
        for r in &records {
            write_record_line(&mut w, r).unwrap();
        }
        w.flush().unwrap();

        match CaseDataset::load(&path) {
            Err(DatasetError::DuplicateId { id, first, second }) => {
                assert_eq!(id, "C-7");
                assert_eq!((first, second), (2, 9));
            }
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn parse_error_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut buf = Vec::new();
        write_record_line(&mut buf, &sample_record("C-0")).unwrap();
        buf.extend_from_slice(b"{not json\n");
        std::fs::write(&path, buf).unwrap();
        match CaseDataset::load(&path) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_record_rejected_with_violations() {
        let mut record = sample_record("C-0");
        record.persona.age = 150;
        match CaseDataset::from_records(vec![record]) {
            Err(DatasetError::InvalidRecord { details, .. }) => {
                assert!(details.contains("persona.age"));
            }
            other => panic!("expected invalid-record error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let original = dataset_of(5);
        original.save(&path).unwrap();
        let loaded = CaseDataset::load(&path).unwrap();
        assert_eq!(loaded.records(), original.records());
    }

    #[test]
    fn split_ten_records_nine_to_one() {
        let split = dataset_of(10).split(0.9, 7).unwrap();
        assert_eq!(split.train_ids.len(), 9);
        assert_eq!(split.test_ids.len(), 1);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let a = dataset_of(40).split(0.9, 123).unwrap();
        let b = dataset_of(40).split(0.9, 123).unwrap();
        assert_eq!(a.train_ids, b.train_ids);
        assert_eq!(a.test_ids, b.test_ids);

        let train: std::collections::HashSet<_> = a.train_ids.iter().collect();
        for id in &a.test_ids {
            assert!(!train.contains(id));
        }
        assert_eq!(a.train_ids.len() + a.test_ids.len(), 40);
    }

    #[test]
    fn split_changes_with_seed() {
        let a = dataset_of(200).split(0.5, 1).unwrap();
        let b = dataset_of(200).split(0.5, 2).unwrap();
        assert_ne!(a.train_ids, b.train_ids);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        assert!(matches!(
            dataset_of(10).split(0.0, 1),
            Err(DatasetError::FractionOutOfRange(_))
        ));
        assert!(matches!(
            dataset_of(10).split(1.0, 1),
            Err(DatasetError::FractionOutOfRange(_))
        ));
    }

    #[test]
    fn batches_partition_train_ids() {
        let ds = dataset_of(10).split(0.9, 3).unwrap().into_batches(2).unwrap();
        assert_eq!(ds.batches.len(), 2);
        assert_eq!(ds.batches[0].case_ids.len(), 5);
        assert_eq!(ds.batches[1].case_ids.len(), 4);
        let rejoined: Vec<_> = ds
            .batches
            .iter()
            .flat_map(|b| b.case_ids.iter().cloned())
            .collect();
        assert_eq!(rejoined, ds.train_ids);
    }

    #[test]
    fn seven_cases_three_batches() {
        let ds = dataset_of(8).split(0.875, 3).unwrap().into_batches(3).unwrap();
        let sizes: Vec<usize> = ds.batches.iter().map(|b| b.case_ids.len()).collect();
        assert_eq!(sizes, vec![3, 2, 2]);
    }

    #[test]
    fn too_many_batches_rejected() {
        let err = dataset_of(10).split(0.9, 3).unwrap().into_batches(10);
        assert!(matches!(err, Err(DatasetError::TooManyBatches { .. })));
    }
}
