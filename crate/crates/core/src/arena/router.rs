//! Roster construction and deterministic case routing: round-robin within
//! each department, a pure function of the record sequence and the roster.

use std::collections::BTreeMap;

use crate::domain::{DepartmentId, PatientRecord};
use crate::physician::PhysicianAgent;

use super::ArenaError;

/// Builds `per_department` physicians for every department, ids
/// `{department}-{n}` with n starting at 1.
pub fn build_roster(departments: &[DepartmentId], per_department: usize) -> Vec<PhysicianAgent> {
    let mut roster = Vec::with_capacity(departments.len() * per_department);
    for department in departments {
        for n in 1..=per_department {
            roster.push(PhysicianAgent::new(
                format!("{department}-{n}"),
                department.clone(),
            ));
        }
    }
    roster
}

/// Round-robin assignment state, keyed by department. Serializes into the
/// run checkpoint so resumed runs continue the same rotation.
#[derive(Debug, Clone, Default)]
pub struct Router {
    counters: BTreeMap<String, usize>,
}

impl Router {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counters(counters: BTreeMap<String, usize>) -> Self {
        Self { counters }
    }

    pub fn counters(&self) -> &BTreeMap<String, usize> {
        &self.counters
    }

    /// Index into the roster of the physician who owns this case.
    pub fn route_case(
        &mut self,
        record: &PatientRecord,
        roster: &[PhysicianAgent],
    ) -> Result<usize, ArenaError> {
        let candidates: Vec<usize> = roster
            .iter()
            .enumerate()
            .filter(|(_, p)| p.department == record.department)
            .map(|(i, _)| i)
            .collect();
        if candidates.is_empty() {
            return Err(ArenaError::UnknownDepartment(
                record.department.to_string(),
            ));
        }
        let counter = self
            .counters
            .entry(record.department.to_string())
            .or_insert(0);
        let choice = candidates[*counter % candidates.len()];
        *counter += 1;
        Ok(choice)
    }
}

/// First roster physician of the target department other than the requester;
/// used to answer consultations.
pub fn pick_consultant<'a>(
    roster: &'a [PhysicianAgent],
    target: &DepartmentId,
    requester_id: &str,
) -> Option<&'a PhysicianAgent> {
    roster
        .iter()
        .find(|p| p.department == *target && p.id != requester_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::testutil::sample_record;

    fn departments() -> Vec<DepartmentId> {
        vec![
            DepartmentId::new("Infectious Diseases"),
            DepartmentId::new("Cardiology"),
        ]
    }

    #[test]
    fn roster_has_two_per_department() {
        let roster = build_roster(&departments(), 2);
        assert_eq!(roster.len(), 4);
        assert_eq!(roster[0].id, "Infectious Diseases-1");
        assert_eq!(roster[3].id, "Cardiology-2");
    }

    #[test]
    fn four_sequential_cases_alternate_a_b_a_b() {
        let roster = build_roster(&departments(), 2);
        let mut router = Router::new();
        let record = sample_record("C-1");
        let assignments: Vec<&str> = (0..4)
            .map(|_| {
                let i = router.route_case(&record, &roster).unwrap();
                roster[i].id.as_str()
            })
            .collect();
        assert_eq!(
            assignments,
            vec![
                "Infectious Diseases-1",
                "Infectious Diseases-2",
                "Infectious Diseases-1",
                "Infectious Diseases-2"
            ]
        );
    }

    #[test]
    fn unknown_department_is_an_error() {
        let roster = build_roster(&[DepartmentId::new("Cardiology")], 2);
        let mut router = Router::new();
        let record = sample_record("C-1"); // Infectious Diseases
        assert!(matches!(
            router.route_case(&record, &roster),
            Err(ArenaError::UnknownDepartment(_))
        ));
    }

    #[test]
    fn routing_is_a_pure_function_of_sequence_and_roster() {
        let roster = build_roster(&departments(), 2);
        let record = sample_record("C-1");
        let run = || {
            let mut router = Router::new();
            (0..7)
                .map(|_| router.route_case(&record, &roster).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn consultant_skips_the_requester() {
        let roster = build_roster(&departments(), 2);
        let consultant = pick_consultant(
            &roster,
            &DepartmentId::new("Cardiology"),
            "Cardiology-1",
        )
        .unwrap();
        assert_eq!(consultant.id, "Cardiology-2");
        assert!(pick_consultant(&roster, &DepartmentId::new("Oncology"), "x").is_none());
    }
}
