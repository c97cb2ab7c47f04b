//! Core capability metrics: examination precision, diagnostic accuracy, and
//! the 1–5 → [0,1] mapping for judge-scored treatment alignment.

use std::collections::{BTreeSet, HashMap};

/// Canonical exam-name form: case-folded with whitespace collapsed.
pub fn canonical_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// `|pred ∩ gold| / |pred|` over canonicalized names. An empty prediction
/// scores 0 by convention: the quotient is undefined at |pred| = 0, and never
/// ordering evidence should not score well.
pub fn examination_precision<'a, P, G>(pred: P, gold: G) -> f64
where
    P: IntoIterator<Item = &'a str>,
    G: IntoIterator<Item = &'a str>,
{
    let pred: BTreeSet<String> = pred.into_iter().map(canonical_name).collect();
    if pred.is_empty() {
        return 0.0;
    }
    let gold: BTreeSet<String> = gold.into_iter().map(canonical_name).collect();
    let hits = pred.iter().filter(|p| gold.contains(*p)).count();
    hits as f64 / pred.len() as f64
}

/// Normalization used for diagnosis comparison: case-fold, trim, strip
/// terminal punctuation, collapse internal whitespace.
pub fn normalize_diagnosis(text: &str) -> String {
    let trimmed = text
        .trim()
        .trim_end_matches(['.', '!', '?', ';', ':', ','])
        .trim();
    trimmed
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Optional table of diagnosis equivalences. Pairs are symmetric and compared
/// in normalized form; no fuzzy matching happens beyond it.
#[derive(Debug, Clone, Default)]
pub struct SynonymTable {
    canon: HashMap<String, String>,
}

impl SynonymTable {
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut canon = HashMap::new();
        for (a, b) in pairs {
            let a = normalize_diagnosis(a.as_ref());
            let b = normalize_diagnosis(b.as_ref());
            // Map both spellings to one representative.
            let rep = canon.get(&a).cloned().unwrap_or_else(|| a.clone());
            canon.insert(a, rep.clone());
            canon.insert(b, rep);
        }
        Self { canon }
    }

    fn resolve<'a>(&'a self, normalized: &'a str) -> &'a str {
        self.canon
            .get(normalized)
            .map(String::as_str)
            .unwrap_or(normalized)
    }
}

/// 1 iff the normalized prediction equals the normalized gold diagnosis, or
/// the synonym table maps them together; 0 otherwise.
pub fn diagnostic_accuracy(pred: &str, gold: &str, synonyms: Option<&SynonymTable>) -> u8 {
    let p = normalize_diagnosis(pred);
    let g = normalize_diagnosis(gold);
    if p.is_empty() || g.is_empty() {
        return u8::from(p == g && !p.is_empty());
    }
    let equal = match synonyms {
        Some(table) => table.resolve(&p) == table.resolve(&g),
        None => p == g,
    };
    u8::from(equal)
}

/// Maps one 1–5 integer judge score linearly onto [0,1]: 1 → 0, 5 → 1.
pub fn scale_to_unit(score: u8) -> f64 {
    (f64::from(score) - 1.0) / 4.0
}

/// Mean of three 1–5 dimension scores mapped onto [0,1].
pub fn alignment_from_scores(scores: [u8; 3]) -> f64 {
    scores.iter().map(|&s| scale_to_unit(s)).sum::<f64>() / 3.0
}
