//! Corpus diversity metrics: Self-BLEU4 (homogeneity; lower is more diverse)
//! and TF-IDF diversity (1 minus mean pairwise cosine; higher is more
//! diverse). Both use the same fixed tokenizer so results are reproducible
//! across implementations.
//!
//! Pinned definitions:
//! - tokenizer: case-fold, split punctuation into standalone tokens, split on
//!   whitespace;
//! - BLEU-4: brevity penalty times the geometric mean of modified n-gram
//!   precisions p1..p4 with uniform weights; any pn = 0 (or an empty
//!   denominator) zeroes the document's score; no smoothing;
//! - brevity penalty: reference length is the reference closest to the
//!   hypothesis length, ties to the shorter;
//! - TF-IDF: tf = raw count, idf = ln((1+N)/(1+df)) + 1, vectors
//!   L2-normalized.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiversityError {
    #[error("diversity metrics need at least 2 documents, got {0}")]
    TooFewDocuments(usize),
}

/// Case-folds, separates punctuation into its own tokens, then splits on
/// whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() * 2);
    for c in text.to_lowercase().chars() {
        if c.is_alphanumeric() || c.is_whitespace() {
            spaced.push(c);
        } else {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU-4 of one hypothesis against a set of references.
fn bleu4(hypothesis: &[String], references: &[&[String]]) -> f64 {
    if references.is_empty() {
        return 0.0;
    }
    let mut log_precision_sum = 0.0;
    for n in 1..=4 {
        let hyp_counts = ngram_counts(hypothesis, n);
        let total: u64 = hyp_counts.values().sum();
        if total == 0 {
            return 0.0;
        }
        let mut clipped = 0u64;
        for (gram, &count) in &hyp_counts {
            let max_ref = references
                .iter()
                .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += count.min(max_ref);
        }
        if clipped == 0 {
            return 0.0;
        }
        log_precision_sum += 0.25 * ((clipped as f64) / (total as f64)).ln();
    }

    let c = hypothesis.len() as i64;
    let r = references
        .iter()
        .map(|r| r.len() as i64)
        .min_by_key(|&len| ((len - c).abs(), len))
        .unwrap_or(0);
    let bp = if c > r {
        1.0
    } else if c == 0 {
        0.0
    } else {
        (1.0 - (r as f64) / (c as f64)).exp()
    };
    bp * log_precision_sum.exp()
}

/// Mean BLEU-4 of each document against all others as references. 1.0 for an
/// identical corpus, 0.0 when no 4-gram (or lower) overlap exists anywhere.
pub fn self_bleu4<S: AsRef<str>>(docs: &[S]) -> Result<f64, DiversityError> {
    if docs.len() < 2 {
        return Err(DiversityError::TooFewDocuments(docs.len()));
    }
    let tokenized: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d.as_ref())).collect();
    let mut sum = 0.0;
    for i in 0..tokenized.len() {
        let references: Vec<&[String]> = tokenized
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, t)| t.as_slice())
            .collect();
        sum += bleu4(&tokenized[i], &references);
    }
    Ok(sum / tokenized.len() as f64)
}

struct TfidfDoc {
    /// Raw term counts, kept so identical documents compare exactly.
    counts: HashMap<String, u64>,
    /// L2-normalized tf-idf weights.
    weights: HashMap<String, f64>,
}

/// L2-normalized TF-IDF vectors over the corpus vocabulary.
fn tfidf_vectors<S: AsRef<str>>(docs: &[S]) -> Vec<TfidfDoc> {
    let n = docs.len() as f64;
    let tokenized: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d.as_ref())).collect();

    let mut df: HashMap<&str, f64> = HashMap::new();
    for tokens in &tokenized {
        let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for term in seen {
            *df.entry(term).or_insert(0.0) += 1.0;
        }
    }

    tokenized
        .iter()
        .map(|tokens| {
            let mut counts: HashMap<String, u64> = HashMap::new();
            for token in tokens {
                *counts.entry(token.clone()).or_insert(0) += 1;
            }
            let mut weights: HashMap<String, f64> = counts
                .iter()
                .map(|(term, &count)| {
                    let idf = ((1.0 + n) / (1.0 + df[term.as_str()])).ln() + 1.0;
                    (term.clone(), count as f64 * idf)
                })
                .collect();
            let norm = weights.values().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for value in weights.values_mut() {
                    *value /= norm;
                }
            }
            TfidfDoc { counts, weights }
        })
        .collect()
}

fn sparse_cosine(a: &TfidfDoc, b: &TfidfDoc) -> f64 {
    // Equal term-count vectors have cosine exactly 1 regardless of the idf
    // scaling; short-circuiting keeps the identical-corpus endpoint exact.
    if a.counts == b.counts {
        return if a.counts.is_empty() { 0.0 } else { 1.0 };
    }
    // Vectors are L2-normalized; the dot product is the cosine.
    let (small, large) = if a.weights.len() <= b.weights.len() {
        (&a.weights, &b.weights)
    } else {
        (&b.weights, &a.weights)
    };
    let dot: f64 = small
        .iter()
        .filter_map(|(term, &v)| large.get(term).map(|&w| v * w))
        .sum();
    dot.clamp(0.0, 1.0)
}

/// 1 minus the mean cosine similarity over all unordered document pairs.
pub fn tfidf_diversity<S: AsRef<str>>(docs: &[S]) -> Result<f64, DiversityError> {
    if docs.len() < 2 {
        return Err(DiversityError::TooFewDocuments(docs.len()));
    }
    let vectors = tfidf_vectors(docs);
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            sum += sparse_cosine(&vectors[i], &vectors[j]);
            pairs += 1;
        }
    }
    Ok(1.0 - sum / pairs as f64)
}

/// Diversity of one response group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupDiversity {
    pub question_id: String,
    pub n_responses: usize,
    pub self_bleu4: f64,
    pub tfidf_diversity: f64,
}

/// Grouped result: per-question values plus their unweighted means, with the
/// ids of any groups skipped for having fewer than two responses.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDiversity {
    pub groups: Vec<GroupDiversity>,
    pub mean_self_bleu4: f64,
    pub mean_tfidf_diversity: f64,
    pub skipped: Vec<String>,
}

/// Computes both metrics within each question group, then averages across
/// groups without weighting. Groups are processed in sorted question-id order
/// so the result is deterministic regardless of map iteration order.
pub fn grouped_diversity<S: AsRef<str>>(
    responses: &std::collections::BTreeMap<String, Vec<S>>,
) -> Result<GroupedDiversity, DiversityError> {
    let mut groups = Vec::new();
    let mut skipped = Vec::new();
    for (question_id, docs) in responses {
        if docs.len() < 2 {
            skipped.push(question_id.clone());
            continue;
        }
        groups.push(GroupDiversity {
            question_id: question_id.clone(),
            n_responses: docs.len(),
            self_bleu4: self_bleu4(docs)?,
            tfidf_diversity: tfidf_diversity(docs)?,
        });
    }
    if groups.is_empty() {
        return Err(DiversityError::TooFewDocuments(0));
    }
    let n = groups.len() as f64;
    Ok(GroupedDiversity {
        mean_self_bleu4: groups.iter().map(|g| g.self_bleu4).sum::<f64>() / n,
        mean_tfidf_diversity: groups.iter().map(|g| g.tfidf_diversity).sum::<f64>() / n,
        groups,
        skipped,
    })
}
