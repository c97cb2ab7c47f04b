//! Deterministic hashed bag-of-words embedding and cosine ranking, shared by
//! patient memory, physician experience, and knowledge retrieval. The default
//! embedder needs no model so every retrieval step is replayable offline; a
//! remote embedding backend can be plugged in behind the same signature.

use std::sync::Arc;

use crate::stable::stable_hash64;

/// Fixed embedding dimension for the default hashed bag-of-words vectors.
pub const EMBED_DIM: usize = 256;

/// Any text-to-vector function sharing the retrieval contract.
pub type Embedder = Arc<dyn Fn(&str) -> Vec<f64> + Send + Sync>;

pub fn default_embedder() -> Embedder {
    Arc::new(embed_default)
}

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize_alnum(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Hashed bag-of-words vector of dimension [`EMBED_DIM`], L2-normalized.
/// Identical text always yields the identical vector; empty or tokenless text
/// yields the zero vector.
pub fn embed_default(text: &str) -> Vec<f64> {
    let mut vector = vec![0.0f64; EMBED_DIM];
    for token in tokenize_alnum(text) {
        let bucket = (stable_hash64(&[token.as_bytes()]) % EMBED_DIM as u64) as usize;
        vector[bucket] += 1.0;
    }
    l2_normalize(&mut vector);
    vector
}

pub fn l2_normalize(vector: &mut [f64]) {
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in vector.iter_mut() {
            *x /= norm;
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Indices of the top-k vectors by descending cosine similarity to the query.
/// Ties keep insertion order, so ranking is fully deterministic.
pub fn rank_by_cosine(query: &[f64], vectors: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, cosine(query, v)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    scored.into_iter().take(k).map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_text_gives_identical_vectors() {
        assert_eq!(embed_default("fever"), embed_default("fever"));
    }

    #[test]
    fn nonempty_text_has_unit_self_similarity() {
        let v = embed_default("persistent evening fever with chills");
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_embeds_to_zero_vector() {
        let v = embed_default("");
        assert!(v.iter().all(|&x| x == 0.0));
        assert_eq!(v.len(), EMBED_DIM);
    }

    #[test]
    fn disjoint_collision_free_tokens_are_orthogonal() {
        // Toy vocabulary picked so the two token sets land in different
        // buckets; verified by brute force below.
        let a = "alpha beta";
        let b = "gamma delta";
        let buckets = |text: &str| -> Vec<u64> {
            tokenize_alnum(text)
                .iter()
                .map(|t| stable_hash64(&[t.as_bytes()]) % EMBED_DIM as u64)
                .collect()
        };
        let ba = buckets(a);
        let bb = buckets(b);
        assert!(ba.iter().all(|x| !bb.contains(x)), "collision in toy vocab");
        assert!(cosine(&embed_default(a), &embed_default(b)).abs() < 1e-12);
    }

    #[test]
    fn ranking_matches_exhaustive_sort_oracle() {
        let texts = [
            "sore throat and fever",
            "chest pain on exertion",
            "fever with night sweats",
            "left knee swelling",
            "persistent dry cough",
        ];
        let vectors: Vec<Vec<f64>> = texts.iter().map(|t| embed_default(t)).collect();
        let query = embed_default("evening fever");

        // Oracle: full stable sort over all (index, score) pairs.
        let mut oracle: Vec<(usize, f64)> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, cosine(&query, v)))
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let expected: Vec<usize> = oracle.iter().take(2).map(|(i, _)| *i).collect();

        assert_eq!(rank_by_cosine(&query, &vectors, 2), expected);
    }

    #[test]
    fn k_beyond_len_returns_everything_sorted() {
        let vectors: Vec<Vec<f64>> = ["a b", "c d", "e f"]
            .iter()
            .map(|t| embed_default(t))
            .collect();
        let query = embed_default("a b");
        let ranked = rank_by_cosine(&query, &vectors, 10);
        assert_eq!(ranked.len(), 3);
        assert_eq!(ranked[0], 0);
    }
}
