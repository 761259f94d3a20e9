//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the index or evaluation code paths under test.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

/// Okapi BM25 computed directly from token lists.
pub fn brute_force_bm25(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let total_len: usize = docs.iter().map(Vec::len).sum();
    let avgdl = if docs.is_empty() {
        0.0
    } else {
        total_len as f64 / n
    };
    let mut seen = HashSet::new();
    let terms: Vec<&String> = query.iter().filter(|t| seen.insert(t.as_str())).collect();
    docs.iter()
        .map(|doc| {
            if avgdl == 0.0 {
                return 0.0;
            }
            let mut score = 0.0;
            for term in &terms {
                let tf = doc.iter().filter(|t| t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                let dl = doc.len() as f64;
                score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
            score
        })
        .collect()
}

/// Ids with positive score, best first, ties by id, cut at `k`.
pub fn brute_force_ranking(ids: &[String], scores: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = ids
        .iter()
        .cloned()
        .zip(scores.iter().copied())
        .filter(|(_, s)| *s > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// MRR@k from gold labels and plain id lists.
pub fn mrr_oracle(
    lists: &BTreeMap<String, Vec<String>>,
    gold: &BTreeMap<String, String>,
    k: usize,
) -> f64 {
    let mut total = 0.0;
    for (qid, g) in gold {
        if let Some(list) = lists.get(qid) {
            for (i, id) in list.iter().enumerate() {
                if i >= k {
                    break;
                }
                if id == g {
                    total += 1.0 / (i as f64 + 1.0);
                    break;
                }
            }
        }
    }
    total / gold.len() as f64
}

pub fn cosine_oracle(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}
