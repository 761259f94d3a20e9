//! Shared fixtures for the benchmarks.

use claim_anchor::dense::{EmbeddingKind, EmbeddingStore};
use claim_anchor::synthetic::zipf_corpus;
use claim_anchor::{
    Bm25Params, Corpus, InvertedIndex, PreprocessConfig, QuerySet, RankedList, Run, ScoredDoc,
    Stage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Size of the task's paper collection.
pub const COLLECTION_SIZE: usize = 7718;

pub const VOCAB: usize = 20_000;
pub const DOC_LEN: usize = 150;

pub fn collection() -> Corpus {
    zipf_corpus(COLLECTION_SIZE, VOCAB, DOC_LEN, 11)
}

pub fn index(corpus: &Corpus) -> InvertedIndex {
    InvertedIndex::build(corpus, &PreprocessConfig::default(), Bm25Params::default())
        .expect("default params are valid")
}

/// Tweet-length queries drawn from the collection's own documents.
pub fn queries(corpus: &Corpus, n: usize, seed: u64) -> QuerySet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries = (0..n)
        .map(|i| {
            let doc = &corpus.docs()[rng.random_range(0..corpus.len())];
            let words: Vec<&str> = doc.abstract_text.split(' ').collect();
            let start = rng.random_range(0..words.len().saturating_sub(25).max(1));
            let text = words[start..(start + 25).min(words.len())].join(" ");
            claim_anchor::Query::new(format!("q{i}"), text).with_gold(doc.cord_uid.clone())
        })
        .collect();
    QuerySet::new(queries).expect("generated ids are unique")
}

pub fn embeddings(n: usize, dim: usize, seed: u64) -> EmbeddingStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = EmbeddingStore::new(dim, EmbeddingKind::Document);
    for i in 0..n {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        store
            .insert(format!("d{i:05}"), &v)
            .expect("random vectors are nonzero");
    }
    store
}

pub fn random_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// A run of `n_queries` lists of depth `depth` with gold labels.
pub fn run_with_gold(
    n_queries: usize,
    depth: usize,
    seed: u64,
) -> (Run, std::collections::BTreeMap<String, String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = Run::new(Stage::Retrieval);
    let mut gold = std::collections::BTreeMap::new();
    for q in 0..n_queries {
        let entries = (0..depth)
            .map(|r| {
                ScoredDoc::new(
                    format!("d{}", rng.random_range(0..COLLECTION_SIZE)),
                    (depth - r) as f64,
                )
            })
            .collect();
        run.insert(RankedList {
            query_id: format!("q{q}"),
            stage: Stage::Retrieval,
            entries,
        })
        .expect("unique query ids");
        gold.insert(
            format!("q{q}"),
            format!("d{}", rng.random_range(0..COLLECTION_SIZE)),
        );
    }
    (run, gold)
}
