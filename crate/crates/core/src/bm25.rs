//! Inverted index with Okapi BM25 scoring.
//!
//! For a query `q` and document `d`:
//!
//! ```text
//! score(q, d) = Σ_{t ∈ unique(q)} idf(t) · tf(t,d)·(k1+1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = max(idf_floor, ln((N − df(t) + 0.5) / (df(t) + 0.5) + 1))
//! ```
//!
//! The `+1` inside the logarithm keeps idf non-negative, so every score is
//! non-negative and documents without a query term score exactly zero.
//!
//! Floating-point operations follow the formula left to right, and per-term
//! contributions are summed in first-occurrence order of the query terms.
//! Distinct `(tf, |d|)` pairs can tie exactly in real arithmetic; a fixed
//! evaluation order makes such ties resolve the same way as any other
//! straightforward transcription of the formula.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{document_text, Corpus};
use crate::ranking::{RankedList, ScoredDoc, Stage};
use crate::textprep::{hex, preprocess, PreprocessConfig, TokenList};

pub const DEFAULT_RETRIEVAL_K: usize = 100;

const SNAPSHOT_FORMAT: &str = "claim-anchor-bm25";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("document position {position} out of range (index holds {n_docs} documents)")]
    PositionOutOfRange { position: usize, n_docs: usize },
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
    #[error("index snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("index snapshot is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not an index snapshot (format `{0}`)")]
    WrongFormat(String),
    #[error("unsupported snapshot version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("snapshot config hash mismatch: stored {stored}, computed {computed}")]
    ConfigMismatch { stored: String, computed: String },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub idf_floor: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: 1.5,
            b: 0.75,
            idf_floor: 0.0,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), IndexError> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(IndexError::InvalidParams(format!(
                "k1 must be finite and >= 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(IndexError::InvalidParams(format!(
                "b must lie in [0, 1], got {}",
                self.b
            )));
        }
        if !(self.idf_floor.is_finite() && self.idf_floor >= 0.0) {
            return Err(IndexError::InvalidParams(format!(
                "idf_floor must be finite and >= 0, got {}",
                self.idf_floor
            )));
        }
        Ok(())
    }

    pub fn idf(&self, n_docs: usize, df: usize) -> f64 {
        let n = n_docs as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln().max(self.idf_floor)
    }
}

/// Occurrence of a term in one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    params: Bm25Params,
    preproc: PreprocessConfig,
    term_ids: HashMap<String, u32>,
    terms: Vec<String>,
    postings: Vec<Vec<Posting>>,
    idf: Vec<f64>,
    doc_ids: Vec<String>,
    doc_len: Vec<u32>,
    /// `k1 · (1 − b + b·|d|/avgdl)` per document.
    length_norm: Vec<f64>,
    avg_doc_len: f64,
}

impl InvertedIndex {
    /// Indexes `document_text` of every document. Tokenization runs in
    /// parallel; postings are merged in document order.
    pub fn build(
        corpus: &Corpus,
        cfg: &PreprocessConfig,
        params: Bm25Params,
    ) -> Result<Self, IndexError> {
        params.validate()?;
        let tokenized: Vec<TokenList> = corpus
            .docs()
            .par_iter()
            .map(|doc| preprocess(&document_text(doc), cfg))
            .collect();

        let mut term_ids: HashMap<String, u32> = HashMap::new();
        let mut terms: Vec<String> = Vec::new();
        let mut postings: Vec<Vec<Posting>> = Vec::new();
        let mut doc_len = Vec::with_capacity(tokenized.len());
        let mut counts: HashMap<&str, u32> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();

        for (pos, tokens) in tokenized.iter().enumerate() {
            counts.clear();
            order.clear();
            for tok in tokens {
                let c = counts.entry(tok.as_str()).or_insert(0);
                if *c == 0 {
                    order.push(tok.as_str());
                }
                *c += 1;
            }
            for term in &order {
                let id = *term_ids.entry((*term).to_string()).or_insert_with(|| {
                    terms.push((*term).to_string());
                    postings.push(Vec::new());
                    (terms.len() - 1) as u32
                });
                postings[id as usize].push(Posting {
                    doc: pos as u32,
                    tf: counts[term],
                });
            }
            doc_len.push(tokens.len() as u32);
        }

        let doc_ids = corpus.iter().map(|d| d.cord_uid.clone()).collect();
        Ok(Self::assemble(
            params,
            cfg.clone(),
            term_ids,
            terms,
            postings,
            doc_ids,
            doc_len,
        ))
    }

    fn assemble(
        params: Bm25Params,
        preproc: PreprocessConfig,
        term_ids: HashMap<String, u32>,
        terms: Vec<String>,
        postings: Vec<Vec<Posting>>,
        doc_ids: Vec<String>,
        doc_len: Vec<u32>,
    ) -> Self {
        let n_docs = doc_ids.len();
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_len = if n_docs == 0 {
            0.0
        } else {
            total as f64 / n_docs as f64
        };
        let length_norm = doc_len
            .iter()
            .map(|&l| {
                if avg_doc_len > 0.0 {
                    params.k1 * (1.0 - params.b + params.b * f64::from(l) / avg_doc_len)
                } else {
                    params.k1 * (1.0 - params.b)
                }
            })
            .collect();
        let idf = postings
            .iter()
            .map(|p| params.idf(n_docs, p.len()))
            .collect();
        Self {
            params,
            preproc,
            term_ids,
            terms,
            postings,
            idf,
            doc_ids,
            doc_len,
            length_norm,
            avg_doc_len,
        }
    }

    pub fn params(&self) -> &Bm25Params {
        &self.params
    }

    pub fn preprocess_config(&self) -> &PreprocessConfig {
        &self.preproc
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, position: usize) -> Option<u32> {
        self.doc_len.get(position).copied()
    }

    pub fn doc_id(&self, position: usize) -> Option<&str> {
        self.doc_ids.get(position).map(String::as_str)
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.term_ids
            .get(term)
            .map(|&id| self.postings[id as usize].as_slice())
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).map_or(0, <[Posting]>::len)
    }

    /// Tokenizes a query with the same config the documents were indexed with.
    pub fn tokenize(&self, text: &str) -> TokenList {
        preprocess(text, &self.preproc)
    }

    #[inline]
    fn term_weight(&self, term_id: usize, p: Posting) -> f64 {
        let tf = f64::from(p.tf);
        self.idf[term_id] * (tf * (self.params.k1 + 1.0)) / (tf + self.length_norm[p.doc as usize])
    }

    /// BM25 score of one document.
    pub fn score(&self, query_tokens: &TokenList, position: usize) -> Result<f64, IndexError> {
        if position >= self.n_docs() {
            return Err(IndexError::PositionOutOfRange {
                position,
                n_docs: self.n_docs(),
            });
        }
        if self.avg_doc_len == 0.0 {
            return Ok(0.0);
        }
        let mut score = 0.0;
        for term in query_tokens.unique() {
            let Some(&id) = self.term_ids.get(term) else {
                continue;
            };
            let list = &self.postings[id as usize];
            if let Ok(i) = list.binary_search_by_key(&(position as u32), |p| p.doc) {
                score += self.term_weight(id as usize, list[i]);
            }
        }
        Ok(score)
    }

    /// Top-`k` documents with positive score. Lists may be shorter than `k`;
    /// zero-score documents are never returned.
    pub fn retrieve(&self, query_id: &str, query_tokens: &TokenList, k: usize) -> RankedList {
        if self.avg_doc_len == 0.0 || k == 0 {
            return RankedList::new(query_id, Stage::Retrieval);
        }
        let mut acc = vec![0.0f64; self.n_docs()];
        let mut touched: Vec<u32> = Vec::new();
        for term in query_tokens.unique() {
            let Some(&id) = self.term_ids.get(term) else {
                continue;
            };
            for &p in &self.postings[id as usize] {
                let slot = &mut acc[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += self.term_weight(id as usize, p);
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let entries = touched
            .into_iter()
            .filter(|&d| acc[d as usize] > 0.0)
            .map(|d| ScoredDoc::new(self.doc_ids[d as usize].clone(), acc[d as usize]))
            .collect();
        RankedList::from_unsorted(query_id, Stage::Retrieval, entries, k)
    }

    /// Tokenizes `text` and retrieves.
    pub fn search(&self, query_id: &str, text: &str, k: usize) -> RankedList {
        self.retrieve(query_id, &self.tokenize(text), k)
    }

    /// SHA-256 of the embedded BM25 params and preprocessing config.
    pub fn config_sha256(&self) -> String {
        config_sha256(&self.params, &self.preproc)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &self.to_snapshot())?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    /// Loads a snapshot, verifying format, version and the embedded config
    /// hash. Pass `expected` to also require a specific configuration.
    pub fn load(
        path: &Path,
        expected: Option<(&PreprocessConfig, &Bm25Params)>,
    ) -> Result<Self, IndexError> {
        let snapshot: IndexSnapshot = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let index = Self::from_snapshot(snapshot)?;
        if let Some((cfg, params)) = expected {
            let wanted = config_sha256(params, cfg);
            if wanted != index.config_sha256() {
                return Err(IndexError::ConfigMismatch {
                    stored: index.config_sha256(),
                    computed: wanted,
                });
            }
        }
        Ok(index)
    }

    fn to_snapshot(&self) -> IndexSnapshot {
        IndexSnapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            config_sha256: self.config_sha256(),
            params: self.params,
            preprocess: self.preproc.clone(),
            doc_ids: self.doc_ids.clone(),
            doc_len: self.doc_len.clone(),
            postings: self
                .terms
                .iter()
                .zip(&self.postings)
                .map(|(t, p)| (t.clone(), p.iter().map(|p| (p.doc, p.tf)).collect()))
                .collect(),
        }
    }

    fn from_snapshot(s: IndexSnapshot) -> Result<Self, IndexError> {
        if s.format != SNAPSHOT_FORMAT {
            return Err(IndexError::WrongFormat(s.format));
        }
        if s.version != SNAPSHOT_VERSION {
            return Err(IndexError::VersionMismatch {
                found: s.version,
                expected: SNAPSHOT_VERSION,
            });
        }
        s.params.validate()?;
        let computed = config_sha256(&s.params, &s.preprocess);
        if computed != s.config_sha256 {
            return Err(IndexError::ConfigMismatch {
                stored: s.config_sha256,
                computed,
            });
        }
        if s.doc_len.len() != s.doc_ids.len() {
            return Err(IndexError::Corrupt(
                "doc_len and doc_ids differ in length".into(),
            ));
        }
        let n_docs = s.doc_ids.len();
        let mut tf_sum = vec![0u64; n_docs];
        let mut term_ids = HashMap::with_capacity(s.postings.len());
        let mut terms = Vec::with_capacity(s.postings.len());
        let mut postings = Vec::with_capacity(s.postings.len());
        for (term, list) in s.postings {
            if list.is_empty() {
                return Err(IndexError::Corrupt(format!("empty postings for `{term}`")));
            }
            if list.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(IndexError::Corrupt(format!(
                    "postings for `{term}` not strictly ascending"
                )));
            }
            let mut converted = Vec::with_capacity(list.len());
            for (doc, tf) in list {
                if doc as usize >= n_docs || tf == 0 {
                    return Err(IndexError::Corrupt(format!(
                        "bad posting ({doc}, {tf}) for `{term}`"
                    )));
                }
                tf_sum[doc as usize] += u64::from(tf);
                converted.push(Posting { doc, tf });
            }
            term_ids.insert(term.clone(), terms.len() as u32);
            terms.push(term);
            postings.push(converted);
        }
        if tf_sum
            .iter()
            .zip(&s.doc_len)
            .any(|(&sum, &len)| sum != u64::from(len))
        {
            return Err(IndexError::Corrupt(
                "term frequencies do not sum to doc_len".into(),
            ));
        }
        Ok(Self::assemble(
            s.params,
            s.preprocess,
            term_ids,
            terms,
            postings,
            s.doc_ids,
            s.doc_len,
        ))
    }
}

pub fn build_index(
    corpus: &Corpus,
    cfg: &PreprocessConfig,
    params: Bm25Params,
) -> Result<InvertedIndex, IndexError> {
    InvertedIndex::build(corpus, cfg, params)
}

pub fn config_sha256(params: &Bm25Params, cfg: &PreprocessConfig) -> String {
    let canonical = serde_json::to_string(&(params, cfg)).expect("config serializes");
    hex(&Sha256::digest(canonical.as_bytes()))
}

/// On-disk form of an index. Postings are keyed by term in sorted order so
/// that snapshots of the same index are byte-identical.
#[derive(Debug, Serialize, Deserialize)]
struct IndexSnapshot {
    format: String,
    version: u32,
    config_sha256: String,
    params: Bm25Params,
    preprocess: PreprocessConfig,
    doc_ids: Vec<String>,
    doc_len: Vec<u32>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}
