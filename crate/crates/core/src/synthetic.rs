//! Seeded synthetic collections for tests and benchmarks.
//!
//! Every document owns a handful of signature terms that appear nowhere
//! else, plus filler words drawn from a shared vocabulary. Two query sets are
//! derived from it: *exact* queries built from signature terms (trivially
//! answerable) and *ambiguous* queries built from the gold document's filler
//! words only. Rewrite tables are attached to the ambiguous set: formal
//! rewrites inject the gold title's signature terms, keyword tables keep a
//! single filler word.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::AugmentError;
use crate::augment::{RewriteKind, RewriteTable, RewriteTables};
use crate::corpus::{write_corpus, Corpus, CorpusError, Document, Query, QuerySet, TableFormat};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub signature_terms: usize,
    /// Signature terms placed in the title; the rest go to the abstract.
    pub title_signature_terms: usize,
    pub query_signature_terms: usize,
    pub filler_vocab: usize,
    pub filler_per_doc: usize,
    pub ambiguous_query_terms: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_docs: 200,
            signature_terms: 5,
            title_signature_terms: 2,
            query_signature_terms: 3,
            filler_vocab: 60,
            filler_per_doc: 12,
            ambiguous_query_terms: 3,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub corpus: Corpus,
    /// One query per document made of its signature terms.
    pub exact_queries: QuerySet,
    /// One query per document made of its filler words only.
    pub ambiguous_queries: QuerySet,
    /// Rewrites keyed by the ambiguous queries' post ids.
    pub tables: RewriteTables,
}

/// Paths written by [`SyntheticDataset::write_dir`].
#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub corpus: PathBuf,
    pub exact_queries: PathBuf,
    pub ambiguous_queries: PathBuf,
    pub formal: PathBuf,
    pub english_formal: PathBuf,
    pub keywords: PathBuf,
}

pub fn signature_term(doc: usize, j: usize) -> String {
    format!("sig{doc:05}x{j}")
}

fn filler_term(k: usize) -> String {
    format!("w{k:04}")
}

fn doc_id(i: usize) -> String {
    format!("d{i:05}")
}

impl SyntheticDataset {
    pub fn generate(cfg: &SyntheticConfig) -> Self {
        assert!(cfg.title_signature_terms <= cfg.signature_terms);
        assert!(cfg.query_signature_terms <= cfg.signature_terms);
        assert!(cfg.filler_vocab > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let vocab: Vec<String> = (0..cfg.filler_vocab).map(filler_term).collect();

        let mut docs = Vec::with_capacity(cfg.n_docs);
        let mut fillers: Vec<Vec<String>> = Vec::with_capacity(cfg.n_docs);
        for i in 0..cfg.n_docs {
            let sigs: Vec<String> = (0..cfg.signature_terms)
                .map(|j| signature_term(i, j))
                .collect();
            // skewed draw: low-numbered filler words are more common
            let filler: Vec<String> = (0..cfg.filler_per_doc)
                .map(|_| {
                    let u: f64 = rng.random();
                    vocab[((u * u) * cfg.filler_vocab as f64) as usize % cfg.filler_vocab].clone()
                })
                .collect();
            let title = sigs[..cfg.title_signature_terms].join(" ");
            let mut body: Vec<String> = sigs[cfg.title_signature_terms..].to_vec();
            body.extend(filler.iter().cloned());
            body.shuffle(&mut rng);
            docs.push(Document::new(doc_id(i), title, body.join(" ")));
            fillers.push(filler);
        }

        let mut exact = Vec::with_capacity(cfg.n_docs);
        let mut ambiguous = Vec::with_capacity(cfg.n_docs);
        let mut formal = Vec::with_capacity(cfg.n_docs);
        let mut english = Vec::with_capacity(cfg.n_docs);
        let mut keywords = Vec::with_capacity(cfg.n_docs);
        let all_sig: Vec<usize> = (0..cfg.signature_terms).collect();
        for (i, doc_filler) in fillers.iter().enumerate() {
            let picked: Vec<String> = all_sig
                .choose_multiple(&mut rng, cfg.query_signature_terms)
                .map(|&j| signature_term(i, j))
                .collect();
            exact.push(Query::new(format!("e{i:05}"), picked.join(" ")).with_gold(doc_id(i)));

            let words: Vec<&String> = doc_filler
                .choose_multiple(&mut rng, cfg.ambiguous_query_terms.min(fillers[i].len()))
                .collect();
            let post_id = format!("a{i:05}");
            let text = words
                .iter()
                .map(|w| w.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let title_terms: Vec<String> = (0..cfg.title_signature_terms)
                .map(|j| signature_term(i, j))
                .collect();
            formal.push((
                post_id.clone(),
                format!("A formal account of {}.", title_terms.join(" and ")),
            ));
            english.push((
                post_id.clone(),
                format!("The study of {}.", title_terms.join(", ")),
            ));
            let keyword = words
                .first()
                .map_or_else(|| filler_term(0), |w| (*w).clone());
            keywords.push((post_id.clone(), keyword));
            ambiguous.push(Query::new(post_id, text).with_gold(doc_id(i)));
        }

        Self {
            corpus: Corpus::new(docs).expect("generated ids are unique"),
            exact_queries: QuerySet::new(exact).expect("generated ids are unique"),
            ambiguous_queries: QuerySet::new(ambiguous).expect("generated ids are unique"),
            tables: RewriteTables::new()
                .with(RewriteTable::from_entries(RewriteKind::Formal, formal))
                .with(RewriteTable::from_entries(
                    RewriteKind::EnglishFormal,
                    english,
                ))
                .with(RewriteTable::from_entries(RewriteKind::Keywords, keywords)),
        }
    }

    /// Writes the corpus as CSV and queries and rewrite tables as TSV.
    pub fn write_dir(&self, dir: &Path) -> Result<SyntheticFiles, AugmentError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CorpusError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let files = SyntheticFiles {
            corpus: dir.join("corpus.csv"),
            exact_queries: dir.join("exact_queries.tsv"),
            ambiguous_queries: dir.join("ambiguous_queries.tsv"),
            formal: dir.join("formal.tsv"),
            english_formal: dir.join("english_formal.tsv"),
            keywords: dir.join("keywords.tsv"),
        };
        write_corpus(&self.corpus, &files.corpus, TableFormat::Csv)?;
        for (set, path) in [
            (&self.exact_queries, &files.exact_queries),
            (&self.ambiguous_queries, &files.ambiguous_queries),
        ] {
            set.write(File::create(path).map_err(io(path))?, TableFormat::Tsv)?;
        }
        for (kind, path) in [
            (RewriteKind::Formal, &files.formal),
            (RewriteKind::EnglishFormal, &files.english_formal),
            (RewriteKind::Keywords, &files.keywords),
        ] {
            let table = self.tables.get(kind).expect("all kinds generated");
            table.write(File::create(path).map_err(io(path))?)?;
        }
        Ok(files)
    }
}

/// Documents of roughly abstract-sized length over a Zipf-like vocabulary,
/// for load and latency measurements.
pub fn zipf_corpus(n_docs: usize, vocab: usize, doc_len: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = (0..n_docs)
        .map(|i| {
            let words: Vec<String> = (0..doc_len)
                .map(|_| {
                    let u: f64 = rng.random_range(0.0..1.0);
                    filler_term(
                        ((vocab as f64).powf(u) as usize)
                            .saturating_sub(1)
                            .min(vocab - 1),
                    )
                })
                .collect();
            Document::new(
                doc_id(i),
                words[..8.min(words.len())].join(" "),
                words.join(" "),
            )
        })
        .collect();
    Corpus::new(docs).expect("generated ids are unique")
}
