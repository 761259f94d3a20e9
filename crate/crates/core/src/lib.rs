//! Claim-to-paper retrieval: map short social-media claims to the scientific
//! papers they implicitly reference.
//!
//! The pipeline is two-staged. A first stage retrieves a candidate list from
//! the paper collection, either lexically with Okapi BM25 ([`bm25`]) or by
//! cosine similarity over precomputed embeddings ([`dense`]). A second stage
//! reorders the candidates with a pluggable scorer ([`rerank`]), which may be
//! an external neural model speaking a newline-delimited JSON protocol.
//! Queries can be augmented with offline rewrites ([`augment`]) and every
//! stage is evaluated with MRR@k ([`eval`]). [`experiment`] wires it together
//! from a config file.

pub mod augment;
pub mod bm25;
pub mod corpus;
pub mod dense;
pub mod eval;
pub mod experiment;
pub mod ranking;
pub mod rerank;
pub mod synthetic;
pub mod textprep;

pub use augment::{
    augment_query, AugmentError, AugmentMode, RewriteKind, RewriteTable, RewriteTables,
};
pub use bm25::{Bm25Params, IndexError, InvertedIndex};
pub use corpus::{document_text, Corpus, CorpusError, Document, Query, QuerySet, TableFormat};
pub use dense::{cosine, DenseError, EmbeddingKind, EmbeddingStore};
pub use eval::{mrr_at_k, reciprocal_rank, EvalError, EvalReport, Run};
pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentError, ExperimentReport, PipelineStage,
};
pub use ranking::{RankedList, ScoredDoc, Stage};
pub use rerank::{
    rerank, CandidateScorer, Endpoint, RerankError, ScoreRequest, ScoreResponse, Scorer,
    ScorerError,
};
pub use textprep::{preprocess, PreprocessConfig, TokenList};
