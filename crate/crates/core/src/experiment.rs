//! Config-driven experiment runner: load, augment, retrieve, rerank,
//! evaluate, write.
//!
//! A config is TOML or JSON. Relative paths resolve against the config
//! file's directory.
//!
//! ```toml
//! corpus_path = "collection.tsv"
//! queries_path = "dev.tsv"
//! output_dir = "out/baseline"
//! retrieval_k = 100
//! eval_k = 5
//!
//! [retrieval]
//! kind = "bm25"
//! k1 = 1.5
//! b = 0.75
//!
//! [augment]
//! mode = "concat_formal"
//! formal = "rewrites/formal.tsv"
//!
//! [rerank]
//! kind = "external"
//! endpoint = "cmd:python3 sidecar.py --model cross-encoder/ms-marco-MiniLM-L-6-v2"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment_query, AugmentMode, RewriteKind, RewriteTable, RewriteTables};
use crate::bm25::{Bm25Params, InvertedIndex, DEFAULT_RETRIEVAL_K};
use crate::corpus::{load_corpus, load_queries, Corpus, Query, QuerySet, TableFormat};
use crate::dense::{load_embeddings, EmbeddingKind, EmbeddingStore};
use crate::eval::{mrr_at_k, write_predictions, write_run, EvalReport, Run, DEFAULT_EVAL_K};
use crate::ranking::{RankedList, Stage};
use crate::rerank::{
    rerank, CandidateScorer, Endpoint, ExternalScorer, Scorer, DEFAULT_TIMEOUT_MS,
};
use crate::textprep::{default_stopwords, load_stopwords, PreprocessConfig, STOPWORDS_VERSION};

/// Environment variable consulted for the external scorer endpoint when the
/// config leaves it unset.
pub const SCORER_ENV: &str = "CLAIM_ANCHOR_SCORER";

pub const REPORT_FILE: &str = "report.json";
pub const RETRIEVAL_PREDICTIONS_FILE: &str = "predictions_retrieval.tsv";
pub const RERANK_PREDICTIONS_FILE: &str = "predictions_rerank.tsv";
pub const RETRIEVAL_RUN_FILE: &str = "run_retrieval.tsv";
pub const RERANK_RUN_FILE: &str = "run_rerank.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Load,
    Augment,
    Retrieval,
    Rerank,
    Evaluate,
    Write,
}

impl std::fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PipelineStage::Load => "load",
            PipelineStage::Augment => "augment",
            PipelineStage::Retrieval => "retrieval",
            PipelineStage::Rerank => "rerank",
            PipelineStage::Evaluate => "evaluate",
            PipelineStage::Write => "write",
        };
        f.write_str(s)
    }
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: PipelineStage,
        #[source]
        source: BoxError,
    },
}

impl ExperimentError {
    fn stage(stage: PipelineStage) -> impl FnOnce(BoxError) -> Self {
        move |source| ExperimentError::Stage { stage, source }
    }

    /// True for problems with the config or the input files, as opposed to
    /// failures while the pipeline runs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ExperimentError::Config(_)
                | ExperimentError::Stage {
                    stage: PipelineStage::Load | PipelineStage::Augment,
                    ..
                }
        )
    }

    pub fn failed_stage(&self) -> Option<PipelineStage> {
        match self {
            ExperimentError::Config(_) => None,
            ExperimentError::Stage { stage, .. } => Some(*stage),
        }
    }
}

fn default_retrieval_k() -> usize {
    DEFAULT_RETRIEVAL_K
}

fn default_eval_k() -> usize {
    DEFAULT_EVAL_K
}

fn default_true() -> bool {
    true
}

fn default_min_len() -> usize {
    1
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub corpus_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_format: Option<TableFormat>,
    pub queries_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries_format: Option<TableFormat>,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default = "default_retrieval_k")]
    pub retrieval_k: usize,
    #[serde(default)]
    pub preprocess: PreprocessSettings,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank: Option<RerankConfig>,
    #[serde(default = "default_eval_k")]
    pub eval_k: usize,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RetrievalConfig {
    Bm25(Bm25Params),
    Dense {
        doc_embeddings: PathBuf,
        query_embeddings: PathBuf,
    },
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig::Bm25(Bm25Params::default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSettings {
    #[serde(default = "default_true")]
    pub lowercase: bool,
    #[serde(default = "default_true")]
    pub strip_edge_punct: bool,
    #[serde(default = "default_min_len")]
    pub min_token_len: usize,
    /// One word per line; the bundled English list when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords_path: Option<PathBuf>,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_edge_punct: true,
            min_token_len: 1,
            stopwords_path: None,
        }
    }
}

impl PreprocessSettings {
    pub fn build(&self) -> std::io::Result<PreprocessConfig> {
        let stopwords = match &self.stopwords_path {
            Some(path) => load_stopwords(path)?,
            None => default_stopwords(),
        };
        let mut cfg = PreprocessConfig {
            lowercase: self.lowercase,
            strip_edge_punct: self.strip_edge_punct,
            stopwords,
            min_token_len: self.min_token_len,
        };
        cfg.normalize();
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    #[serde(default)]
    pub mode: AugmentMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formal: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub english_formal: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keywords: Option<PathBuf>,
}

impl AugmentConfig {
    pub fn table_path(&self, kind: RewriteKind) -> Option<&Path> {
        match kind {
            RewriteKind::Formal => self.formal.as_deref(),
            RewriteKind::EnglishFormal => self.english_formal.as_deref(),
            RewriteKind::Keywords => self.keywords.as_deref(),
        }
    }

    /// Loads every table that has a path, whether or not `mode` needs it.
    pub fn load_tables(&self) -> Result<RewriteTables, crate::augment::AugmentError> {
        let mut tables = RewriteTables::new();
        for kind in RewriteKind::ALL {
            if let Some(path) = self.table_path(kind) {
                tables.insert(RewriteTable::load(path, kind)?);
            }
        }
        Ok(tables)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Identity,
    LexicalOverlap,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankConfig {
    pub kind: ScorerKind,
    /// `cmd:<program> [args..]` or `tcp:<host>:<port>`; external only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

impl RerankConfig {
    pub fn builtin(kind: ScorerKind) -> Self {
        Self {
            kind,
            endpoint: None,
            name: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| match self.kind {
            ScorerKind::Identity => "identity".into(),
            ScorerKind::LexicalOverlap => "lexical_overlap".into(),
            ScorerKind::External => "external".into(),
        })
    }

    /// Falls back to `env_endpoint` for external scorers without an endpoint.
    pub fn build(
        &self,
        preproc: &PreprocessConfig,
        env_endpoint: Option<&str>,
    ) -> Result<Scorer, ExperimentError> {
        match self.kind {
            ScorerKind::Identity => Ok(Scorer::Identity),
            ScorerKind::LexicalOverlap => Ok(Scorer::LexicalOverlap(preproc.clone())),
            ScorerKind::External => {
                let raw = self.endpoint.as_deref().or(env_endpoint).ok_or_else(|| {
                    ExperimentError::Config(format!(
                        "external scorer needs `endpoint` or ${SCORER_ENV}"
                    ))
                })?;
                let endpoint: Endpoint = raw
                    .parse()
                    .map_err(|e| ExperimentError::Config(format!("{e}")))?;
                Ok(Scorer::External(ExternalScorer::new(
                    self.label(),
                    endpoint,
                    self.timeout_ms,
                )))
            }
        }
    }
}

impl ExperimentConfig {
    /// Minimal BM25 config with defaults everywhere else.
    pub fn new(
        corpus_path: impl Into<PathBuf>,
        queries_path: impl Into<PathBuf>,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            name: None,
            corpus_path: corpus_path.into(),
            corpus_format: None,
            queries_path: queries_path.into(),
            queries_format: None,
            retrieval: RetrievalConfig::default(),
            retrieval_k: DEFAULT_RETRIEVAL_K,
            preprocess: PreprocessSettings::default(),
            augment: AugmentConfig::default(),
            rerank: None,
            eval_k: DEFAULT_EVAL_K,
            output_dir: output_dir.into(),
        }
    }

    /// Parses a `.toml` or `.json` config and resolves relative paths
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        let mut cfg = Self::parse(&text, ext)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, ext: &str) -> Result<Self, String> {
        match ext.to_ascii_lowercase().as_str() {
            "toml" => toml::from_str(text).map_err(|e| e.to_string()),
            "json" => serde_json::from_str(text).map_err(|e| e.to_string()),
            other => Err(format!(
                "unsupported config extension `{other}` (expected .toml or .json)"
            )),
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_path);
        fix(&mut self.queries_path);
        fix(&mut self.output_dir);
        if let RetrievalConfig::Dense {
            doc_embeddings,
            query_embeddings,
        } = &mut self.retrieval
        {
            fix(doc_embeddings);
            fix(query_embeddings);
        }
        for p in [
            &mut self.augment.formal,
            &mut self.augment.english_formal,
            &mut self.augment.keywords,
            &mut self.preprocess.stopwords_path,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.eval_k == 0 {
            return bad("eval_k must be at least 1".into());
        }
        if self.retrieval_k < self.eval_k {
            return bad(format!(
                "retrieval_k ({}) must be >= eval_k ({})",
                self.retrieval_k, self.eval_k
            ));
        }
        if self.preprocess.min_token_len == 0 {
            return bad("preprocess.min_token_len must be at least 1".into());
        }
        if let RetrievalConfig::Bm25(params) = &self.retrieval {
            params
                .validate()
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        if matches!(self.retrieval, RetrievalConfig::Dense { .. })
            && self.augment.mode != AugmentMode::None
        {
            return bad("query augmentation needs lexical retrieval; dense query embeddings are precomputed".into());
        }
        for &kind in self.augment.mode.required_kinds() {
            if self.augment.table_path(kind).is_none() {
                return bad(format!(
                    "augment mode `{}` needs a `{kind}` rewrite table",
                    self.augment.mode
                ));
            }
        }
        if let Some(r) = &self.rerank {
            if r.kind != ScorerKind::External && r.endpoint.is_some() {
                return bad(format!(
                    "`endpoint` is only valid for external scorers, not `{}`",
                    r.label()
                ));
            }
            if r.timeout_ms == 0 {
                return bad("rerank.timeout_ms must be positive".into());
            }
        }
        Ok(())
    }

    /// `given`, or the format implied by the file extension.
    pub fn table_format(
        path: &Path,
        given: Option<TableFormat>,
    ) -> Result<TableFormat, ExperimentError> {
        match given {
            Some(f) => Ok(f),
            None => TableFormat::from_path(path)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display()))),
        }
    }
}

/// First-stage backend.
#[derive(Debug)]
pub enum Retriever {
    Bm25(InvertedIndex),
    Dense {
        docs: EmbeddingStore,
        queries: EmbeddingStore,
    },
}

impl Retriever {
    pub fn retrieve(&self, query: &Query, k: usize) -> Result<RankedList, BoxError> {
        match self {
            Retriever::Bm25(index) => Ok(index.search(&query.post_id, &query.tweet_text, k)),
            Retriever::Dense { docs, queries } => {
                let vector = queries
                    .get(&query.post_id)
                    .ok_or_else(|| crate::dense::DenseError::UnknownId(query.post_id.clone()))?;
                Ok(docs.retrieve(&query.post_id, vector, k)?)
            }
        }
    }
}

/// Ranked runs produced by one pass of the pipeline.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub retrieval: Run,
    pub rerank: Option<Run>,
    pub timings_ms: BTreeMap<String, f64>,
}

/// Runs augment → retrieve → rerank over in-memory inputs. Queries are
/// processed in parallel; output order does not depend on scheduling.
pub fn execute_pipeline(
    corpus: &Corpus,
    queries: &QuerySet,
    retriever: &Retriever,
    retrieval_k: usize,
    mode: AugmentMode,
    tables: &RewriteTables,
    scorer: Option<&dyn CandidateScorer>,
) -> Result<PipelineOutput, ExperimentError> {
    let mut timings = BTreeMap::new();

    let t = Instant::now();
    let augmented: Vec<Query> = queries
        .iter()
        .map(|q| {
            Ok(Query {
                tweet_text: augment_query(q, mode, tables)?,
                ..q.clone()
            })
        })
        .collect::<Result<_, crate::augment::AugmentError>>()
        .map_err(|e| ExperimentError::stage(PipelineStage::Augment)(e.into()))?;
    timings.insert("augment".to_string(), elapsed_ms(t));

    let t = Instant::now();
    let lists: Vec<RankedList> = augmented
        .par_iter()
        .map(|q| retriever.retrieve(q, retrieval_k))
        .collect::<Result<_, _>>()
        .map_err(ExperimentError::stage(PipelineStage::Retrieval))?;
    timings.insert("retrieval".to_string(), elapsed_ms(t));

    let rerank_run = match scorer {
        None => None,
        Some(scorer) => {
            let t = Instant::now();
            let reranked: Vec<RankedList> = augmented
                .par_iter()
                .zip(&lists)
                .map(|(q, list)| rerank(q, list, corpus, scorer))
                .collect::<Result<_, _>>()
                .map_err(|e| ExperimentError::stage(PipelineStage::Rerank)(e.into()))?;
            timings.insert("rerank".to_string(), elapsed_ms(t));
            Some(
                Run::from_lists(Stage::Rerank, reranked)
                    .map_err(|e| ExperimentError::stage(PipelineStage::Rerank)(e.into()))?,
            )
        }
    };
    let retrieval = Run::from_lists(Stage::Retrieval, lists)
        .map_err(|e| ExperimentError::stage(PipelineStage::Retrieval)(e.into()))?;
    Ok(PipelineOutput {
        retrieval,
        rerank: rerank_run,
        timings_ms: timings,
    })
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Everything needed to re-run an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub corpus_path: PathBuf,
    pub queries_path: PathBuf,
    pub retrieval: RetrievalConfig,
    pub retrieval_k: usize,
    pub eval_k: usize,
    pub preprocess: PreprocessEcho,
    pub augment: AugmentConfig,
    pub rerank: Option<RerankEcho>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessEcho {
    pub lowercase: bool,
    pub strip_edge_punct: bool,
    pub min_token_len: usize,
    pub stopwords_source: String,
    pub stopwords_count: usize,
    pub stopwords_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankEcho {
    pub kind: ScorerKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDiagnostics {
    pub post_id: String,
    pub gold: String,
    pub candidates: usize,
    pub retrieval_rank: Option<usize>,
    pub retrieval_rr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_rr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ConfigEcho,
    pub n_queries: usize,
    pub mrr_after_retrieval: f64,
    pub mrr_after_rerank: Option<f64>,
    pub per_query: Vec<QueryDiagnostics>,
    /// Wall-clock milliseconds per stage. Not deterministic.
    pub timings_ms: BTreeMap<String, f64>,
}

impl ExperimentReport {
    /// Pretty JSON without the timing block, for reproducibility checks.
    pub fn deterministic_json(&self) -> String {
        let mut copy = self.clone();
        copy.timings_ms.clear();
        serde_json::to_string_pretty(&copy).expect("report serializes")
    }
}

/// Indexes the corpus or loads the configured embeddings.
pub fn build_retriever(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    preproc: &PreprocessConfig,
) -> Result<Retriever, ExperimentError> {
    match &cfg.retrieval {
        RetrievalConfig::Bm25(params) => Ok(Retriever::Bm25(
            InvertedIndex::build(corpus, preproc, *params)
                .map_err(|e| ExperimentError::stage(PipelineStage::Retrieval)(e.into()))?,
        )),
        RetrievalConfig::Dense {
            doc_embeddings,
            query_embeddings,
        } => {
            let load = |p: &Path, kind| {
                load_embeddings(p, kind)
                    .map_err(|e| ExperimentError::stage(PipelineStage::Load)(e.into()))
            };
            let docs = load(doc_embeddings, EmbeddingKind::Document)?;
            let query_vecs = load(query_embeddings, EmbeddingKind::Query)?;
            if docs.dim() != query_vecs.dim() {
                return Err(ExperimentError::Config(format!(
                    "document embeddings have dimension {}, query embeddings {}",
                    docs.dim(),
                    query_vecs.dim()
                )));
            }
            if let Some(id) = docs.ids().iter().find(|id| corpus.get(id).is_none()) {
                return Err(ExperimentError::Config(format!(
                    "embedding id `{id}` is not in the corpus"
                )));
            }
            Ok(Retriever::Dense {
                docs,
                queries: query_vecs,
            })
        }
    }
}

/// Loads inputs, runs the pipeline, evaluates both stages and writes the
/// report plus prediction and run files into `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    run_experiment_with_env(cfg, std::env::var(SCORER_ENV).ok().as_deref())
}

pub fn run_experiment_with_env(
    cfg: &ExperimentConfig,
    env_endpoint: Option<&str>,
) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let total = Instant::now();
    let load_err = ExperimentError::stage(PipelineStage::Load);

    let t = Instant::now();
    let preproc = cfg.preprocess.build().map_err(|e| load_err(e.into()))?;
    let corpus_format = ExperimentConfig::table_format(&cfg.corpus_path, cfg.corpus_format)?;
    let queries_format = ExperimentConfig::table_format(&cfg.queries_path, cfg.queries_format)?;
    let corpus = load_corpus(&cfg.corpus_path, corpus_format)
        .map_err(|e| ExperimentError::stage(PipelineStage::Load)(e.into()))?;
    let queries = load_queries(&cfg.queries_path, queries_format, true)
        .map_err(|e| ExperimentError::stage(PipelineStage::Load)(e.into()))?;
    let tables = cfg
        .augment
        .load_tables()
        .map_err(|e| ExperimentError::stage(PipelineStage::Load)(e.into()))?;
    let scorer = cfg
        .rerank
        .as_ref()
        .map(|r| r.build(&preproc, env_endpoint))
        .transpose()?;
    let mut timings = BTreeMap::new();
    timings.insert("load".to_string(), elapsed_ms(t));

    let t = Instant::now();
    let retriever = build_retriever(cfg, &corpus, &preproc)?;
    timings.insert("index".to_string(), elapsed_ms(t));

    let output = execute_pipeline(
        &corpus,
        &queries,
        &retriever,
        cfg.retrieval_k,
        cfg.augment.mode,
        &tables,
        scorer.as_ref().map(|s| s as &dyn CandidateScorer),
    )?;
    timings.extend(output.timings_ms.clone());

    let t = Instant::now();
    let gold = queries.gold();
    let eval = |run: &Run| {
        mrr_at_k(run, &gold, cfg.eval_k)
            .map_err(|e| ExperimentError::stage(PipelineStage::Evaluate)(e.into()))
    };
    let retrieval_eval = eval(&output.retrieval)?;
    let rerank_eval = output.rerank.as_ref().map(eval).transpose()?;
    timings.insert("evaluate".to_string(), elapsed_ms(t));

    let t = Instant::now();
    write_outputs(cfg, &output).map_err(ExperimentError::stage(PipelineStage::Write))?;
    let per_query = diagnostics(&queries, &output, &retrieval_eval, rerank_eval.as_ref());
    timings.insert("write".to_string(), elapsed_ms(t));
    timings.insert("total".to_string(), elapsed_ms(total));

    let report = ExperimentReport {
        config: echo(cfg, &preproc, env_endpoint),
        n_queries: retrieval_eval.n_queries,
        mrr_after_retrieval: retrieval_eval.mrr,
        mrr_after_rerank: rerank_eval.as_ref().map(|r| r.mrr),
        per_query,
        timings_ms: timings,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    fs::write(cfg.output_dir.join(REPORT_FILE), json)
        .map_err(|e| ExperimentError::stage(PipelineStage::Write)(e.into()))?;
    Ok(report)
}

fn write_outputs(cfg: &ExperimentConfig, output: &PipelineOutput) -> Result<(), BoxError> {
    fs::create_dir_all(&cfg.output_dir)?;
    write_predictions(
        &output.retrieval,
        &cfg.output_dir.join(RETRIEVAL_PREDICTIONS_FILE),
    )?;
    write_run(&output.retrieval, &cfg.output_dir.join(RETRIEVAL_RUN_FILE))?;
    if let Some(run) = &output.rerank {
        write_predictions(run, &cfg.output_dir.join(RERANK_PREDICTIONS_FILE))?;
        write_run(run, &cfg.output_dir.join(RERANK_RUN_FILE))?;
    }
    Ok(())
}

fn diagnostics(
    queries: &QuerySet,
    output: &PipelineOutput,
    retrieval: &EvalReport,
    rerank: Option<&EvalReport>,
) -> Vec<QueryDiagnostics> {
    let mut rows: Vec<QueryDiagnostics> = queries
        .iter()
        .filter_map(|q| {
            let gold = q.gold_cord_uid.clone()?;
            let list = output.retrieval.get(&q.post_id);
            let reranked = output.rerank.as_ref().and_then(|r| r.get(&q.post_id));
            Some(QueryDiagnostics {
                candidates: list.map_or(0, RankedList::len),
                retrieval_rank: list.and_then(|l| l.rank_of(&gold)),
                retrieval_rr: retrieval.per_query.get(&q.post_id).copied().unwrap_or(0.0),
                rerank_rank: reranked.and_then(|l| l.rank_of(&gold)),
                rerank_rr: rerank.map(|r| r.per_query.get(&q.post_id).copied().unwrap_or(0.0)),
                post_id: q.post_id.clone(),
                gold,
            })
        })
        .collect();
    rows.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    rows
}

fn echo(
    cfg: &ExperimentConfig,
    preproc: &PreprocessConfig,
    env_endpoint: Option<&str>,
) -> ConfigEcho {
    ConfigEcho {
        name: cfg.name.clone(),
        corpus_path: cfg.corpus_path.clone(),
        queries_path: cfg.queries_path.clone(),
        retrieval: cfg.retrieval.clone(),
        retrieval_k: cfg.retrieval_k,
        eval_k: cfg.eval_k,
        preprocess: PreprocessEcho {
            lowercase: preproc.lowercase,
            strip_edge_punct: preproc.strip_edge_punct,
            min_token_len: preproc.min_token_len,
            stopwords_source: cfg.preprocess.stopwords_path.as_ref().map_or_else(
                || format!("bundled:{STOPWORDS_VERSION}"),
                |p| p.display().to_string(),
            ),
            stopwords_count: preproc.stopwords.len(),
            stopwords_sha256: preproc.stopwords_sha256(),
        },
        augment: cfg.augment.clone(),
        rerank: cfg.rerank.as_ref().map(|r| RerankEcho {
            kind: r.kind,
            name: r.label(),
            endpoint: match r.kind {
                ScorerKind::External => r
                    .endpoint
                    .clone()
                    .or_else(|| env_endpoint.map(str::to_string)),
                _ => None,
            },
            timeout_ms: r.timeout_ms,
        }),
    }
}

/// Runs the same config once per augmentation mode, each into
/// `output_dir/<mode>`.
pub fn run_grid(
    cfg: &ExperimentConfig,
    modes: &[AugmentMode],
) -> Result<Vec<(AugmentMode, ExperimentReport)>, ExperimentError> {
    let mut configs = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mut c = cfg.clone();
        c.augment.mode = mode;
        c.output_dir = cfg.output_dir.join(mode.as_str());
        c.validate()?;
        configs.push((mode, c));
    }
    configs
        .into_iter()
        .map(|(mode, c)| Ok((mode, run_experiment(&c)?)))
        .collect()
}

/// Markdown table with one row per augmentation mode: MRR after reranking,
/// then after retrieval.
pub fn summary_table(rows: &[(AugmentMode, ExperimentReport)]) -> String {
    let k = rows
        .first()
        .map_or(DEFAULT_EVAL_K, |(_, r)| r.config.eval_k);
    let mut out = format!(
        "| Augmentation | MRR@{k} after reranking | MRR@{k} after retrieval |\n|---|---|---|\n"
    );
    for (mode, report) in rows {
        let rerank = report
            .mrr_after_rerank
            .map_or_else(|| "-".to_string(), |m| format!("{m:.4}"));
        out.push_str(&format!(
            "| {} | {} | {:.4} |\n",
            mode.label(),
            rerank,
            report.mrr_after_retrieval
        ));
    }
    out
}
