//! Second-stage reordering of retrieved candidates.

pub mod protocol;

use std::collections::HashSet;
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use rayon::prelude::*;

use crate::corpus::{document_text, Corpus, Query, QuerySet};
use crate::eval::Run;
use crate::ranking::{RankedList, ScoredDoc, Stage};
use crate::textprep::{preprocess, PreprocessConfig, TokenList};

pub use protocol::{
    score_external, Candidate, Connection, Endpoint, ScoreRequest, ScoreResponse, ScorerError,
};

pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("candidate `{0}` is not in the corpus")]
    UnknownDocId(String),
    #[error("run contains query `{0}` which is not in the query set")]
    UnknownQuery(String),
    #[error("scorer `{scorer}` failed: {source}")]
    ScorerFailure {
        scorer: String,
        #[source]
        source: ScorerError,
    },
}

/// Something that assigns one score per candidate.
pub trait CandidateScorer: Sync {
    fn name(&self) -> &str;

    /// Identity scorers keep the retrieval order and scores untouched.
    fn is_identity(&self) -> bool {
        false
    }

    fn score(&self, request: &ScoreRequest) -> Result<Vec<f64>, ScorerError>;
}

/// Fraction of distinct query tokens that also occur in the document.
pub fn lexical_overlap_score(query_tokens: &TokenList, doc_tokens: &TokenList) -> f64 {
    let query = query_tokens.unique();
    let doc: HashSet<&str> = doc_tokens.iter().map(String::as_str).collect();
    let shared = query.iter().filter(|t| doc.contains(*t)).count();
    shared as f64 / query.len().max(1) as f64
}

/// Client for a scorer speaking the line protocol. The connection is opened
/// lazily and reopened after a failure.
#[derive(Debug)]
pub struct ExternalScorer {
    name: String,
    endpoint: Endpoint,
    timeout: Duration,
    conn: Mutex<Option<Connection>>,
}

impl ExternalScorer {
    pub fn new(name: impl Into<String>, endpoint: Endpoint, timeout_ms: u64) -> Self {
        Self {
            name: name.into(),
            endpoint,
            timeout: Duration::from_millis(timeout_ms),
            conn: Mutex::new(None),
        }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn score_request(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(Connection::open(&self.endpoint)?);
        }
        let result = guard
            .as_mut()
            .expect("connection opened")
            .score(request, self.timeout);
        if result.is_err() {
            // a late or partial reply would desynchronize the stream
            *guard = None;
        }
        result
    }
}

impl CandidateScorer for ExternalScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, request: &ScoreRequest) -> Result<Vec<f64>, ScorerError> {
        self.score_request(request).map(|r| r.scores)
    }
}

/// Built-in and external scorers.
#[derive(Debug)]
pub enum Scorer {
    Identity,
    LexicalOverlap(PreprocessConfig),
    External(ExternalScorer),
}

impl CandidateScorer for Scorer {
    fn name(&self) -> &str {
        match self {
            Scorer::Identity => "identity",
            Scorer::LexicalOverlap(_) => "lexical_overlap",
            Scorer::External(ext) => ext.name(),
        }
    }

    fn is_identity(&self) -> bool {
        matches!(self, Scorer::Identity)
    }

    fn score(&self, request: &ScoreRequest) -> Result<Vec<f64>, ScorerError> {
        match self {
            // rerank() short-circuits identity; keep the given order if called directly
            Scorer::Identity => Ok((0..request.candidates.len())
                .rev()
                .map(|i| i as f64)
                .collect()),
            Scorer::LexicalOverlap(cfg) => {
                let query = preprocess(&request.query, cfg);
                Ok(request
                    .candidates
                    .iter()
                    .map(|c| lexical_overlap_score(&query, &preprocess(&c.text, cfg)))
                    .collect())
            }
            Scorer::External(ext) => ext.score(request),
        }
    }
}

/// Builds the request sent to a scorer for one query's candidates.
pub fn build_request(
    query: &Query,
    candidates: &RankedList,
    corpus: &Corpus,
) -> Result<ScoreRequest, RerankError> {
    let candidates = candidates
        .entries
        .iter()
        .map(|e| {
            let doc = corpus
                .get(&e.doc_id)
                .ok_or_else(|| RerankError::UnknownDocId(e.doc_id.clone()))?;
            Ok(Candidate {
                doc_id: e.doc_id.clone(),
                text: document_text(doc),
            })
        })
        .collect::<Result<Vec<_>, RerankError>>()?;
    Ok(ScoreRequest {
        id: query.post_id.clone(),
        query: query.tweet_text.clone(),
        candidates,
    })
}

/// Reorders `candidates` by scorer output. Scores replace retrieval scores;
/// failures propagate instead of falling back to retrieval order.
pub fn rerank<S: CandidateScorer + ?Sized>(
    query: &Query,
    candidates: &RankedList,
    corpus: &Corpus,
    scorer: &S,
) -> Result<RankedList, RerankError> {
    let failure = |source| RerankError::ScorerFailure {
        scorer: scorer.name().to_string(),
        source,
    };
    let request = build_request(query, candidates, corpus)?;
    if candidates.is_empty() {
        return Ok(RankedList::new(&candidates.query_id, Stage::Rerank));
    }
    if scorer.is_identity() {
        return Ok(RankedList {
            query_id: candidates.query_id.clone(),
            stage: Stage::Rerank,
            entries: candidates.entries.clone(),
        });
    }
    request.validate().map_err(failure)?;
    let scores = scorer.score(&request).map_err(failure)?;
    if scores.len() != request.candidates.len() {
        return Err(failure(ScorerError::Protocol(format!(
            "{} scores for {} candidates",
            scores.len(),
            request.candidates.len()
        ))));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(failure(ScorerError::Protocol("NaN score".into())));
    }
    let n = scores.len();
    let entries = request
        .candidates
        .into_iter()
        .zip(scores)
        .map(|(c, s)| ScoredDoc::new(c.doc_id, s))
        .collect();
    Ok(RankedList::from_unsorted(
        &candidates.query_id,
        Stage::Rerank,
        entries,
        n,
    ))
}

/// Reranks every list of a retrieval run, queries in parallel. Each list
/// must belong to a query in `queries`.
pub fn rerank_run<S: CandidateScorer + ?Sized>(
    queries: &QuerySet,
    run: &Run,
    corpus: &Corpus,
    scorer: &S,
) -> Result<Run, RerankError> {
    let by_id: std::collections::HashMap<&str, &Query> =
        queries.iter().map(|q| (q.post_id.as_str(), q)).collect();
    let lists: Vec<&RankedList> = run.lists().collect();
    let reranked = lists
        .par_iter()
        .map(|list| {
            let query = by_id
                .get(list.query_id.as_str())
                .ok_or_else(|| RerankError::UnknownQuery(list.query_id.clone()))?;
            rerank(query, list, corpus, scorer)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Run::from_lists(Stage::Rerank, reranked).expect("query ids are unique within a run"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    struct Fixed(Vec<f64>);

    impl CandidateScorer for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }

        fn score(&self, _: &ScoreRequest) -> Result<Vec<f64>, ScorerError> {
            Ok(self.0.clone())
        }
    }

    fn fixture() -> (Corpus, Query, RankedList) {
        let corpus = Corpus::new(vec![
            Document::new("u1", "Bile acids", "gut microbiome"),
            Document::new("u2", "Liver disease", ""),
            Document::new("u3", "Bile salts in gut and liver pathophysiology", ""),
        ])
        .unwrap();
        let query = Query::new("3491", "Bile salts in gut and liver pathophysiology");
        let list = RankedList::from_unsorted(
            "3491",
            Stage::Retrieval,
            vec![
                ScoredDoc::new("u1", 3.0),
                ScoredDoc::new("u2", 2.0),
                ScoredDoc::new("u3", 1.0),
            ],
            100,
        );
        (corpus, query, list)
    }

    #[test]
    fn identity_keeps_order_and_scores() {
        let (corpus, query, list) = fixture();
        let out = rerank(&query, &list, &corpus, &Scorer::Identity).unwrap();
        assert_eq!(out.entries, list.entries);
        assert_eq!(out.stage, Stage::Rerank);
    }

    #[test]
    fn reversed_scores_reverse_the_list() {
        let (corpus, query, list) = fixture();
        let out = rerank(&query, &list, &corpus, &Fixed(vec![0.0, 1.0, 2.0])).unwrap();
        assert_eq!(out.doc_ids().collect::<Vec<_>>(), ["u3", "u2", "u1"]);
    }

    #[test]
    fn lexical_overlap_promotes_full_match() {
        let (corpus, query, list) = fixture();
        let out = rerank(
            &query,
            &list,
            &corpus,
            &Scorer::LexicalOverlap(PreprocessConfig::default()),
        )
        .unwrap();
        assert_eq!(out.entries[0].doc_id, "u3");
        assert_eq!(out.entries[0].score, 1.0);
    }

    #[test]
    fn overlap_definition() {
        let q = TokenList::from(vec!["a", "b", "c", "d"]);
        assert_eq!(lexical_overlap_score(&q, &q), 1.0);
        assert_eq!(lexical_overlap_score(&q, &TokenList::from(vec!["x"])), 0.0);
        assert_eq!(
            lexical_overlap_score(&q, &TokenList::from(vec!["b", "a", "a"])),
            0.5
        );
        assert_eq!(lexical_overlap_score(&TokenList::default(), &q), 0.0);
    }

    #[test]
    fn unknown_candidate_is_an_error() {
        let (corpus, query, mut list) = fixture();
        list.entries.push(ScoredDoc::new("zz", 0.5));
        assert!(matches!(
            rerank(&query, &list, &corpus, &Scorer::Identity),
            Err(RerankError::UnknownDocId(id)) if id == "zz"
        ));
    }

    #[test]
    fn wrong_length_and_nan_fail_fast() {
        let (corpus, query, list) = fixture();
        assert!(matches!(
            rerank(&query, &list, &corpus, &Fixed(vec![1.0])),
            Err(RerankError::ScorerFailure { .. })
        ));
        assert!(matches!(
            rerank(&query, &list, &corpus, &Fixed(vec![1.0, f64::NAN, 0.0])),
            Err(RerankError::ScorerFailure { .. })
        ));
    }

    #[test]
    fn empty_candidates_skip_the_scorer() {
        let (corpus, query, _) = fixture();
        let empty = RankedList::new("3491", Stage::Retrieval);
        let out = rerank(&query, &empty, &corpus, &Fixed(vec![])).unwrap();
        assert!(out.is_empty());
        assert_eq!(out.stage, Stage::Rerank);
    }

    #[test]
    fn candidate_text_is_document_text() {
        let (corpus, query, list) = fixture();
        let req = build_request(&query, &list, &corpus).unwrap();
        assert_eq!(req.candidates[0].text, "Bile acids gut microbiome");
        assert_eq!(req.id, "3491");
    }

    #[test]
    fn rerank_run_rejects_unknown_query() {
        let (corpus, query, list) = fixture();
        let queries = QuerySet::new(vec![query]).unwrap();
        let run = Run::from_lists(Stage::Retrieval, [list.clone()]).unwrap();
        let out = rerank_run(&queries, &run, &corpus, &Scorer::Identity).unwrap();
        assert_eq!(out.get(&list.query_id).unwrap().entries, list.entries);
        let mut other = list;
        other.query_id = "nope".into();
        let run = Run::from_lists(Stage::Retrieval, [other]).unwrap();
        assert!(matches!(
            rerank_run(&queries, &run, &corpus, &Scorer::Identity),
            Err(RerankError::UnknownQuery(_))
        ));
    }
}
