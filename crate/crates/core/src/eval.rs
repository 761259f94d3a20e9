//! MRR@k evaluation and run/prediction files.
//!
//! ```text
//! MRR@k = (1/N) Σ_i 1/rank_i
//! ```
//!
//! where `rank_i` is the 1-based position of the gold document for query `i`
//! and the term is zero when the gold document is not in the top `k`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranking::{RankedList, ScoredDoc, Stage};

pub const DEFAULT_EVAL_K: usize = 5;
/// Number of ids written per query to a prediction file.
pub const PREDICTION_DEPTH: usize = 5;

const PREDICTIONS_HEADER: &str = "post_id\tpreds";
const RUN_HEADER: &str = "post_id\trank\tdoc_id\tscore";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold label set is empty")]
    EmptyGold,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("ranked list for `{0}` appears twice")]
    DuplicateQuery(String),
}

/// Ranked lists of one stage, keyed by query id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub stage: Stage,
    lists: BTreeMap<String, RankedList>,
}

impl Run {
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            lists: BTreeMap::new(),
        }
    }

    pub fn from_lists<I: IntoIterator<Item = RankedList>>(
        stage: Stage,
        lists: I,
    ) -> Result<Self, EvalError> {
        let mut run = Self::new(stage);
        for list in lists {
            run.insert(list)?;
        }
        Ok(run)
    }

    pub fn insert(&mut self, list: RankedList) -> Result<(), EvalError> {
        if self.lists.contains_key(&list.query_id) {
            return Err(EvalError::DuplicateQuery(list.query_id));
        }
        self.lists.insert(list.query_id.clone(), list);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&RankedList> {
        self.lists.get(query_id)
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// Lists in ascending query id order.
    pub fn lists(&self) -> impl Iterator<Item = &RankedList> {
        self.lists.values()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub mrr: f64,
    pub n_queries: usize,
    pub per_query: BTreeMap<String, f64>,
}

pub fn reciprocal_rank(list: &RankedList, gold: &str, k: usize) -> f64 {
    list.entries
        .iter()
        .take(k)
        .position(|e| e.doc_id == gold)
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

/// Mean reciprocal rank over every gold query; queries missing from the run
/// contribute zero.
pub fn mrr_at_k(
    run: &Run,
    gold: &BTreeMap<String, String>,
    k: usize,
) -> Result<EvalReport, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let per_query: BTreeMap<String, f64> = gold
        .iter()
        .map(|(post_id, doc)| {
            let rr = run
                .get(post_id)
                .map_or(0.0, |list| reciprocal_rank(list, doc, k));
            (post_id.clone(), rr)
        })
        .collect();
    let mrr = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(EvalReport {
        k,
        mrr,
        n_queries: per_query.len(),
        per_query,
    })
}

/// Writes `post_id<TAB>["id1","id2",...]` rows, top five ids per query, in
/// ascending post id order with LF line endings.
pub fn write_predictions_to<W: Write>(run: &Run, writer: W) -> Result<(), EvalError> {
    let mut out = BufWriter::new(writer);
    writeln!(out, "{PREDICTIONS_HEADER}")?;
    for list in run.lists() {
        let ids: Vec<&str> = list.doc_ids().take(PREDICTION_DEPTH).collect();
        let cell = serde_json::to_string(&ids).expect("string list serializes");
        writeln!(out, "{}\t{cell}", list.query_id)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_predictions(run: &Run, path: &Path) -> Result<(), EvalError> {
    write_predictions_to(run, File::create(path)?)
}

/// Full ranked lists with scores: `post_id<TAB>rank<TAB>doc_id<TAB>score`.
pub fn write_run_to<W: Write>(run: &Run, writer: W) -> Result<(), EvalError> {
    let mut out = BufWriter::new(writer);
    writeln!(out, "{RUN_HEADER}")?;
    for list in run.lists() {
        for (i, e) in list.entries.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                list.query_id,
                i + 1,
                e.doc_id,
                e.score
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_run(run: &Run, path: &Path) -> Result<(), EvalError> {
    write_run_to(run, File::create(path)?)
}

/// Reads either a prediction file or a full run file, detected by header.
/// Prediction rows carry no scores, so entries get descending placeholder
/// scores that preserve the listed order.
pub fn read_run<R: Read>(reader: R, stage: Stage) -> Result<Run, EvalError> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let header = header.trim_start_matches('\u{feff}').trim_end_matches('\r');
    let mut run = Run::new(stage);
    match header {
        PREDICTIONS_HEADER => {
            for (i, line) in lines.enumerate() {
                let line = line?;
                let line = line.trim_end_matches('\r');
                if line.is_empty() {
                    continue;
                }
                let parse_err = |detail: String| EvalError::Parse {
                    line: i + 2,
                    detail,
                };
                let (post_id, cell) = line
                    .split_once('\t')
                    .ok_or_else(|| parse_err("expected two tab-separated columns".into()))?;
                let ids: Vec<String> =
                    serde_json::from_str(cell).map_err(|e| parse_err(e.to_string()))?;
                let n = ids.len();
                let entries = ids
                    .into_iter()
                    .enumerate()
                    .map(|(r, id)| ScoredDoc::new(id, (n - r) as f64))
                    .collect();
                run.insert(RankedList {
                    query_id: post_id.to_string(),
                    stage,
                    entries,
                })?;
            }
        }
        RUN_HEADER => {
            let mut rows: BTreeMap<String, Vec<(usize, ScoredDoc)>> = BTreeMap::new();
            for (i, line) in lines.enumerate() {
                let line = line?;
                let line = line.trim_end_matches('\r');
                if line.is_empty() {
                    continue;
                }
                let parse_err = |detail: String| EvalError::Parse {
                    line: i + 2,
                    detail,
                };
                let cols: Vec<&str> = line.split('\t').collect();
                let [post_id, rank, doc_id, score] = cols[..] else {
                    return Err(parse_err(format!(
                        "expected 4 columns, found {}",
                        cols.len()
                    )));
                };
                let rank: usize = rank.parse().map_err(|e| parse_err(format!("rank: {e}")))?;
                let score: f64 = score
                    .parse()
                    .map_err(|e| parse_err(format!("score: {e}")))?;
                rows.entry(post_id.to_string())
                    .or_default()
                    .push((rank, ScoredDoc::new(doc_id, score)));
            }
            for (post_id, mut entries) in rows {
                entries.sort_by_key(|(rank, _)| *rank);
                run.insert(RankedList {
                    query_id: post_id,
                    stage,
                    entries: entries.into_iter().map(|(_, e)| e).collect(),
                })?;
            }
        }
        other => {
            return Err(EvalError::Parse {
                line: 1,
                detail: format!("unrecognized header `{other}`"),
            })
        }
    }
    Ok(run)
}

pub fn load_run(path: &Path, stage: Stage) -> Result<Run, EvalError> {
    read_run(File::open(path)?, stage)
}
