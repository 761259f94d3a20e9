use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Pipeline stage that produced a ranked list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Retrieval,
    Rerank,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Retrieval => "retrieval",
            Stage::Rerank => "rerank",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        Self {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Ordering used by every ranked list: score descending, then `doc_id`
/// ascending so that ties resolve identically on every platform.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Candidates for one query, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub stage: Stage,
    pub entries: Vec<ScoredDoc>,
}

impl RankedList {
    pub fn new(query_id: impl Into<String>, stage: Stage) -> Self {
        Self {
            query_id: query_id.into(),
            stage,
            entries: Vec::new(),
        }
    }

    /// Sorts `entries` into rank order and keeps the best `k`.
    ///
    /// Selection runs in linear time before the head is sorted, so large
    /// candidate pools with small `k` stay cheap.
    pub fn from_unsorted(
        query_id: impl Into<String>,
        stage: Stage,
        mut entries: Vec<ScoredDoc>,
        k: usize,
    ) -> Self {
        if k == 0 {
            entries.clear();
        } else if entries.len() > k {
            entries.select_nth_unstable_by(k - 1, rank_order);
            entries.truncate(k);
        }
        entries.sort_unstable_by(rank_order);
        Self {
            query_id: query_id.into(),
            stage,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    /// 1-based rank of `doc_id`, if present.
    pub fn rank_of(&self, doc_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.doc_id == doc_id)
            .map(|p| p + 1)
    }

    /// Checks score order, tie-break and id uniqueness.
    pub fn is_well_ordered(&self) -> bool {
        let ordered = self
            .entries
            .windows(2)
            .all(|w| rank_order(&w[0], &w[1]) == Ordering::Less);
        let mut ids: Vec<&str> = self.doc_ids().collect();
        ids.sort_unstable();
        ordered && ids.windows(2).all(|w| w[0] != w[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_by_doc_id() {
        let list = RankedList::from_unsorted(
            "q",
            Stage::Retrieval,
            vec![
                ScoredDoc::new("b", 1.0),
                ScoredDoc::new("c", 2.0),
                ScoredDoc::new("a", 1.0),
            ],
            10,
        );
        let ids: Vec<_> = list.doc_ids().collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert!(list.is_well_ordered());
    }

    #[test]
    fn truncation_keeps_best() {
        let entries = (0..50)
            .map(|i| ScoredDoc::new(format!("d{i:02}"), (i % 7) as f64))
            .collect::<Vec<_>>();
        let mut full = entries.clone();
        full.sort_by(rank_order);
        let list = RankedList::from_unsorted("q", Stage::Retrieval, entries, 5);
        assert_eq!(list.entries, full[..5]);
    }

    #[test]
    fn rank_of_is_one_based() {
        let list = RankedList::from_unsorted(
            "q",
            Stage::Retrieval,
            vec![ScoredDoc::new("x", 3.0), ScoredDoc::new("y", 2.0)],
            10,
        );
        assert_eq!(list.rank_of("y"), Some(2));
        assert_eq!(list.rank_of("z"), None);
    }
}
