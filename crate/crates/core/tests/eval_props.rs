mod common;

use std::collections::BTreeMap;

use claim_anchor::eval::{mrr_at_k, read_run, write_predictions_to, write_run_to, Run};
use claim_anchor::{RankedList, ScoredDoc, Stage};
use common::mrr_oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn make_run(lists: &BTreeMap<String, Vec<String>>) -> Run {
    Run::from_lists(
        Stage::Retrieval,
        lists.iter().map(|(q, ids)| RankedList {
            query_id: q.clone(),
            stage: Stage::Retrieval,
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| ScoredDoc::new(id.clone(), (ids.len() - i) as f64))
                .collect(),
        }),
    )
    .unwrap()
}

fn run_and_gold() -> impl Strategy<Value = (BTreeMap<String, Vec<String>>, BTreeMap<String, String>)>
{
    let list = prop::collection::btree_set(0u8..30, 0..15)
        .prop_map(|s| s.into_iter().map(|d| format!("d{d}")).collect::<Vec<_>>())
        .prop_shuffle();
    (
        prop::collection::btree_map("q[0-9]{1,2}", list, 0..25),
        prop::collection::btree_map(
            "q[0-9]{1,2}",
            (0u8..30).prop_map(|d| format!("d{d}")),
            1..25,
        ),
    )
}

proptest! {
    #[test]
    fn bounded_and_monotone_in_k((lists, gold) in run_and_gold()) {
        let run = make_run(&lists);
        let mut prev = 0.0;
        for k in 1..=20 {
            let m = mrr_at_k(&run, &gold, k).unwrap().mrr;
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert!(m >= prev);
            prop_assert!((m - mrr_oracle(&lists, &gold, k)).abs() < 1e-12);
            prev = m;
        }
    }

    #[test]
    fn insertion_order_of_queries_does_not_matter((lists, gold) in run_and_gold()) {
        let run = make_run(&lists);
        let mut reversed = Run::new(Stage::Retrieval);
        for l in run.lists().collect::<Vec<_>>().into_iter().rev() {
            reversed.insert(l.clone()).unwrap();
        }
        prop_assert_eq!(mrr_at_k(&run, &gold, 5).unwrap(), mrr_at_k(&reversed, &gold, 5).unwrap());
    }

    #[test]
    fn run_file_round_trip((lists, _gold) in run_and_gold()) {
        let run = make_run(&lists);
        let mut buf = Vec::new();
        write_run_to(&run, &mut buf).unwrap();
        let back = read_run(buf.as_slice(), Stage::Retrieval).unwrap();
        let nonempty: Vec<_> = run.lists().filter(|l| !l.is_empty()).collect();
        prop_assert_eq!(back.lists().collect::<Vec<_>>(), nonempty);
    }
}

#[test]
fn four_ninths() {
    let lists: BTreeMap<String, Vec<String>> = [
        ("q1", vec!["g1", "x", "y"]),
        ("q2", vec!["x", "y", "g2"]),
        ("q3", vec!["x", "y", "z"]),
    ]
    .into_iter()
    .map(|(q, l)| (q.to_string(), l.into_iter().map(String::from).collect()))
    .collect();
    let gold: BTreeMap<String, String> = [("q1", "g1"), ("q2", "g2"), ("q3", "g3")]
        .into_iter()
        .map(|(a, b)| (a.into(), b.into()))
        .collect();
    let report = mrr_at_k(&make_run(&lists), &gold, 5).unwrap();
    assert!((report.mrr - 4.0 / 9.0).abs() < 1e-12);
    assert_eq!(report.per_query["q3"], 0.0);
}

#[test]
fn two_hundred_queries_against_oracle() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(200);
    let mut lists = BTreeMap::new();
    let mut gold = BTreeMap::new();
    for q in 0..200 {
        let qid = format!("p{q:03}");
        let n = rng.random_range(0..12);
        let mut ids: Vec<String> = (0..40).map(|d| format!("d{d}")).collect();
        rand::seq::SliceRandom::shuffle(&mut ids[..], &mut rng);
        ids.truncate(n);
        if rng.random_bool(0.9) {
            lists.insert(qid.clone(), ids);
        }
        gold.insert(qid, format!("d{}", rng.random_range(0..15)));
    }
    let run = make_run(&lists);
    for k in [1, 3, 5, 10] {
        let got = mrr_at_k(&run, &gold, k).unwrap();
        assert_eq!(got.n_queries, 200);
        assert!((got.mrr - mrr_oracle(&lists, &gold, k)).abs() < 1e-12);
    }
}

#[test]
fn prediction_rows_hold_top_five() {
    let lists: BTreeMap<String, Vec<String>> = [(
        "q1".to_string(),
        (0..8).map(|i| format!("d{i}")).collect::<Vec<_>>(),
    )]
    .into_iter()
    .collect();
    let mut out = Vec::new();
    write_predictions_to(&make_run(&lists), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("post_id\tpreds"));
    let (qid, preds) = lines.next().unwrap().split_once('\t').unwrap();
    assert_eq!(qid, "q1");
    let preds: Vec<String> = serde_json::from_str(preds).unwrap();
    assert_eq!(preds, ["d0", "d1", "d2", "d3", "d4"]);
}
