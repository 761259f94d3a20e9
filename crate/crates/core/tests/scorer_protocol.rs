use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::time::Instant;

use claim_anchor::rerank::{
    score_external, Candidate, Connection, Endpoint, ExternalScorer, ScoreRequest, ScorerError,
};
use claim_anchor::{
    rerank, CandidateScorer, Corpus, Document, Query, RankedList, ScoredDoc, Stage,
};
use rand::{Rng, SeedableRng};

fn echo(mode: &str) -> Endpoint {
    format!("cmd:{} {mode}", env!("CARGO_BIN_EXE_echo-scorer"))
        .parse()
        .unwrap()
}

fn request(id: &str, n: usize) -> ScoreRequest {
    ScoreRequest {
        id: id.into(),
        query: "bile salts kill the virus".into(),
        candidates: (0..n)
            .map(|i| Candidate {
                doc_id: format!("u{i}"),
                text: format!("candidate {i} about bile"),
            })
            .collect(),
    }
}

#[test]
fn index_and_reverse_modes() {
    let r = score_external(&echo("index"), &request("q1", 4), 5000).unwrap();
    assert_eq!(r.id, "q1");
    assert_eq!(r.scores, vec![0.0, 1.0, 2.0, 3.0]);
    let r = score_external(&echo("reverse"), &request("q2", 3), 5000).unwrap();
    assert_eq!(r.scores, vec![2.0, 1.0, 0.0]);
}

#[test]
fn remote_error_frame() {
    let err = score_external(&echo("error"), &request("q1", 2), 5000).unwrap_err();
    assert!(
        matches!(err, ScorerError::Remote(ref m) if m.contains("configured to fail")),
        "{err}"
    );
}

#[test]
fn short_and_mismatched_replies_are_protocol_errors() {
    let err = score_external(&echo("short"), &request("q1", 3), 5000).unwrap_err();
    assert!(matches!(err, ScorerError::Protocol(_)), "{err}");
    let err = score_external(&echo("wrong-id"), &request("q1", 3), 5000).unwrap_err();
    assert!(
        matches!(err, ScorerError::Protocol(ref m) if m.contains("q1-x")),
        "{err}"
    );
}

#[test]
fn silent_peer_times_out() {
    let start = Instant::now();
    let err = score_external(&echo("silent"), &request("q1", 2), 300).unwrap_err();
    assert!(matches!(err, ScorerError::Timeout(300)), "{err}");
    assert!(start.elapsed().as_secs() < 5);
}

#[test]
fn missing_program_is_a_connect_error() {
    let ep: Endpoint = "cmd:/nonexistent/scorer-binary".parse().unwrap();
    assert!(matches!(
        score_external(&ep, &request("q", 1), 1000),
        Err(ScorerError::Connect { .. })
    ));
}

#[test]
fn invalid_requests_never_reach_the_peer() {
    let mut dup = request("q", 2);
    dup.candidates[1].doc_id = "u0".into();
    assert!(matches!(
        score_external(&echo("index"), &dup, 1000),
        Err(ScorerError::InvalidRequest(_))
    ));
    assert!(matches!(
        score_external(&echo("index"), &request("q", 0), 1000),
        Err(ScorerError::InvalidRequest(_))
    ));
}

#[test]
fn malformed_request_gets_error_frame() {
    let mut child = std::process::Command::new(env!("CARGO_BIN_EXE_echo-scorer"))
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, "{{not json").unwrap();
    drop(stdin);
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    child.wait().unwrap();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(v["id"], "unknown");
    assert!(v["error"].as_str().unwrap().contains("malformed"));
}

#[test]
fn one_connection_serves_many_requests() {
    let mut conn = Connection::open(&echo("index")).unwrap();
    for i in 0..20 {
        let r = conn
            .score(
                &request(&format!("q{i}"), i % 5 + 1),
                std::time::Duration::from_secs(5),
            )
            .unwrap();
        assert_eq!(r.id, format!("q{i}"));
        assert_eq!(r.scores.len(), i % 5 + 1);
    }
}

/// In-process TCP peer answering with the candidate text length.
fn tcp_stub() -> Endpoint {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            std::thread::spawn(move || {
                let mut writer = stream.try_clone().unwrap();
                for line in BufReader::new(stream).lines() {
                    let Ok(line) = line else { break };
                    let req: ScoreRequest = serde_json::from_str(&line).unwrap();
                    let scores: Vec<f64> =
                        req.candidates.iter().map(|c| c.text.len() as f64).collect();
                    let reply = serde_json::json!({"id": req.id, "scores": scores});
                    if writeln!(writer, "{reply}").is_err() {
                        break;
                    }
                }
            });
        }
    });
    format!("tcp:{addr}").parse().unwrap()
}

#[test]
fn tcp_endpoint_round_trip() {
    let ep = tcp_stub();
    let mut req = request("t1", 3);
    req.candidates[1].text = "a much longer candidate text than the others".into();
    let r = score_external(&ep, &req, 5000).unwrap();
    assert_eq!(r.scores[1], req.candidates[1].text.len() as f64);

    let scorer = ExternalScorer::new("tcp-stub", ep, 5000);
    for i in 0..10 {
        assert_eq!(
            scorer.score(&request(&format!("t{i}"), 2)).unwrap().len(),
            2
        );
    }
}

#[test]
fn unreachable_tcp_endpoint() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let ep: Endpoint = format!("tcp:127.0.0.1:{port}").parse().unwrap();
    assert!(matches!(
        score_external(&ep, &request("q", 1), 1000),
        Err(ScorerError::Connect { .. })
    ));
}

#[test]
fn external_scorer_recovers_after_failure() {
    // first request is invalid on the wire side (wrong-id), connection is dropped and reopened
    let scorer = ExternalScorer::new("w", echo("wrong-id"), 5000);
    assert!(scorer.score(&request("a", 2)).is_err());
    assert!(scorer.score(&request("b", 2)).is_err());
    let scorer = ExternalScorer::new("i", echo("index"), 5000);
    assert_eq!(scorer.score(&request("c", 2)).unwrap(), vec![0.0, 1.0]);
}

#[test]
fn randomized_rerank_through_subprocess_preserves_candidates() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let corpus = Corpus::new(
        (0..60)
            .map(|i| Document::new(format!("c{i:02}"), format!("t{i}"), "words"))
            .collect(),
    )
    .unwrap();
    let scorer = ExternalScorer::new("echo", echo("overlap"), 5000);
    for trial in 0..100 {
        let n = rng.random_range(1..=30);
        let mut ids: Vec<usize> = (0..60).collect();
        rand::seq::SliceRandom::shuffle(&mut ids[..], &mut rng);
        let entries = ids[..n]
            .iter()
            .map(|&i| ScoredDoc::new(format!("c{i:02}"), rng.random_range(0.1..10.0)))
            .collect();
        let list = RankedList::from_unsorted(format!("q{trial}"), Stage::Retrieval, entries, n);
        let query = Query::new(format!("q{trial}"), format!("t{} words", ids[0]));
        let out = rerank(&query, &list, &corpus, &scorer).unwrap();
        let mut a: Vec<&str> = list.doc_ids().collect();
        let mut b: Vec<&str> = out.doc_ids().collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b, "trial {trial}");
        assert!(out.is_well_ordered());
    }
}
