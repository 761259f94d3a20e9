//! Protocol test double: answers score requests on stdin/stdout without a
//! model.
//!
//! Modes (first argument, default `index`):
//!   index     scores = candidate positions 0, 1, 2, ...
//!   reverse   scores = n-1, ..., 1, 0 (keeps the incoming order)
//!   overlap   scores = shared lowercase words between query and text
//!   error     always answers with an error frame
//!   short     drops the last score (protocol violation)
//!   wrong-id  echoes a different id (protocol violation)
//!   silent    reads requests but never answers

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde_json::{json, Value};

fn main() {
    let mode = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "index".to_string());
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if mode == "silent" {
            continue;
        }
        let reply = answer(&mode, &line);
        if writeln!(stdout, "{reply}")
            .and_then(|()| stdout.flush())
            .is_err()
        {
            break;
        }
    }
}

fn answer(mode: &str, line: &str) -> Value {
    let request: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return json!({"id": "unknown", "error": format!("malformed request: {e}")}),
    };
    let id = request
        .get("id")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();
    let Some(candidates) = request.get("candidates").and_then(Value::as_array) else {
        return json!({"id": id, "error": "missing candidates"});
    };
    let n = candidates.len();
    let scores: Vec<f64> = match mode {
        "index" | "short" | "wrong-id" => (0..n).map(|i| i as f64).collect(),
        "reverse" => (0..n).rev().map(|i| i as f64).collect(),
        "overlap" => {
            let query = request
                .get("query")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_lowercase();
            let words: HashSet<&str> = query.split_whitespace().collect();
            candidates
                .iter()
                .map(|c| {
                    let text = c
                        .get("text")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_lowercase();
                    let doc: HashSet<&str> = text.split_whitespace().collect();
                    words.intersection(&doc).count() as f64
                })
                .collect()
        }
        "error" => return json!({"id": id, "error": "echo scorer configured to fail"}),
        other => return json!({"id": id, "error": format!("unknown mode {other}")}),
    };
    match mode {
        "short" => json!({"id": id, "scores": &scores[..n.saturating_sub(1)]}),
        "wrong-id" => json!({"id": format!("{id}-x"), "scores": scores}),
        _ => json!({"id": id, "scores": scores}),
    }
}
