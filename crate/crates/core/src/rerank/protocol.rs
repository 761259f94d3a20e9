//! Newline-delimited JSON scoring protocol.
//!
//! One request per line, one response per line, in request order:
//!
//! ```text
//! -> {"id":"q1","query":"...","candidates":[{"doc_id":"u1","text":"..."}]}
//! <- {"id":"q1","scores":[0.9]}
//! <- {"id":"q1","error":"model failed"}
//! ```
//!
//! The peer is either a child process (stdin/stdout) or a TCP stream. A
//! reader thread forwards response lines over a channel so that every wait
//! can be bounded by a timeout.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer did not answer within {0} ms")]
    Timeout(u64),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("scorer reported an error: {0}")]
    Remote(String),
    #[error("cannot reach scorer `{endpoint}`: {source}")]
    Connect {
        endpoint: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scorer I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error(
        "invalid scorer endpoint `{0}` (expected `cmd:<program> [args..]` or `tcp:<host>:<port>`)"
    )]
    BadEndpoint(String),
    #[error("invalid score request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub query: String,
    pub candidates: Vec<Candidate>,
}

impl ScoreRequest {
    pub fn validate(&self) -> Result<(), ScorerError> {
        if self.candidates.is_empty() {
            return Err(ScorerError::InvalidRequest("no candidates".into()));
        }
        let mut ids: Vec<&str> = self.candidates.iter().map(|c| c.doc_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ScorerError::InvalidRequest(format!(
                "duplicate candidate `{}`",
                w[0]
            )));
        }
        Ok(())
    }

    /// Single-line wire form, without the trailing newline.
    pub fn to_frame(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub id: String,
    pub scores: Vec<f64>,
}

/// Any frame a peer may send back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseFrame {
    Scores { id: String, scores: Vec<f64> },
    Error { id: String, error: String },
}

/// Checks a response line against the request it answers.
pub fn parse_response(line: &str, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
    let frame: ResponseFrame = serde_json::from_str(line).map_err(|e| {
        ScorerError::Protocol(format!(
            "unparseable response frame ({e}): {}",
            truncate(line)
        ))
    })?;
    match frame {
        ResponseFrame::Error { error, .. } => Err(ScorerError::Remote(error)),
        ResponseFrame::Scores { id, scores } => {
            if id != req.id {
                return Err(ScorerError::Protocol(format!(
                    "response id `{id}` does not match request id `{}`",
                    req.id
                )));
            }
            if scores.len() != req.candidates.len() {
                return Err(ScorerError::Protocol(format!(
                    "{} scores for {} candidates",
                    scores.len(),
                    req.candidates.len()
                )));
            }
            Ok(ScoreResponse { id, scores })
        }
    }
}

fn truncate(line: &str) -> String {
    line.chars().take(120).collect()
}

/// Where an external scorer lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Endpoint {
    /// Child process; arguments are split on whitespace.
    Command {
        program: String,
        args: Vec<String>,
    },
    Tcp(String),
}

impl FromStr for Endpoint {
    type Err = ScorerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(cmd) = s.strip_prefix("cmd:") {
            let mut parts = cmd.split_whitespace().map(str::to_string);
            let program = parts
                .next()
                .ok_or_else(|| ScorerError::BadEndpoint(s.to_string()))?;
            Ok(Endpoint::Command {
                program,
                args: parts.collect(),
            })
        } else if let Some(addr) = s.strip_prefix("tcp:") {
            if addr
                .rsplit_once(':')
                .is_none_or(|(h, p)| h.is_empty() || p.parse::<u16>().is_err())
            {
                return Err(ScorerError::BadEndpoint(s.to_string()));
            }
            Ok(Endpoint::Tcp(addr.to_string()))
        } else {
            Err(ScorerError::BadEndpoint(s.to_string()))
        }
    }
}

impl TryFrom<String> for Endpoint {
    type Error = ScorerError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Endpoint> for String {
    fn from(e: Endpoint) -> Self {
        e.to_string()
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Command { program, args } => {
                write!(f, "cmd:{program}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
            Endpoint::Tcp(addr) => write!(f, "tcp:{addr}"),
        }
    }
}

/// An open connection; one request in flight at a time.
pub struct Connection {
    writer: Box<dyn Write + Send>,
    responses: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    tcp: Option<TcpStream>,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Connection")
            .field("child", &self.child.as_ref().map(Child::id))
            .field("tcp", &self.tcp.as_ref().and_then(|s| s.peer_addr().ok()))
            .finish()
    }
}

impl Connection {
    pub fn open(endpoint: &Endpoint) -> Result<Self, ScorerError> {
        let connect_err = |source| ScorerError::Connect {
            endpoint: endpoint.to_string(),
            source,
        };
        match endpoint {
            Endpoint::Command { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(connect_err)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Self {
                    writer: Box::new(stdin),
                    responses: spawn_reader(stdout),
                    child: Some(child),
                    tcp: None,
                })
            }
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(connect_err)?;
                stream.set_nodelay(true).ok();
                let reader = stream.try_clone().map_err(connect_err)?;
                let writer = stream.try_clone().map_err(connect_err)?;
                Ok(Self {
                    writer: Box::new(writer),
                    responses: spawn_reader(reader),
                    child: None,
                    tcp: Some(stream),
                })
            }
        }
    }

    /// Sends one request and waits up to `timeout` for its response.
    pub fn score(
        &mut self,
        req: &ScoreRequest,
        timeout: Duration,
    ) -> Result<ScoreResponse, ScorerError> {
        req.validate()?;
        let mut frame = req.to_frame();
        frame.push('\n');
        self.writer.write_all(frame.as_bytes())?;
        self.writer.flush()?;
        let line = match self.responses.recv_timeout(timeout) {
            Ok(line) => line?,
            Err(RecvTimeoutError::Timeout) => {
                return Err(ScorerError::Timeout(timeout.as_millis() as u64))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(ScorerError::Protocol("scorer closed the stream".into()));
            }
        };
        parse_response(&line, req)
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(stream) = &self.tcp {
            let _ = stream.shutdown(Shutdown::Both);
        }
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn spawn_reader<R: Read + Send + 'static>(source: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(source);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    let trimmed = line.trim_end_matches(['\n', '\r']);
                    if trimmed.is_empty() {
                        continue;
                    }
                    if tx.send(Ok(trimmed.to_string())).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

/// Opens a fresh connection, scores one request and closes it.
pub fn score_external(
    endpoint: &Endpoint,
    req: &ScoreRequest,
    timeout_ms: u64,
) -> Result<ScoreResponse, ScorerError> {
    Connection::open(endpoint)?.score(req, Duration::from_millis(timeout_ms))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(n: usize) -> ScoreRequest {
        ScoreRequest {
            id: "q1".into(),
            query: "bile salts".into(),
            candidates: (0..n)
                .map(|i| Candidate {
                    doc_id: format!("u{i}"),
                    text: format!("text {i}"),
                })
                .collect(),
        }
    }

    #[test]
    fn request_frame_is_compact_single_line() {
        let req = ScoreRequest {
            id: "q1".into(),
            query: "naïve \"quote\"\nx".into(),
            candidates: vec![Candidate {
                doc_id: "u1".into(),
                text: "T A".into(),
            }],
        };
        assert_eq!(
            req.to_frame(),
            r#"{"id":"q1","query":"naïve \"quote\"\nx","candidates":[{"doc_id":"u1","text":"T A"}]}"#
        );
    }

    #[test]
    fn response_validation() {
        let req = request(3);
        let ok = parse_response(r#"{"id":"q1","scores":[0,1,2.5]}"#, &req).unwrap();
        assert_eq!(ok.scores, [0.0, 1.0, 2.5]);
        assert!(matches!(
            parse_response(r#"{"id":"q1","scores":[0,1]}"#, &req),
            Err(ScorerError::Protocol(_))
        ));
        assert!(matches!(
            parse_response(r#"{"id":"q2","scores":[0,1,2]}"#, &req),
            Err(ScorerError::Protocol(_))
        ));
        assert!(matches!(
            parse_response("not json", &req),
            Err(ScorerError::Protocol(_))
        ));
        match parse_response(r#"{"id":"unknown","error":"boom"}"#, &req) {
            Err(ScorerError::Remote(msg)) => assert_eq!(msg, "boom"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn request_validation() {
        assert!(request(0).validate().is_err());
        let mut dup = request(2);
        dup.candidates[1].doc_id = "u0".into();
        assert!(dup.validate().is_err());
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            "cmd:python3 sidecar.py --model echo"
                .parse::<Endpoint>()
                .unwrap(),
            Endpoint::Command {
                program: "python3".into(),
                args: vec!["sidecar.py".into(), "--model".into(), "echo".into()],
            }
        );
        assert_eq!(
            "tcp:127.0.0.1:7000".parse::<Endpoint>().unwrap(),
            Endpoint::Tcp("127.0.0.1:7000".into())
        );
        for bad in [
            "cmd:",
            "tcp:nohost",
            "tcp::80",
            "http://x",
            "tcp:h:notaport",
        ] {
            assert!(bad.parse::<Endpoint>().is_err(), "{bad}");
        }
        let e: Endpoint = "cmd:a b".parse().unwrap();
        assert_eq!(e.to_string(), "cmd:a b");
    }
}
