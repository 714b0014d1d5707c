//! Line-delimited JSON bridge to external classifiers.
//!
//! Every line is one JSON object. The server speaks first with a handshake
//! `{"classes":[..],"max_batch":N}`; afterwards the client sends
//! `{"id":I,"batch":[[tok,..],..]}` and waits for `{"id":I,"scores":[[..],..]}`
//! before sending the next request.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, OsvError, Result};
use crate::model::SequenceModel;
use crate::reference_models::in_process_model;
use crate::vocab::{Symbol, Vocabulary};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);
pub const MAX_ATTEMPTS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Handshake {
    pub classes: Vec<String>,
    pub max_batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub id: u64,
    pub batch: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    pub id: u64,
    pub scores: Vec<Vec<f64>>,
}

/// Sent by a server in place of a [`Response`] when a request is rejected.
/// `id` is null when the offending line carried no readable id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorResponse {
    pub id: Option<u64>,
    pub error: String,
}

/// Serializes one message as a single line without the trailing newline.
pub fn encode<T: Serialize>(msg: &T) -> String {
    serde_json::to_string(msg).expect("bridge messages always serialize")
}

/// Validates a handshake: at least two classes and a positive batch size.
pub fn parse_handshake(line: &str) -> Result<Handshake, ModelError> {
    let hs: Handshake = serde_json::from_str(line.trim_end())
        .map_err(|e| ModelError::Protocol(format!("malformed handshake {line:?}: {e}")))?;
    if hs.classes.len() < 2 {
        return Err(ModelError::Protocol(format!(
            "handshake declares {} class(es); at least 2 required",
            hs.classes.len()
        )));
    }
    if hs.max_batch == 0 {
        return Err(ModelError::Protocol("handshake declares max_batch 0".into()));
    }
    Ok(hs)
}

/// Checks a response line against the request it answers.
pub fn parse_response(line: &str, id: u64, rows: usize, classes: usize) -> Result<Vec<Vec<f64>>, ModelError> {
    let line = line.trim_end();
    let resp: Response = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => {
            if let Ok(err) = serde_json::from_str::<ErrorResponse>(line) {
                return Err(ModelError::Protocol(format!(
                    "server rejected request {:?}: {}",
                    err.id, err.error
                )));
            }
            return Err(ModelError::Protocol(format!("malformed response {line:?}: {e}")));
        }
    };
    if resp.id != id {
        return Err(ModelError::Protocol(format!(
            "response id {} does not match request id {id}",
            resp.id
        )));
    }
    if resp.scores.len() != rows {
        return Err(ModelError::Protocol(format!(
            "short response: {} rows for a batch of {rows}",
            resp.scores.len()
        )));
    }
    for (i, row) in resp.scores.iter().enumerate() {
        if row.len() != classes {
            return Err(ModelError::Protocol(format!(
                "row {i} has {} scores, expected {classes}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Protocol(format!("row {i} contains a non-finite score")));
        }
    }
    Ok(resp.scores)
}

/// Where a classifier lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelEndpoint {
    /// A name understood by [`in_process_model`].
    InProcess(String),
    /// Program and arguments; the child speaks the protocol on stdio.
    Subprocess(Vec<String>),
    Tcp { host: String, port: u16 },
}

impl ModelEndpoint {
    /// `subprocess:<command line>`, `tcp:<host>:<port>`, otherwise an
    /// in-process model name. Command lines are split on whitespace.
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(cmd) = spec.strip_prefix("subprocess:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_owned).collect();
            if argv.is_empty() {
                return Err(OsvError::Config("empty subprocess command".into()));
            }
            return Ok(Self::Subprocess(argv));
        }
        if let Some(addr) = spec.strip_prefix("tcp:") {
            let (host, port) = addr
                .rsplit_once(':')
                .ok_or_else(|| OsvError::Config(format!("expected tcp:<host>:<port>, got {spec:?}")))?;
            let port = port
                .parse()
                .map_err(|_| OsvError::Config(format!("bad tcp port in {spec:?}")))?;
            return Ok(Self::Tcp {
                host: host.to_owned(),
                port,
            });
        }
        Ok(Self::InProcess(spec.to_owned()))
    }

    /// In-process models may intern rule tokens into `vocab`.
    pub fn connect(&self, vocab: &mut Vocabulary, timeout: Duration) -> Result<Box<dyn SequenceModel>> {
        match self {
            Self::InProcess(name) => in_process_model(name, vocab),
            _ => Ok(Box::new(BridgeClient::connect(self.clone(), timeout)?)),
        }
    }
}

/// One live connection. Lines arrive through a reader thread so that reads
/// can time out.
struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    child: Option<Child>,
    /// Shut down on drop; the reader thread's clone would keep it open.
    socket: Option<TcpStream>,
    timeout: Duration,
}

impl Connection {
    fn open(endpoint: &ModelEndpoint, timeout: Duration) -> Result<Self, ModelError> {
        let transport = |message: String| ModelError::Transport {
            phase: "connect",
            message,
        };
        let mut socket = None;
        let (reader, writer, child): (Box<dyn io::Read + Send>, Box<dyn Write + Send>, _) = match endpoint {
            ModelEndpoint::Subprocess(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| transport(format!("cannot start {:?}: {e}", argv[0])))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdout), Box::new(stdin), Some(child))
            }
            ModelEndpoint::Tcp { host, port } => {
                let addr = (host.as_str(), *port)
                    .to_socket_addrs()
                    .map_err(|e| transport(format!("cannot resolve {host}:{port}: {e}")))?
                    .next()
                    .ok_or_else(|| transport(format!("{host}:{port} resolves to nothing")))?;
                let stream = TcpStream::connect_timeout(&addr, timeout)
                    .map_err(|e| transport(format!("cannot connect to {addr}: {e}")))?;
                let _ = stream.set_nodelay(true);
                let read_half = stream
                    .try_clone()
                    .map_err(|e| transport(format!("cannot clone socket: {e}")))?;
                socket = stream.try_clone().ok();
                (Box::new(read_half), Box::new(stream), None)
            }
            ModelEndpoint::InProcess(name) => {
                return Err(ModelError::Protocol(format!("{name:?} is not a bridged endpoint")))
            }
        };
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                if tx.send(line).is_err() {
                    return;
                }
            }
        });
        Ok(Self {
            writer,
            lines: rx,
            child,
            socket,
            timeout,
        })
    }

    fn recv(&self, phase: &'static str) -> Result<String, ModelError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(ModelError::Transport {
                phase,
                message: e.to_string(),
            }),
            Err(RecvTimeoutError::Timeout) => Err(ModelError::Timeout {
                phase,
                millis: self.timeout.as_millis(),
            }),
            Err(RecvTimeoutError::Disconnected) => Err(ModelError::Transport {
                phase,
                message: "endpoint closed the connection".into(),
            }),
        }
    }

    fn send(&mut self, line: &str) -> Result<(), ModelError> {
        let transport = |e: io::Error| ModelError::Transport {
            phase: "request",
            message: e.to_string(),
        };
        self.writer.write_all(line.as_bytes()).map_err(transport)?;
        self.writer.write_all(b"\n").map_err(transport)?;
        self.writer.flush().map_err(transport)
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(socket) = &self.socket {
            let _ = socket.shutdown(Shutdown::Both);
        }
        if let Some(child) = self.child.as_mut() {
            // Closing stdin lets a well-behaved server exit; kill covers the rest.
            self.writer = Box::new(io::sink());
            if !matches!(child.try_wait(), Ok(Some(_))) {
                let _ = child.kill();
            }
            let _ = child.wait();
        }
    }
}

struct ClientState {
    conn: Option<Connection>,
    next_id: u64,
}

/// Client side of the bridge. Requests are serialized over one connection;
/// transport failures reconnect and retry up to [`MAX_ATTEMPTS`] times.
pub struct BridgeClient {
    endpoint: ModelEndpoint,
    timeout: Duration,
    classes: Vec<String>,
    max_batch: usize,
    state: Mutex<ClientState>,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient")
            .field("endpoint", &self.endpoint)
            .field("classes", &self.classes)
            .field("max_batch", &self.max_batch)
            .finish_non_exhaustive()
    }
}

fn handshake(endpoint: &ModelEndpoint, timeout: Duration) -> Result<(Connection, Handshake), ModelError> {
    let conn = Connection::open(endpoint, timeout)?;
    let line = conn.recv("handshake")?;
    let hs = parse_handshake(&line)?;
    Ok((conn, hs))
}

impl BridgeClient {
    pub fn connect(endpoint: ModelEndpoint, timeout: Duration) -> Result<Self, ModelError> {
        let mut attempt = 0;
        let (conn, hs) = loop {
            attempt += 1;
            match handshake(&endpoint, timeout) {
                Ok(ok) => break ok,
                Err(e) if e.is_transient() && attempt < MAX_ATTEMPTS => continue,
                Err(e) => return Err(e),
            }
        };
        Ok(Self {
            endpoint,
            timeout,
            classes: hs.classes,
            max_batch: hs.max_batch,
            state: Mutex::new(ClientState {
                conn: Some(conn),
                next_id: 1,
            }),
        })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    fn round_trip(&self, state: &mut ClientState, batch: &[Vec<String>]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let id = state.next_id;
            state.next_id += 1;
            match self.try_round_trip(state, id, batch) {
                Ok(scores) => return Ok(scores),
                Err(e) if e.is_transient() && attempt < MAX_ATTEMPTS => {
                    state.conn = None;
                }
                Err(e) => {
                    state.conn = None;
                    return Err(e);
                }
            }
        }
    }

    fn try_round_trip(&self, state: &mut ClientState, id: u64, batch: &[Vec<String>]) -> Result<Vec<Vec<f64>>, ModelError> {
        if state.conn.is_none() {
            let (conn, hs) = handshake(&self.endpoint, self.timeout)?;
            if hs.classes != self.classes {
                return Err(ModelError::Protocol(format!(
                    "reconnected endpoint changed classes from {:?} to {:?}",
                    self.classes, hs.classes
                )));
            }
            state.conn = Some(conn);
        }
        let conn = state.conn.as_mut().expect("connection established above");
        let request = Request {
            id,
            batch: batch.to_vec(),
        };
        conn.send(&encode(&request))?;
        let line = conn.recv("response")?;
        parse_response(&line, id, batch.len(), self.classes.len())
    }
}

impl SequenceModel for BridgeClient {
    fn class_labels(&self) -> &[String] {
        &self.classes
    }

    fn max_batch(&self) -> usize {
        self.max_batch
    }

    fn score_batch(&self, vocab: &Vocabulary, batch: &[&[Symbol]]) -> Result<Vec<Vec<f64>>, ModelError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let mut state = self
            .state
            .lock()
            .map_err(|_| ModelError::Protocol("bridge client poisoned by an earlier panic".into()))?;
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(self.max_batch) {
            let words: Vec<Vec<String>> = chunk
                .iter()
                .map(|s| vocab.names(s).map(str::to_owned).collect())
                .collect();
            out.extend(self.round_trip(&mut state, &words)?);
        }
        Ok(out)
    }
}

/// Scores one batch of whitespace tokens. Used by [`serve_lines`].
pub type BatchScorer<'a> = dyn FnMut(&[Vec<String>]) -> std::result::Result<Vec<Vec<f64>>, String> + 'a;

/// Server half of the protocol: emits the handshake, then answers each
/// request line until `input` closes. Rejected lines get an
/// [`ErrorResponse`]; the return value counts them.
pub fn serve_lines<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    handshake: &Handshake,
    score: &mut BatchScorer<'_>,
) -> io::Result<usize> {
    writeln!(output, "{}", encode(handshake))?;
    output.flush()?;
    let mut rejected = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(req) if req.batch.len() > handshake.max_batch => Err(ErrorResponse {
                id: Some(req.id),
                error: format!("batch of {} exceeds max_batch {}", req.batch.len(), handshake.max_batch),
            }),
            Ok(req) => match score(&req.batch) {
                Ok(scores) => Ok(Response { id: req.id, scores }),
                Err(error) => Err(ErrorResponse { id: Some(req.id), error }),
            },
            Err(e) => Err(ErrorResponse {
                id: serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64)),
                error: format!("malformed request: {e}"),
            }),
        };
        match reply {
            Ok(resp) => writeln!(output, "{}", encode(&resp))?,
            Err(err) => {
                rejected += 1;
                writeln!(output, "{}", encode(&err))?;
            }
        }
        output.flush()?;
    }
    Ok(rejected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_field_names() {
        let hs = Handshake {
            classes: vec!["neg".into(), "pos".into()],
            max_batch: 64,
        };
        assert_eq!(encode(&hs), r#"{"classes":["neg","pos"],"max_batch":64}"#);
        let req = Request {
            id: 7,
            batch: vec![vec!["good".into(), "movie".into()]],
        };
        assert_eq!(encode(&req), r#"{"id":7,"batch":[["good","movie"]]}"#);
        let resp = Response {
            id: 7,
            scores: vec![vec![0.5, 0.5]],
        };
        assert_eq!(encode(&resp), r#"{"id":7,"scores":[[0.5,0.5]]}"#);
    }

    #[test]
    fn handshake_validation() {
        assert!(parse_handshake(r#"{"classes":["a","b"],"max_batch":1}"#).is_ok());
        assert!(parse_handshake(r#"{"classes":["only"],"max_batch":64}"#).is_err());
        assert!(parse_handshake(r#"{"classes":["a","b"],"max_batch":0}"#).is_err());
        assert!(parse_handshake(r#"{"classes":["a","b"],"max_batch":4,"extra":1}"#).is_err());
        assert!(parse_handshake("not json").is_err());
    }

    #[test]
    fn response_validation() {
        assert_eq!(
            parse_response(r#"{"id":3,"scores":[[0.25,0.75]]}"#, 3, 1, 2).unwrap(),
            vec![vec![0.25, 0.75]]
        );
        let cases = [
            r#"{"id":4,"scores":[[0.25,0.75]]}"#,
            r#"{"id":3,"scores":[]}"#,
            r#"{"id":3,"scores":[[0.25]]}"#,
            r#"{"id":3,"scores":[[0.25,null]]}"#,
            r#"{"id":3,"error":"boom"}"#,
        ];
        for line in cases {
            let err = parse_response(line, 3, 1, 2).unwrap_err();
            assert!(matches!(err, ModelError::Protocol(_)), "{line}: {err}");
        }
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!(ModelEndpoint::parse("rule:task1").unwrap(), ModelEndpoint::InProcess("rule:task1".into()));
        assert_eq!(
            ModelEndpoint::parse("subprocess:python3 server.py --model stub").unwrap(),
            ModelEndpoint::Subprocess(vec!["python3".into(), "server.py".into(), "--model".into(), "stub".into()])
        );
        assert_eq!(
            ModelEndpoint::parse("tcp:localhost:9000").unwrap(),
            ModelEndpoint::Tcp {
                host: "localhost".into(),
                port: 9000
            }
        );
        assert!(ModelEndpoint::parse("tcp:localhost").is_err());
        assert!(ModelEndpoint::parse("subprocess:  ").is_err());
    }

    #[test]
    fn server_loop_answers_in_order() {
        let hs = Handshake {
            classes: vec!["neg".into(), "pos".into()],
            max_batch: 2,
        };
        let input = concat!(
            r#"{"id":1,"batch":[["a"]]}"#,
            "\n",
            r#"{"id":2,"batch":[["a"],["b"],["c"]]}"#,
            "\n",
            r#"{"id":3,"bad":1}"#,
            "\n",
            "garbage\n",
        );
        let mut out = Vec::new();
        let mut scorer = |b: &[Vec<String>]| Ok(b.iter().map(|_| vec![0.0, 1.0]).collect());
        let rejected = serve_lines(input.as_bytes(), &mut out, &hs, &mut scorer).unwrap();
        assert_eq!(rejected, 3);
        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines[0], r#"{"classes":["neg","pos"],"max_batch":2}"#);
        assert_eq!(lines[1], r#"{"id":1,"scores":[[0.0,1.0]]}"#);
        assert!(lines[2].starts_with(r#"{"id":2,"error":"#));
        assert!(lines[3].starts_with(r#"{"id":3,"error":"#));
        assert!(lines[4].starts_with(r#"{"id":null,"error":"#));
    }
}
