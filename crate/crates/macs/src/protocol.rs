//! Newline-delimited JSON protocol for external editor and evaluator
//! workers.
//!
//! The engine opens with `hello`, then sends `edit` or `eval` requests one
//! at a time with strictly increasing ids, and closes with `shutdown`. Any
//! reply that does not parse, carries the wrong id or the wrong number of
//! items abandons the connection.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use macs_core::attr::{AttributeVector, ThresholdWindow};
use macs_core::editors::{EditRequest, Editor};
use macs_core::eval::{Evaluator, EvaluatorSpec, ScoredSequence};
use macs_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const PROTOCOL_VERSION: u64 = 1;

/// Milliseconds to wait for a worker to start or answer.
pub const TIMEOUT_ENV: &str = "MACS_WORKER_TIMEOUT_MS";

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

pub fn timeout_from_env() -> Duration {
    std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map_or(DEFAULT_TIMEOUT, Duration::from_millis)
}

type CoreResult<T> = macs_core::Result<T>;

fn protocol(msg: impl Into<String>) -> CoreError {
    CoreError::Protocol(msg.into())
}

fn bridge(msg: impl Into<String>) -> CoreError {
    CoreError::Bridge(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    #[serde(rename = "type")]
    pub kind: String,
    pub protocol: u64,
    pub roles: Vec<String>,
    #[serde(default)]
    pub attr_ids: Vec<String>,
}

/// A sequence with its attributes keyed by attribute id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSequence {
    pub seq: String,
    pub attrs: BTreeMap<String, f64>,
}

impl WireSequence {
    pub fn new(s: &ScoredSequence, attr_ids: &[String]) -> Self {
        Self {
            seq: s.seq.clone(),
            attrs: attr_ids.iter().cloned().zip(s.attrs.values().iter().copied()).collect(),
        }
    }

    /// Attribute vector in `attr_ids` order.
    pub fn vector(&self, attr_ids: &[String]) -> CoreResult<AttributeVector> {
        attr_ids
            .iter()
            .map(|id| self.attrs.get(id).copied().ok_or_else(|| protocol(format!("missing attribute `{id}`"))))
            .collect::<CoreResult<Vec<_>>>()
            .map(AttributeVector::new)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditMessage {
    pub id: u64,
    #[serde(rename = "type")]
    pub kind: String,
    pub episode_id: String,
    pub context: String,
    pub anchor: Option<WireSequence>,
    pub current: WireSequence,
    pub target: Vec<ThresholdWindow>,
    pub n_candidates: usize,
    pub seed: u64,
}

impl EditMessage {
    pub fn new(id: u64, request: &EditRequest, attr_ids: &[String]) -> Self {
        Self {
            id,
            kind: "edit".into(),
            episode_id: request.episode_id.clone(),
            context: request.context.clone(),
            anchor: request.anchor.as_ref().map(|a| WireSequence::new(a, attr_ids)),
            current: WireSequence::new(&request.current, attr_ids),
            target: request.target.windows.clone(),
            n_candidates: request.n_candidates,
            seed: request.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMessage {
    pub id: u64,
    #[serde(rename = "type")]
    pub kind: String,
    pub attr_id: String,
    pub sequences: Vec<String>,
}

/// One worker connection. Replies are read on a background thread so
/// every wait honours the timeout.
pub struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    next_id: u64,
    timeout: Duration,
    child: Option<Child>,
    broken: Option<String>,
    peer: Option<Hello>,
}

impl Connection {
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        child: Option<Child>,
        timeout: Duration,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self {
            writer: Box::new(writer),
            lines: rx,
            next_id: 1,
            timeout,
            child,
            broken: None,
            peer: None,
        }
    }

    /// Launches `command` with piped standard streams.
    pub fn spawn(command: &[String], env: &[(String, String)], timeout: Duration) -> CoreResult<Self> {
        let (program, args) = command.split_first().ok_or_else(|| CoreError::Config("empty worker command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .envs(env.iter().map(|(k, v)| (k, v)))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| bridge(format!("cannot launch `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self::from_streams(stdout, stdin, Some(child), timeout))
    }

    pub fn connect(address: &str, timeout: Duration) -> CoreResult<Self> {
        let stream = TcpStream::connect(address).map_err(|e| bridge(format!("cannot connect to {address}: {e}")))?;
        let reader = stream.try_clone().map_err(|e| bridge(e.to_string()))?;
        Ok(Self::from_streams(reader, stream, None, timeout))
    }

    pub fn peer(&self) -> Option<&Hello> {
        self.peer.as_ref()
    }

    fn check_open(&self) -> CoreResult<()> {
        match &self.broken {
            Some(why) => Err(bridge(format!("connection abandoned: {why}"))),
            None => Ok(()),
        }
    }

    fn abandon<T>(&mut self, err: CoreError) -> CoreResult<T> {
        self.broken = Some(err.to_string());
        Err(err)
    }

    fn send(&mut self, message: &impl Serialize) -> CoreResult<()> {
        let mut line = serde_json::to_string(message).map_err(|e| protocol(e.to_string()))?;
        line.push('\n');
        let sent = self.writer.write_all(line.as_bytes()).and_then(|()| self.writer.flush());
        match sent {
            Ok(()) => Ok(()),
            Err(e) => self.abandon(bridge(format!("write failed: {e}"))),
        }
    }

    fn recv(&mut self) -> CoreResult<Value> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return self.abandon(bridge(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return self.abandon(bridge(format!("no reply within {} ms", self.timeout.as_millis())))
            }
            Err(RecvTimeoutError::Disconnected) => return self.abandon(bridge("worker closed the connection")),
        };
        match serde_json::from_str(&line) {
            Ok(v) => Ok(v),
            Err(e) => self.abandon(protocol(format!("malformed reply: {e}"))),
        }
    }

    pub fn handshake(&mut self, roles: &[&str], attr_ids: &[String]) -> CoreResult<Hello> {
        self.check_open()?;
        self.send(&Hello {
            kind: "hello".into(),
            protocol: PROTOCOL_VERSION,
            roles: roles.iter().map(|r| r.to_string()).collect(),
            attr_ids: attr_ids.to_vec(),
        })?;
        let reply = self.recv()?;
        let hello: Hello = match serde_json::from_value(reply) {
            Ok(h) => h,
            Err(e) => return self.abandon(protocol(format!("bad hello: {e}"))),
        };
        if hello.kind != "hello" {
            return self.abandon(protocol(format!("expected hello, got `{}`", hello.kind)));
        }
        if hello.protocol != PROTOCOL_VERSION {
            return self.abandon(protocol(format!("worker speaks protocol {}", hello.protocol)));
        }
        for role in roles {
            if !hello.roles.iter().any(|r| r == role) {
                return self.abandon(protocol(format!("worker does not offer role `{role}`")));
            }
        }
        self.peer = Some(hello.clone());
        Ok(hello)
    }

    /// Sends one request and returns the matching reply object.
    fn request(&mut self, build: impl FnOnce(u64) -> Value) -> CoreResult<Value> {
        self.check_open()?;
        if self.peer.is_none() {
            return Err(protocol("request before handshake"));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.send(&build(id))?;
        let reply = self.recv()?;
        if reply.get("id").and_then(Value::as_u64) != Some(id) {
            return self.abandon(protocol(format!("reply id {} does not match request {id}", reply["id"])));
        }
        if reply.get("type").and_then(Value::as_str) == Some("error") {
            let message = reply.get("message").and_then(Value::as_str).unwrap_or("unspecified");
            return Err(bridge(format!("worker error: {message}")));
        }
        Ok(reply)
    }

    pub fn edit(&mut self, request: &EditRequest, attr_ids: &[String]) -> CoreResult<Vec<String>> {
        let reply = self.request(|id| json!(EditMessage::new(id, request, attr_ids)))?;
        let candidates: Vec<String> = match reply.get("candidates").cloned().map(serde_json::from_value) {
            Some(Ok(c)) => c,
            _ => return self.abandon(protocol("edit reply without a candidate list")),
        };
        if candidates.len() != request.n_candidates {
            return self.abandon(protocol(format!(
                "{} candidates for n_candidates = {}",
                candidates.len(),
                request.n_candidates
            )));
        }
        Ok(candidates)
    }

    pub fn eval(&mut self, attr_id: &str, sequences: &[&str]) -> CoreResult<Vec<f64>> {
        let reply = self.request(|id| {
            json!(EvalMessage {
                id,
                kind: "eval".into(),
                attr_id: attr_id.into(),
                sequences: sequences.iter().map(|s| s.to_string()).collect(),
            })
        })?;
        let values: Vec<f64> = match reply.get("values").cloned().map(serde_json::from_value) {
            Some(Ok(v)) => v,
            _ => return self.abandon(protocol("eval reply without a value list")),
        };
        if values.len() != sequences.len() {
            return self.abandon(protocol(format!("{} values for {} sequences", values.len(), sequences.len())));
        }
        Ok(values)
    }

    pub fn shutdown(&mut self) {
        if self.broken.is_none() {
            let _ = self.send(&json!({"type": "shutdown"}));
            self.broken = Some("shut down".into());
        }
        // Closing our end lets a worker blocked on input see EOF.
        self.writer = Box::new(io::sink());
        if let Some(mut child) = self.child.take() {
            let deadline = Instant::now() + Duration::from_secs(2);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// How to reach a worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Launch {
    Command {
        command: Vec<String>,
        #[serde(default)]
        env: Vec<(String, String)>,
    },
    Tcp {
        address: String,
    },
}

/// Lazily opened connections, one slot per pool thread so an episode stays
/// pinned to one worker. Failed connections are reopened and the request
/// retried up to `retries` times.
pub struct WorkerPool {
    launch: Launch,
    roles: Vec<&'static str>,
    attr_ids: Vec<String>,
    timeout: Duration,
    retries: usize,
    slots: Vec<Mutex<Option<Connection>>>,
}

impl WorkerPool {
    pub fn new(launch: Launch, roles: Vec<&'static str>, attr_ids: Vec<String>, slots: usize) -> Self {
        Self {
            launch,
            roles,
            attr_ids,
            timeout: timeout_from_env(),
            retries: 1,
            slots: (0..slots.max(1)).map(|_| Mutex::new(None)).collect(),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn attr_ids(&self) -> &[String] {
        &self.attr_ids
    }

    fn open(&self) -> CoreResult<Connection> {
        let mut conn = match &self.launch {
            Launch::Command { command, env } => Connection::spawn(command, env, self.timeout)?,
            Launch::Tcp { address } => Connection::connect(address, self.timeout)?,
        };
        conn.handshake(&self.roles, &self.attr_ids)?;
        Ok(conn)
    }

    pub fn with_connection<T>(&self, mut f: impl FnMut(&mut Connection) -> CoreResult<T>) -> CoreResult<T> {
        let slot = rayon::current_thread_index().unwrap_or(0) % self.slots.len();
        let mut guard = self.slots[slot].lock().unwrap_or_else(|p| p.into_inner());
        let mut attempt = 0;
        loop {
            if guard.is_none() {
                *guard = Some(self.open()?);
            }
            let result = f(guard.as_mut().unwrap());
            match result {
                Err(CoreError::Protocol(_) | CoreError::Bridge(_)) if attempt < self.retries => {
                    log::warn!("worker failed ({}); reconnecting", result.as_ref().err().unwrap());
                    *guard = None;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// An editor served by external workers.
pub struct ExternalEditor {
    pool: Arc<WorkerPool>,
}

impl ExternalEditor {
    pub fn new(pool: Arc<WorkerPool>) -> Self {
        Self { pool }
    }
}

impl Editor for ExternalEditor {
    fn propose(&self, request: &EditRequest) -> CoreResult<Vec<String>> {
        let ids = self.pool.attr_ids().to_vec();
        self.pool.with_connection(|c| c.edit(request, &ids))
    }
}

/// An attribute evaluator served by external workers.
pub struct ExternalEvaluator {
    spec: EvaluatorSpec,
    pool: Arc<WorkerPool>,
}

impl ExternalEvaluator {
    pub fn new(spec: EvaluatorSpec, pool: Arc<WorkerPool>) -> Self {
        Self { spec, pool }
    }
}

impl Evaluator for ExternalEvaluator {
    fn spec(&self) -> &EvaluatorSpec {
        &self.spec
    }

    fn raw_batch(&self, seqs: &[&str]) -> CoreResult<Vec<f64>> {
        let attr = self.spec.spec.id.clone();
        self.pool.with_connection(|c| c.eval(&attr, seqs))
    }
}

/// Misbehaviours the echo worker can be told to exhibit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum EchoFault {
    #[default]
    None,
    /// One candidate or value too few.
    Short,
    /// Replies carry the next id.
    BadId,
    /// Replies are not JSON.
    Malformed,
    /// The hello advertises protocol 2.
    BadProtocol,
    /// Replies never arrive.
    Silent,
}

/// Fixture worker: edits echo `current`, evaluations return `value`.
pub fn serve_echo(reader: impl BufRead, mut writer: impl Write, fault: EchoFault, value: f64) -> io::Result<()> {
    let mut greeted = false;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let msg: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                writeln!(writer, "{}", json!({"id": null, "type": "error", "message": e.to_string()}))?;
                writer.flush()?;
                continue;
            }
        };
        let id = msg.get("id").cloned().unwrap_or(Value::Null);
        let kind = msg.get("type").and_then(Value::as_str).unwrap_or("");
        let reply = match kind {
            "hello" => {
                greeted = true;
                let protocol = if fault == EchoFault::BadProtocol { 2 } else { PROTOCOL_VERSION };
                json!({"type": "hello", "protocol": protocol, "roles": ["editor", "evaluator"]})
            }
            "shutdown" => break,
            _ if !greeted => json!({"id": id, "type": "error", "message": "handshake required"}),
            _ if fault == EchoFault::Silent => continue,
            "edit" => {
                let n = msg.get("n_candidates").and_then(Value::as_u64).unwrap_or(0) as usize;
                let current = msg["current"]["seq"].as_str().unwrap_or("").to_string();
                let n = if fault == EchoFault::Short { n.saturating_sub(1) } else { n };
                json!({"id": reply_id(&id, fault), "candidates": vec![current; n]})
            }
            "eval" => {
                let n = msg.get("sequences").and_then(Value::as_array).map_or(0, Vec::len);
                let n = if fault == EchoFault::Short { n.saturating_sub(1) } else { n };
                json!({"id": reply_id(&id, fault), "values": vec![value; n]})
            }
            other => json!({"id": id, "type": "error", "message": format!("unknown message type `{other}`")}),
        };
        if fault == EchoFault::Malformed && kind != "hello" {
            writeln!(writer, "{{not json")?;
        } else {
            writeln!(writer, "{reply}")?;
        }
        writer.flush()?;
    }
    Ok(())
}

fn reply_id(id: &Value, fault: EchoFault) -> Value {
    match (fault, id.as_u64()) {
        (EchoFault::BadId, Some(n)) => json!(n + 1),
        _ => id.clone(),
    }
}
