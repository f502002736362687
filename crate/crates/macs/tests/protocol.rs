//! Protocol conformance, driven from the engine side against the echo
//! fixture worker (as a child process, over TCP, and in-process).

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use macs::protocol::{serve_echo, Connection, EchoFault, EditMessage, ExternalEditor, ExternalEvaluator, Launch, WorkerPool};
use macs_core::attr::AttributeSpace;
use macs_core::editors::{EditRequest, Editor};
use macs_core::eval::{Domain, Evaluator, EvaluatorKind, EvaluatorSpec, ScoredSequence, Scorer};
use macs_core::inference::{run_episode, EpisodeConfig, Strategy};
use macs_core::synth::style_scorer;
use macs_core::Error;
use serde_json::{json, Value};

const TIMEOUT: Duration = Duration::from_secs(10);

fn echo_command(fault: &str) -> Vec<String> {
    vec![
        env!("CARGO_BIN_EXE_macs").to_string(),
        "echo-worker".into(),
        "--fault".into(),
        fault.into(),
        "--value".into(),
        "3.25".into(),
    ]
}

fn spawn(fault: &str) -> Connection {
    Connection::spawn(&echo_command(fault), &[], TIMEOUT).unwrap()
}

fn ids() -> Vec<String> {
    AttributeSpace::style().ids()
}

fn request(n: usize) -> EditRequest {
    let space = AttributeSpace::style();
    EditRequest {
        episode_id: "item/combo-03".into(),
        context: String::new(),
        anchor: None,
        current: ScoredSequence::new("a fine little story", vec![3.5, -1.25], Domain::Text),
        target: space.constraint(3),
        n_candidates: n,
        seed: 42,
    }
}

#[test]
fn handshake_round_trip() {
    let mut c = spawn("none");
    let hello = c.handshake(&["editor", "evaluator"], &ids()).unwrap();
    assert_eq!(hello.protocol, 1);
    assert_eq!(c.peer().unwrap().roles, vec!["editor", "evaluator"]);
}

#[test]
fn other_protocol_versions_are_rejected() {
    let mut c = spawn("bad-protocol");
    assert!(matches!(c.handshake(&["editor"], &ids()), Err(Error::Protocol(_))));
    assert!(matches!(c.edit(&request(1), &ids()), Err(Error::Bridge(_))));
}

#[test]
fn requests_before_handshake_fail() {
    let mut c = spawn("none");
    assert!(matches!(c.edit(&request(1), &ids()), Err(Error::Protocol(_))));
}

#[test]
fn edit_returns_requested_candidates() {
    let mut c = spawn("none");
    c.handshake(&["editor"], &ids()).unwrap();
    for n in [1, 3, 7] {
        assert_eq!(c.edit(&request(n), &ids()).unwrap(), vec!["a fine little story"; n]);
    }
}

#[test]
fn short_candidate_list_is_a_protocol_error() {
    let mut c = spawn("short");
    c.handshake(&["editor"], &ids()).unwrap();
    assert!(matches!(c.edit(&request(3), &ids()), Err(Error::Protocol(_))));
    // The connection is abandoned after a protocol error.
    assert!(matches!(c.edit(&request(3), &ids()), Err(Error::Bridge(_))));
}

#[test]
fn mismatched_ids_are_a_protocol_error() {
    let mut c = spawn("bad-id");
    c.handshake(&["editor"], &ids()).unwrap();
    assert!(matches!(c.edit(&request(1), &ids()), Err(Error::Protocol(_))));
}

#[test]
fn malformed_replies_are_a_protocol_error() {
    let mut c = spawn("malformed");
    c.handshake(&["evaluator"], &ids()).unwrap();
    assert!(matches!(c.eval("sentiment", &["x"]), Err(Error::Protocol(_))));
}

#[test]
fn silent_workers_time_out() {
    let mut c = Connection::spawn(&echo_command("silent"), &[], Duration::from_millis(200)).unwrap();
    c.handshake(&["editor"], &ids()).unwrap();
    let err = c.edit(&request(1), &ids()).unwrap_err();
    assert!(matches!(&err, Error::Bridge(m) if m.contains("no reply")), "{err}");
}

#[test]
fn eval_values_and_counts() {
    let mut c = spawn("none");
    c.handshake(&["evaluator"], &ids()).unwrap();
    assert_eq!(c.eval("sentiment", &["a", "b"]).unwrap(), vec![3.25, 3.25]);
    let mut short = spawn("short");
    short.handshake(&["evaluator"], &ids()).unwrap();
    assert!(matches!(short.eval("sentiment", &["a", "b"]), Err(Error::Protocol(_))));
}

#[test]
fn missing_roles_are_rejected() {
    let mut c = spawn("none");
    assert!(matches!(c.handshake(&["ranker"], &ids()), Err(Error::Protocol(_))));
}

#[test]
fn launch_failures_are_bridge_errors() {
    let err = Connection::spawn(&["/nonexistent/worker".to_string()], &[], TIMEOUT).err().unwrap();
    assert!(matches!(err, Error::Bridge(_)));
}

#[test]
fn edit_message_wire_shape() {
    let mut req = request(2);
    req.anchor = Some(ScoredSequence::new("the start", vec![1.0, 0.0], Domain::Text));
    let v = serde_json::to_value(EditMessage::new(9, &req, &ids())).unwrap();
    assert_eq!(
        v,
        json!({
            "id": 9,
            "type": "edit",
            "episode_id": "item/combo-03",
            "context": "",
            "anchor": {"seq": "the start", "attrs": {"sentiment": 1.0, "complexity": 0.0}},
            "current": {"seq": "a fine little story", "attrs": {"sentiment": 3.5, "complexity": -1.25}},
            "target": [
                {"attr_id": "sentiment", "start": 1.0, "end": 1.5},
                {"attr_id": "complexity", "start": 0.5, "end": 1.5}
            ],
            "n_candidates": 2,
            "seed": 42
        })
    );
}

/// Records every line the engine sends, answering like the echo worker.
fn recording_worker() -> (Connection, Arc<Mutex<Vec<Value>>>) {
    let (engine_reader, mut worker_writer) = std::io::pipe().unwrap();
    let (worker_reader, engine_writer) = std::io::pipe().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for line in BufReader::new(worker_reader).lines() {
            let msg: Value = serde_json::from_str(&line.unwrap()).unwrap();
            log.lock().unwrap().push(msg.clone());
            let reply = match msg["type"].as_str().unwrap() {
                "hello" => json!({"type": "hello", "protocol": 1, "roles": ["editor"]}),
                "edit" => json!({"id": msg["id"], "candidates": vec![msg["current"]["seq"].clone(); msg["n_candidates"].as_u64().unwrap() as usize]}),
                _ => break,
            };
            writeln!(worker_writer, "{reply}").unwrap();
        }
    });
    (Connection::from_streams(engine_reader, engine_writer, None, TIMEOUT), seen)
}

#[test]
fn request_ids_strictly_increase_and_lines_are_single() {
    let (mut c, seen) = recording_worker();
    c.handshake(&["editor"], &ids()).unwrap();
    let mut req = request(1);
    req.current.seq = "line one\nline two".into();
    for _ in 0..5 {
        assert_eq!(c.edit(&req, &ids()).unwrap(), vec!["line one\nline two"]);
    }
    c.shutdown();
    thread::sleep(Duration::from_millis(50));
    let seen = seen.lock().unwrap();
    let ids: Vec<u64> = seen.iter().filter_map(|m| m["id"].as_u64()).collect();
    assert_eq!(ids, vec![1, 2, 3, 4, 5]);
    assert_eq!(seen.first().unwrap()["type"], "hello");
    assert_eq!(seen.last().unwrap()["type"], "shutdown");
}

#[test]
fn tcp_transport() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        serve_echo(reader, stream, EchoFault::None, 2.0).unwrap();
    });
    let mut c = Connection::connect(&addr, TIMEOUT).unwrap();
    c.handshake(&["editor", "evaluator"], &ids()).unwrap();
    assert_eq!(c.edit(&request(2), &ids()).unwrap().len(), 2);
    assert_eq!(c.eval("complexity", &["q"]).unwrap(), vec![2.0]);
}

#[test]
fn pool_reconnects_once_after_a_failure() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let stream = stream.unwrap();
            let fault = if i == 0 { EchoFault::BadId } else { EchoFault::None };
            thread::spawn(move || {
                let reader = BufReader::new(stream.try_clone().unwrap());
                let _ = serve_echo(reader, stream, fault, 0.0);
            });
        }
    });
    let pool = Arc::new(WorkerPool::new(Launch::Tcp { address: addr }, vec!["editor"], ids(), 1).with_timeout(TIMEOUT));
    let editor = ExternalEditor::new(pool);
    assert_eq!(editor.propose(&request(2)).unwrap().len(), 2);
}

#[test]
fn pool_gives_up_after_retries() {
    let launch = Launch::Command {
        command: echo_command("short"),
        env: vec![],
    };
    let pool = Arc::new(WorkerPool::new(launch, vec!["editor"], ids(), 2).with_timeout(TIMEOUT));
    let editor = ExternalEditor::new(pool);
    assert!(matches!(editor.propose(&request(3)), Err(Error::Protocol(_))));
}

#[test]
fn external_editor_completes_an_episode() {
    let launch = Launch::Command {
        command: echo_command("none"),
        env: vec![],
    };
    let pool = Arc::new(WorkerPool::new(launch, vec!["editor"], ids(), 1).with_timeout(TIMEOUT));
    let editor = ExternalEditor::new(pool);
    let scorer = style_scorer(true);
    let start = scorer.score("the plot was dull and slow").unwrap();
    let space = AttributeSpace::style();
    let combo = (0..space.combo_count())
        .find(|&c| !scorer.satisfies(&start, &space.constraint(c)).unwrap())
        .unwrap();
    for strategy in [Strategy::Prioritized, Strategy::BestOfN, Strategy::NaiveChain] {
        let config = EpisodeConfig::new(strategy, 4);
        let r = run_episode(&editor, &scorer, &start, &space.constraint(combo), &config, "ep").unwrap();
        assert_eq!(r.budget_used, 4);
        assert_eq!(r.final_state.seq, start.seq);
        assert!(r.trace.iter().all(|t| !t.accepted || strategy != Strategy::Prioritized));
    }
}

#[test]
fn external_evaluators_feed_the_scorer() {
    let launch = Launch::Command {
        command: echo_command("none"),
        env: vec![],
    };
    let space = AttributeSpace::style();
    let pool = Arc::new(WorkerPool::new(launch, vec!["evaluator"], space.ids(), 1).with_timeout(TIMEOUT));
    let evs: Vec<Arc<dyn Evaluator>> = space
        .specs
        .iter()
        .map(|s| {
            Arc::new(ExternalEvaluator::new(
                EvaluatorSpec {
                    id: format!("echo-{}", s.id),
                    kind: EvaluatorKind::Unary,
                    spec: s.clone(),
                    deterministic: true,
                },
                pool.clone(),
            )) as Arc<dyn Evaluator>
        })
        .collect();
    let scorer = Scorer::new(space.specs.clone(), evs, Domain::Text).unwrap();
    // 3.25 is inside the sentiment range and clamped to 2 for complexity.
    assert_eq!(scorer.score("anything").unwrap().attrs.values(), &[3.25, 2.0]);
}
