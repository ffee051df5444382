use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use stepwise::llm_client::{BackendConfig, ClientError, LlmClient};

struct Stub {
    url: String,
    bodies: Arc<Mutex<Vec<String>>>,
}

/// Serve one canned response per connection, in order.
fn stub(responses: Vec<(u16, String)>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&bodies);
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0; len];
            reader.read_exact(&mut req).unwrap();
            seen.lock().unwrap().push(String::from_utf8(req).unwrap());
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    Stub { url, bodies }
}

fn reply(text: &str) -> (u16, String) {
    (200, serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string())
}

fn config(url: &str) -> BackendConfig {
    let mut cfg = BackendConfig::live(url);
    cfg.backoff_base_ms = 1;
    cfg.model_name = Some("stub-model".into());
    cfg
}

#[test]
fn rate_limits_are_retried_with_backoff() {
    let s = stub(vec![(429, "{}".into()), (429, "{}".into()), reply("1. Read. 2. Answer.")]);
    let client = LlmClient::new(config(&s.url)).unwrap();
    let mut session = client.open_session("task1").unwrap();
    assert_eq!(session.send("hello").unwrap(), "1. Read. 2. Answer.");
    let bodies = s.bodies.lock().unwrap();
    assert_eq!(bodies.len(), 3);
    let body: serde_json::Value = serde_json::from_str(&bodies[2]).unwrap();
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["messages"][0]["content"], "hello");
}

#[test]
fn retry_limit_is_reported() {
    let s = stub(vec![(429, "{}".into()); 3]);
    let mut cfg = config(&s.url);
    cfg.retry_limit = 2;
    let client = LlmClient::new(cfg).unwrap();
    let mut session = client.open_session("task1").unwrap();
    assert!(matches!(session.send("hello"), Err(ClientError::RateLimited { attempts: 3 })));
}

#[test]
fn history_is_resent_each_turn() {
    let s = stub(vec![reply("first"), reply("second")]);
    let client = LlmClient::new(config(&s.url)).unwrap();
    let mut session = client.open_session("task1").unwrap();
    session.send("one").unwrap();
    session.send("two").unwrap();
    let bodies = s.bodies.lock().unwrap();
    let last: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
    let roles: Vec<&str> = last["messages"].as_array().unwrap().iter().map(|m| m["role"].as_str().unwrap()).collect();
    assert_eq!(roles, ["user", "assistant", "user"]);
    assert_eq!(session.transcript().user_turns(), 2);
}

#[test]
fn record_then_replay() {
    let s = stub(vec![reply("alpha"), reply("beta")]);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&s.url);
    cfg.mode = stepwise::llm_client::Mode::Record;
    cfg.fixtures_dir = Some(dir.path().to_path_buf());
    let client = LlmClient::new(cfg).unwrap();
    let mut session = client.open_session("task7").unwrap();
    session.send("q1").unwrap();
    session.send("q2").unwrap();
    let recorded = session.into_transcript();

    let replay = LlmClient::new(BackendConfig::replay(dir.path())).unwrap();
    let mut session = replay.open_session("task7").unwrap();
    assert_eq!(session.send("q1").unwrap(), "alpha");
    assert!(matches!(session.send("q2 changed"), Err(ClientError::ReplayMismatch { turn: 1, .. })));
    assert_eq!(session.send("q2").unwrap(), "beta");
    let replayed = session.into_transcript();
    assert_eq!(replayed, recorded);
}
