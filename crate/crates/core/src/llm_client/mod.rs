//! Multi-turn chat client with live, record and replay modes.
//!
//! * **live** talks to a chat-completions HTTP endpoint.
//! * **record** does the same and rewrites `<fixtures_dir>/<key>.jsonl`
//!   after every exchange, so the run can be replayed later.
//! * **replay** serves assistant replies from `<fixtures_dir>/<key>.jsonl`.
//!   The n-th user message must equal the fixture's n-th user turn byte for
//!   byte, otherwise the send fails with [`ClientError::ReplayMismatch`].
//!
//! A session is strictly sequential. [`LlmClient`] caps the number of open
//! sessions at `max_parallel_sessions`; opening more blocks until one drops.

mod http;
mod transcript;

use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};

use chrono::Utc;
use serde::{Deserialize, Serialize};

pub use http::HttpChat;
pub use transcript::{load_transcript, ChatTurn, Role, SessionTranscript};

pub const API_KEY_ENV: &str = "STEPWISE_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited ({attempts} attempts)")]
    RateLimited { attempts: u32 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("replay mismatch in {fixture} at user turn {turn}: {detail}")]
    ReplayMismatch {
        fixture: String,
        turn: usize,
        detail: String,
    },
    #[error("backend returned an empty reply")]
    EmptyReply,
    #[error("message is empty")]
    EmptyMessage,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed transcript {path}: {reason}")]
    MalformedTranscript { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode {other:?} (live, record, replay)")),
        }
    }
}

fn default_parallel() -> usize {
    1
}
fn default_retry_limit() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_endpoint_path() -> String {
    "/v1/chat/completions".into()
}
fn default_auth_header() -> String {
    "Authorization".into()
}
fn default_api_key_env() -> String {
    API_KEY_ENV.into()
}
fn default_timeout() -> u64 {
    120_000
}

/// Backend selection. The API key is only ever read from the environment
/// variable named by `api_key_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: Mode,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default = "default_endpoint_path")]
    pub endpoint_path: String,
    #[serde(default)]
    pub model_name: Option<String>,
    /// Sampling temperature forwarded as-is; omitted from requests when unset.
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_parallel")]
    pub max_parallel_sessions: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub fixtures_dir: Option<PathBuf>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

impl BackendConfig {
    pub fn replay(fixtures_dir: impl Into<PathBuf>) -> Self {
        Self {
            fixtures_dir: Some(fixtures_dir.into()),
            ..Self::with_mode(Mode::Replay)
        }
    }

    pub fn live(endpoint_url: impl Into<String>) -> Self {
        Self {
            endpoint_url: Some(endpoint_url.into()),
            ..Self::with_mode(Mode::Live)
        }
    }

    pub fn record(endpoint_url: impl Into<String>, fixtures_dir: impl Into<PathBuf>) -> Self {
        Self {
            endpoint_url: Some(endpoint_url.into()),
            fixtures_dir: Some(fixtures_dir.into()),
            ..Self::with_mode(Mode::Record)
        }
    }

    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            endpoint_url: None,
            endpoint_path: default_endpoint_path(),
            model_name: None,
            temperature: None,
            max_parallel_sessions: default_parallel(),
            retry_limit: default_retry_limit(),
            backoff_base_ms: default_backoff(),
            timeout_ms: default_timeout(),
            fixtures_dir: None,
            auth_header: default_auth_header(),
            api_key_env: default_api_key_env(),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_parallel_sessions == 0 {
            return Err(ClientError::Config("max_parallel_sessions must be >= 1".into()));
        }
        match self.mode {
            Mode::Live if self.endpoint_url.is_none() => {
                Err(ClientError::Config("live mode requires endpoint_url".into()))
            }
            Mode::Record if self.endpoint_url.is_none() => {
                Err(ClientError::Config("record mode requires endpoint_url".into()))
            }
            Mode::Record | Mode::Replay if self.fixtures_dir.is_none() => Err(ClientError::Config(
                format!("{:?} mode requires fixtures_dir", self.mode).to_lowercase(),
            )),
            _ => Ok(()),
        }
    }

    fn fixture_path(&self, key: &str) -> Option<PathBuf> {
        self.fixtures_dir.as_ref().map(|d| d.join(format!("{key}.jsonl")))
    }
}

/// Something that turns a message list into one assistant reply.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatTurn]) -> Result<String, ClientError>;

    fn tag(&self) -> String {
        "custom".into()
    }
}

struct Slots {
    open: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Slots {
    fn acquire(self: &Arc<Self>) -> SlotPermit {
        let mut open = self.open.lock().unwrap_or_else(|e| e.into_inner());
        while *open >= self.limit {
            open = self.freed.wait(open).unwrap_or_else(|e| e.into_inner());
        }
        *open += 1;
        SlotPermit(Arc::clone(self))
    }
}

struct SlotPermit(Arc<Slots>);

impl Drop for SlotPermit {
    fn drop(&mut self) {
        let mut open = self.0.open.lock().unwrap_or_else(|e| e.into_inner());
        *open -= 1;
        self.0.freed.notify_one();
    }
}

/// Shared entry point that hands out sessions.
#[derive(Clone)]
pub struct LlmClient {
    config: Arc<BackendConfig>,
    backend: Option<Arc<dyn ChatBackend>>,
    slots: Arc<Slots>,
}

impl LlmClient {
    pub fn new(config: BackendConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let backend: Option<Arc<dyn ChatBackend>> = match config.mode {
            Mode::Replay => None,
            Mode::Live | Mode::Record => Some(Arc::new(HttpChat::from_config(&config)?)),
        };
        Ok(Self::assemble(config, backend))
    }

    /// Use `backend` instead of HTTP for live and record modes.
    pub fn with_backend(
        config: BackendConfig,
        backend: Arc<dyn ChatBackend>,
    ) -> Result<Self, ClientError> {
        let mut probe = config.clone();
        if probe.endpoint_url.is_none() {
            probe.endpoint_url = Some("custom://".into());
        }
        probe.validate()?;
        Ok(Self::assemble(config, Some(backend)))
    }

    fn assemble(config: BackendConfig, backend: Option<Arc<dyn ChatBackend>>) -> Self {
        let slots = Arc::new(Slots {
            open: Mutex::new(0),
            freed: Condvar::new(),
            limit: config.max_parallel_sessions,
        });
        Self {
            config: Arc::new(config),
            backend,
            slots,
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Open a session keyed by `key` (the fixture file stem in record/replay).
    pub fn open_session(&self, key: &str) -> Result<Session, ClientError> {
        if key.is_empty() || key.contains(['/', '\\']) {
            return Err(ClientError::Config(format!("invalid session key {key:?}")));
        }
        let permit = self.slots.acquire();
        if self.config.mode == Mode::Replay {
            let path = self.config.fixture_path(key).expect("validated");
            let fixture = load_transcript(&path)?;
            let mut transcript = fixture.clone();
            transcript.turns.clear();
            if let Some(first) = fixture.turns.first().filter(|t| t.role == Role::System) {
                transcript.turns.push(first.clone());
            }
            return Ok(Session {
                key: key.to_string(),
                transcript,
                kind: SessionKind::Replay { fixture, path },
                _permit: permit,
            });
        }
        let record_path = match self.config.mode {
            Mode::Record => Some(self.config.fixture_path(key).expect("validated")),
            _ => None,
        };
        let backend = Arc::clone(self.backend.as_ref().expect("remote backend"));
        let created_at = Utc::now();
        let mode = if record_path.is_some() { "record" } else { "live" };
        let transcript = SessionTranscript {
            session_id: format!("{key}@{}", created_at.timestamp_millis()),
            turns: Vec::new(),
            backend_tag: format!("{mode}:{}", backend.tag()),
            created_at,
        };
        Ok(Session {
            key: key.to_string(),
            transcript,
            kind: SessionKind::Remote {
                backend,
                record_path,
            },
            _permit: permit,
        })
    }
}

/// Convenience wrapper: a one-off client and a single session.
pub fn open_session(config: BackendConfig, key: &str) -> Result<Session, ClientError> {
    LlmClient::new(config)?.open_session(key)
}

enum SessionKind {
    Remote {
        backend: Arc<dyn ChatBackend>,
        record_path: Option<PathBuf>,
    },
    Replay {
        fixture: SessionTranscript,
        path: PathBuf,
    },
}

/// One conversation. Not reentrant: `send` takes `&mut self`.
pub struct Session {
    key: String,
    transcript: SessionTranscript,
    kind: SessionKind,
    _permit: SlotPermit,
}

impl Session {
    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn session_id(&self) -> &str {
        &self.transcript.session_id
    }

    pub fn transcript(&self) -> &SessionTranscript {
        &self.transcript
    }

    /// Add a leading system turn. Only valid before the first send; in replay
    /// mode it must match the fixture's system turn.
    pub fn set_system(&mut self, content: &str) -> Result<(), ClientError> {
        if self.transcript.turns.iter().any(|t| t.role != Role::System) {
            return Err(ClientError::Config("system turn must precede the conversation".into()));
        }
        if let SessionKind::Replay { fixture, path } = &self.kind {
            let stored = fixture.turns.first().filter(|t| t.role == Role::System);
            if stored.map(|t| t.content.as_str()) != Some(content) {
                return Err(ClientError::ReplayMismatch {
                    fixture: path.display().to_string(),
                    turn: 0,
                    detail: "system turn differs from fixture".into(),
                });
            }
            return Ok(());
        }
        self.transcript.turns.clear();
        self.transcript.turns.push(ChatTurn {
            role: Role::System,
            content: content.to_string(),
        });
        Ok(())
    }

    /// Send one user message and return the assistant reply.
    pub fn send(&mut self, message: &str) -> Result<String, ClientError> {
        if message.is_empty() {
            return Err(ClientError::EmptyMessage);
        }
        let user_index = self.transcript.user_turns();
        let reply = match &self.kind {
            SessionKind::Replay { fixture, path } => {
                let fixture_name = path.display().to_string();
                let (stored_user, stored_reply) =
                    fixture.exchange(user_index).ok_or_else(|| ClientError::ReplayMismatch {
                        fixture: fixture_name.clone(),
                        turn: user_index,
                        detail: "fixture has no more user turns".into(),
                    })?;
                if stored_user != message {
                    return Err(ClientError::ReplayMismatch {
                        fixture: fixture_name,
                        turn: user_index,
                        detail: first_difference(stored_user, message),
                    });
                }
                stored_reply.ok_or(ClientError::EmptyReply)?.to_string()
            }
            SessionKind::Remote { backend, .. } => {
                let mut messages = self.transcript.turns.clone();
                messages.push(ChatTurn {
                    role: Role::User,
                    content: message.to_string(),
                });
                backend.complete(&messages)?
            }
        };
        if reply.trim().is_empty() {
            return Err(ClientError::EmptyReply);
        }
        self.transcript.turns.push(ChatTurn {
            role: Role::User,
            content: message.to_string(),
        });
        self.transcript.turns.push(ChatTurn {
            role: Role::Assistant,
            content: reply.clone(),
        });
        if let SessionKind::Remote {
            record_path: Some(path),
            ..
        } = &self.kind
        {
            self.transcript.persist(path)?;
        }
        Ok(reply)
    }

    pub fn persist_transcript(&self, path: &Path) -> Result<(), ClientError> {
        self.transcript.persist(path)
    }

    pub fn into_transcript(self) -> SessionTranscript {
        self.transcript
    }
}

fn first_difference(expected: &str, got: &str) -> String {
    let at = expected
        .bytes()
        .zip(got.bytes())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| expected.len().min(got.len()));
    let snippet = |s: &str| -> String { s.get(at..).unwrap_or("").chars().take(40).collect() };
    format!(
        "message differs from fixture at byte {at}: fixture {:?}, sent {:?}",
        snippet(expected),
        snippet(got)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Echo(AtomicUsize);

    impl ChatBackend for Echo {
        fn complete(&self, messages: &[ChatTurn]) -> Result<String, ClientError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("echo: {}", messages.last().unwrap().content))
        }
    }

    #[test]
    fn config_validation() {
        assert!(matches!(
            LlmClient::new(BackendConfig::with_mode(Mode::Live)),
            Err(ClientError::Config(_))
        ));
        assert!(matches!(
            LlmClient::new(BackendConfig::with_mode(Mode::Replay)),
            Err(ClientError::Config(_))
        ));
        let mut cfg = BackendConfig::replay("/tmp");
        cfg.max_parallel_sessions = 0;
        assert!(matches!(LlmClient::new(cfg), Err(ClientError::Config(_))));
    }

    #[test]
    fn record_then_replay_closure() {
        let dir = tempfile::tempdir().unwrap();
        let backend = Arc::new(Echo(AtomicUsize::new(0)));
        let rec = LlmClient::with_backend(
            BackendConfig::record("custom://", dir.path()),
            backend.clone(),
        )
        .unwrap();
        let mut s = rec.open_session("task1").unwrap();
        s.set_system("sys").unwrap();
        assert_eq!(s.send("hello").unwrap(), "echo: hello");
        // Persisted before send returns.
        let on_disk = load_transcript(&dir.path().join("task1.jsonl")).unwrap();
        assert_eq!(on_disk.turns.len(), 3);
        s.send("again").unwrap();
        let recorded = s.into_transcript();
        assert_eq!(backend.0.load(Ordering::SeqCst), 2);

        let mut r = open_session(BackendConfig::replay(dir.path()), "task1").unwrap();
        r.set_system("sys").unwrap();
        assert_eq!(r.send("hello").unwrap(), "echo: hello");
        assert_eq!(r.send("again").unwrap(), "echo: again");
        assert_eq!(r.transcript(), &recorded);
        assert_eq!(r.transcript().to_jsonl(), recorded.to_jsonl());
    }

    #[test]
    fn replay_mismatch_and_exhaustion() {
        let dir = tempfile::tempdir().unwrap();
        let rec = LlmClient::with_backend(
            BackendConfig::record("custom://", dir.path()),
            Arc::new(Echo(AtomicUsize::new(0))),
        )
        .unwrap();
        rec.open_session("k").unwrap().send("prompt one").unwrap();

        let mut r = open_session(BackendConfig::replay(dir.path()), "k").unwrap();
        let err = r.send("prompt one!").unwrap_err();
        assert!(matches!(err, ClientError::ReplayMismatch { turn: 0, .. }));
        assert!(r.transcript().turns.is_empty());
        r.send("prompt one").unwrap();
        assert!(matches!(r.send("more"), Err(ClientError::ReplayMismatch { turn: 1, .. })));
        assert!(r.transcript().check_roles().is_ok());
    }

    #[test]
    fn missing_fixture_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            open_session(BackendConfig::replay(dir.path()), "nope"),
            Err(ClientError::Io { .. })
        ));
    }

    #[test]
    fn empty_reply_is_an_error() {
        struct Blank;
        impl ChatBackend for Blank {
            fn complete(&self, _: &[ChatTurn]) -> Result<String, ClientError> {
                Ok("  ".into())
            }
        }
        let mut cfg = BackendConfig::with_mode(Mode::Live);
        cfg.endpoint_url = Some("custom://".into());
        let c = LlmClient::with_backend(cfg, Arc::new(Blank)).unwrap();
        let mut s = c.open_session("x").unwrap();
        assert!(matches!(s.send("hi"), Err(ClientError::EmptyReply)));
        assert!(s.transcript().turns.is_empty());
    }

    #[test]
    fn session_limit_blocks_until_drop() {
        let mut cfg = BackendConfig::with_mode(Mode::Live);
        cfg.endpoint_url = Some("custom://".into());
        cfg.max_parallel_sessions = 1;
        let c = LlmClient::with_backend(cfg, Arc::new(Echo(AtomicUsize::new(0)))).unwrap();
        let first = c.open_session("a").unwrap();
        let c2 = c.clone();
        let handle = std::thread::spawn(move || c2.open_session("b").map(|s| s.key().to_string()));
        std::thread::sleep(std::time::Duration::from_millis(50));
        assert!(!handle.is_finished());
        drop(first);
        assert_eq!(handle.join().unwrap().unwrap(), "b");
    }
}
