use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ClientError;
use crate::jsonl::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
}

/// Ordered conversation of one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub session_id: String,
    pub turns: Vec<ChatTurn>,
    pub backend_tag: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    session_id: String,
    backend_tag: String,
    created_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnLine {
    turn_index: usize,
    role: Role,
    content: String,
}

impl SessionTranscript {
    pub fn new(session_id: impl Into<String>, backend_tag: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            turns: Vec::new(),
            backend_tag: backend_tag.into(),
            created_at: Utc::now(),
        }
    }

    pub fn user_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.role == Role::User).count()
    }

    /// Content of the `n`-th (0-based) user turn and the assistant reply after it.
    pub fn exchange(&self, n: usize) -> Option<(&str, Option<&str>)> {
        let pos = self
            .turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.role == Role::User)
            .nth(n)
            .map(|(i, _)| i)?;
        let reply = self
            .turns
            .get(pos + 1)
            .filter(|t| t.role == Role::Assistant)
            .map(|t| t.content.as_str());
        Some((self.turns[pos].content.as_str(), reply))
    }

    /// Check the role layout: optional leading system turn, then strictly
    /// alternating user/assistant turns with non-empty content.
    pub fn check_roles(&self) -> Result<(), String> {
        let body = match self.turns.first() {
            Some(t) if t.role == Role::System => &self.turns[1..],
            _ => &self.turns[..],
        };
        for (i, turn) in body.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if turn.role != expected {
                return Err(format!("turn {i}: expected {expected}, found {}", turn.role));
            }
            if turn.content.is_empty() {
                return Err(format!("turn {i}: empty {} content", turn.role));
            }
        }
        Ok(())
    }

    /// JSON Lines: a session header line, then one line per turn.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&HeaderLine {
            session_id: self.session_id.clone(),
            backend_tag: self.backend_tag.clone(),
            created_at: self.created_at,
        })
        .expect("header serializes");
        out.push('\n');
        for (turn_index, t) in self.turns.iter().enumerate() {
            out.push_str(
                &serde_json::to_string(&TurnLine {
                    turn_index,
                    role: t.role,
                    content: t.content.clone(),
                })
                .expect("turn serializes"),
            );
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: HeaderLine = serde_json::from_str(lines.next().ok_or("missing header line")?)
            .map_err(|e| format!("header: {e}"))?;
        let mut turns = Vec::new();
        for (i, line) in lines.enumerate() {
            let tl: TurnLine = serde_json::from_str(line).map_err(|e| format!("turn {i}: {e}"))?;
            if tl.turn_index != i {
                return Err(format!("turn {i}: turn_index is {}", tl.turn_index));
            }
            turns.push(ChatTurn {
                role: tl.role,
                content: tl.content,
            });
        }
        if !text.is_empty() && !text.ends_with('\n') {
            return Err("file is truncated (no final newline)".into());
        }
        let t = SessionTranscript {
            session_id: header.session_id,
            turns,
            backend_tag: header.backend_tag,
            created_at: header.created_at,
        };
        t.check_roles()?;
        Ok(t)
    }

    /// Atomic write (temp file then rename).
    pub fn persist(&self, path: &Path) -> Result<(), ClientError> {
        write_atomic(path, self.to_jsonl().as_bytes()).map_err(|source| ClientError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

pub fn load_transcript(path: &Path) -> Result<SessionTranscript, ClientError> {
    let text = fs::read_to_string(path).map_err(|source| ClientError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SessionTranscript::from_jsonl(&text).map_err(|reason| ClientError::MalformedTranscript {
        path: path.display().to_string(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(pairs: usize) -> SessionTranscript {
        let mut t = SessionTranscript::new("s1", "replay:test");
        t.turns.push(ChatTurn {
            role: Role::System,
            content: "You are helpful.".into(),
        });
        for i in 0..pairs {
            t.turns.push(ChatTurn {
                role: Role::User,
                content: format!("question {i}\nwith \"quotes\""),
            });
            t.turns.push(ChatTurn {
                role: Role::Assistant,
                content: format!("answer {i}"),
            });
        }
        t
    }

    #[test]
    fn nine_turns_survive_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s1.jsonl");
        let t = sample(4);
        assert_eq!(t.turns.len(), 9);
        t.persist(&path).unwrap();
        let back = load_transcript(&path).unwrap();
        assert_eq!(back.turns.len(), 9);
        assert_eq!(back, t);
    }

    #[test]
    fn truncated_file_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s1.jsonl");
        let text = sample(2).to_jsonl();
        fs::write(&path, &text[..text.len() - 10]).unwrap();
        assert!(matches!(
            load_transcript(&path),
            Err(ClientError::MalformedTranscript { .. })
        ));
    }

    #[test]
    fn bad_alternation_is_rejected() {
        let mut t = sample(1);
        t.turns.push(ChatTurn {
            role: Role::Assistant,
            content: "again".into(),
        });
        assert!(SessionTranscript::from_jsonl(&t.to_jsonl()).is_err());
    }

    #[test]
    fn exchange_lookup() {
        let t = sample(3);
        assert_eq!(t.exchange(1), Some(("question 1\nwith \"quotes\"", Some("answer 1"))));
        assert_eq!(t.exchange(3), None);
        assert_eq!(t.user_turns(), 3);
    }
}
