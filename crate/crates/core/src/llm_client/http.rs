use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendConfig, ChatBackend, ChatTurn, ClientError};

/// Chat-completions style HTTP backend.
///
/// Request body: `{"model": ..., "messages": [{"role", "content"}...], "temperature": ...}`.
/// The reply is read from `choices[0].message.content`.
pub struct HttpChat {
    agent: ureq::Agent,
    url: String,
    model: Option<String>,
    temperature: Option<f64>,
    auth: Option<(String, String)>,
    retry_limit: u32,
    backoff_base_ms: u64,
}

impl HttpChat {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, ClientError> {
        let base = cfg
            .endpoint_url
            .as_deref()
            .ok_or_else(|| ClientError::Config("endpoint_url is required".into()))?;
        let url = format!(
            "{}/{}",
            base.trim_end_matches('/'),
            cfg.endpoint_path.trim_start_matches('/')
        );
        let auth = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .map(|key| {
                let value = if cfg.auth_header.eq_ignore_ascii_case("authorization") {
                    format!("Bearer {key}")
                } else {
                    key
                };
                (cfg.auth_header.clone(), value)
            });
        if auth.is_none() {
            log::warn!("{} is not set; sending requests without credentials", cfg.api_key_env);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        Ok(Self {
            agent,
            url,
            model: cfg.model_name.clone(),
            temperature: cfg.temperature,
            auth,
            retry_limit: cfg.retry_limit,
            backoff_base_ms: cfg.backoff_base_ms,
        })
    }

    fn body(&self, messages: &[ChatTurn]) -> Value {
        let mut body = json!({
            "messages": messages
                .iter()
                .map(|t| json!({"role": t.role.to_string(), "content": t.content}))
                .collect::<Vec<_>>(),
        });
        if let Some(m) = &self.model {
            body["model"] = json!(m);
        }
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let mut req = self.agent.post(&self.url);
        if let Some((name, value)) = &self.auth {
            req = req.header(name.as_str(), value.as_str());
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Attempt::Retry(ClientError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {
                let v: Value = resp
                    .body_mut()
                    .read_json()
                    .map_err(|e| Attempt::Fatal(ClientError::MalformedReply(e.to_string())))?;
                let content = v
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .ok_or_else(|| {
                        Attempt::Fatal(ClientError::MalformedReply(
                            "no choices[0].message.content".into(),
                        ))
                    })?;
                Ok(content.to_string())
            }
            429 => Err(Attempt::Retry(ClientError::RateLimited {
                attempts: 0,
            })),
            500..=599 => Err(Attempt::Retry(ClientError::Transport(format!("HTTP {status}")))),
            _ => {
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                Err(Attempt::Fatal(ClientError::Http { status, body: text }))
            }
        }
    }
}

enum Attempt {
    Retry(ClientError),
    Fatal(ClientError),
}

impl ChatBackend for HttpChat {
    fn complete(&self, messages: &[ChatTurn]) -> Result<String, ClientError> {
        let body = self.body(messages);
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if attempts > self.retry_limit {
                        return Err(match e {
                            ClientError::RateLimited { .. } => ClientError::RateLimited { attempts },
                            ClientError::Transport(msg) => ClientError::Transport(format!(
                                "{msg} (gave up after {attempts} attempts)"
                            )),
                            other => other,
                        });
                    }
                    let shift = (attempts - 1).min(16);
                    let delay = self.backoff_base_ms.saturating_mul(1u64 << shift);
                    log::debug!("retrying {} in {delay} ms after: {e}", self.url);
                    thread::sleep(Duration::from_millis(delay));
                }
            }
        }
    }

    fn tag(&self) -> String {
        format!("http:{}", self.model.as_deref().unwrap_or("default"))
    }
}
