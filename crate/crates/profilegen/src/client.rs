//! Blocking client for OpenAI-compatible chat-completion and embedding
//! endpoints, with exponential backoff on throttling.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Environment variable holding the service base URL.
pub const ENV_BASE_URL: &str = "SEMREC_API_BASE";
/// Environment variable holding the bearer token.
pub const ENV_API_KEY: &str = "SEMREC_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Base URL; `/chat/completions` and `/embeddings` are appended.
    pub base_url: String,
    /// Never serialized, so manifests do not leak it.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embedding_model: String,
    pub temperature: f64,
    /// Re-asks after an unparseable profile reply.
    pub retry_limit: usize,
    /// Re-sends after throttling (HTTP 429) or server errors (5xx).
    pub max_throttle_retries: usize,
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub max_in_flight: usize,
    pub embedding_batch: usize,
    pub timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            chat_model: "gpt-3.5-turbo".into(),
            embedding_model: "text-embedding-ada-002".into(),
            temperature: 0.0,
            retry_limit: 2,
            max_throttle_retries: 5,
            backoff_ms: 500,
            max_backoff_ms: 20_000,
            max_in_flight: 4,
            embedding_batch: 64,
            timeout_secs: 120,
        }
    }
}

impl ServiceConfig {
    /// Overrides the base URL and key from the environment when set.
    pub fn with_env(mut self) -> Self {
        if let Ok(url) = std::env::var(ENV_BASE_URL) {
            if !url.is_empty() {
                self.base_url = url;
            }
        }
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
        self
    }

    /// Delay before the `attempt`-th re-send (1-based).
    pub fn backoff(&self, attempt: usize) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1) as u32).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ServiceClient {
    http: reqwest::blocking::Client,
    cfg: ServiceConfig,
}

impl ServiceClient {
    pub fn new(cfg: ServiceConfig) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Transport {
                endpoint: cfg.base_url.clone(),
                msg: e.to_string(),
            })?;
        Ok(Self { http, cfg })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{path}", self.cfg.base_url.trim_end_matches('/'))
    }

    /// POSTs `body`, re-sending after 429/5xx with exponential backoff.
    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R> {
        let endpoint = self.endpoint(path);
        let mut attempt = 0;
        loop {
            let mut req = self.http.post(&endpoint).json(body);
            if let Some(key) = &self.cfg.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| Error::Transport {
                endpoint: endpoint.clone(),
                msg: e.to_string(),
            })?;
            let status = resp.status();
            if status.is_success() {
                let text = resp.text().map_err(|e| Error::Transport {
                    endpoint: endpoint.clone(),
                    msg: e.to_string(),
                })?;
                return serde_json::from_str(&text).map_err(|e| Error::Protocol {
                    endpoint,
                    msg: e.to_string(),
                });
            }
            let throttled = status.as_u16() == 429 || status.is_server_error();
            if throttled && attempt < self.cfg.max_throttle_retries {
                attempt += 1;
                let wait = retry_after(&resp)
                    .map(|d| d.min(Duration::from_millis(self.cfg.max_backoff_ms)))
                    .unwrap_or_else(|| self.cfg.backoff(attempt));
                log::warn!("{endpoint} answered {status}; retry {attempt} in {wait:?}");
                std::thread::sleep(wait);
                continue;
            }
            let body = resp.text().unwrap_or_default();
            return Err(Error::Http {
                endpoint,
                status: status.as_u16(),
                body: body.chars().take(500).collect(),
            });
        }
    }

    /// One chat completion; returns the assistant's text.
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<String> {
        let resp: ChatResponse = self.post(
            "chat/completions",
            &ChatRequest {
                model: &self.cfg.chat_model,
                messages,
                temperature: self.cfg.temperature,
            },
        )?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Protocol {
                endpoint: self.endpoint("chat/completions"),
                msg: "no message content in reply".into(),
            })
    }

    /// Embeds `texts` in one request, returning vectors in input order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let resp: EmbeddingResponse = self.post(
            "embeddings",
            &EmbeddingRequest {
                model: &self.cfg.embedding_model,
                input: texts,
            },
        )?;
        let endpoint = || self.endpoint("embeddings");
        if resp.data.len() != texts.len() {
            return Err(Error::Protocol {
                endpoint: endpoint(),
                msg: format!("sent {} texts, got {} embeddings", texts.len(), resp.data.len()),
            });
        }
        let mut out = vec![None; texts.len()];
        for d in resp.data {
            match out.get_mut(d.index) {
                Some(slot @ None) => *slot = Some(d.embedding),
                _ => {
                    return Err(Error::Protocol {
                        endpoint: endpoint(),
                        msg: format!("embedding index {} is out of range or repeated", d.index),
                    })
                }
            }
        }
        Ok(out.into_iter().map(Option::unwrap).collect())
    }
}

fn retry_after(resp: &reqwest::blocking::Response) -> Option<Duration> {
    let secs: f64 = resp.headers().get("retry-after")?.to_str().ok()?.trim().parse().ok()?;
    (secs.is_finite() && secs >= 0.0).then(|| Duration::from_secs_f64(secs))
}
