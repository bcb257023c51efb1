//! Scripted local stand-in for an OpenAI-compatible service.
//!
//! A JSON scenario decides how chat requests are answered (rules matched on
//! the first user message, each with a reply sequence), how embeddings are
//! formed, and whether the first requests are throttled. Unmatched chat
//! requests get a valid profile derived from a hash of the prompt.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tiny_http::{Header, Response, Server};

use crate::client::ChatMessage;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reply {
    /// A well-formed profile object as the message content.
    Profile { reasoning: String, profile: String },
    /// Arbitrary message content.
    Text { text: String },
    /// An HTTP error status with an optional body.
    Status {
        status: u16,
        #[serde(default)]
        body: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRule {
    /// Matches when the first user message contains this string.
    pub contains: String,
    /// Replies for the 1st, 2nd, ... matching request; the last repeats.
    pub replies: Vec<Reply>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    /// Pseudo-random vectors derived from a hash of the text.
    #[default]
    Hash,
    /// A unit basis vector chosen by a hash of the text.
    Basis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub chat_rules: Vec<ChatRule>,
    pub embedding_dim: usize,
    pub embedding_mode: EmbeddingMode,
    /// Embedding requests after this many answered ones use one extra
    /// dimension.
    pub drift_after: Option<usize>,
    /// The first this-many requests (of any kind) get HTTP 429.
    pub throttle_first: usize,
    /// When set, requests must carry this bearer token.
    pub api_key: Option<String>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            chat_rules: Vec::new(),
            embedding_dim: 8,
            embedding_mode: EmbeddingMode::Hash,
            drift_after: None,
            throttle_first: 0,
            api_key: None,
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Requests seen by the server.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MockStats {
    pub chat_requests: usize,
    pub embedding_requests: usize,
    pub throttled: usize,
    pub rejected: usize,
    /// Texts per embedding request, in arrival order.
    pub embedding_batch_sizes: Vec<usize>,
}

struct State {
    scenario: Scenario,
    rule_hits: Vec<usize>,
    stats: MockStats,
    seen: usize,
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Values in [-1, 1) on a 2^-23 grid, so they survive an `f32` round trip.
fn hash_vector(text: &str, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let d = digest(&[text.as_bytes(), &(k as u64).to_le_bytes()]);
            let bits = u32::from_le_bytes([d[0], d[1], d[2], d[3]]) >> 8;
            bits as f64 / (1u64 << 23) as f64 - 1.0
        })
        .collect()
}

fn basis_vector(text: &str, dim: usize) -> Vec<f64> {
    let d = digest(&[text.as_bytes()]);
    let k = (u64::from_le_bytes(d[..8].try_into().unwrap()) % dim as u64) as usize;
    (0..dim).map(|j| if j == k { 1.0 } else { 0.0 }).collect()
}

enum Answer {
    Json(Value),
    Status(u16, String),
}

impl State {
    fn chat(&mut self, body: &Value) -> Answer {
        self.stats.chat_requests += 1;
        let messages: Vec<ChatMessage> = match serde_json::from_value(body["messages"].clone()) {
            Ok(m) => m,
            Err(e) => return Answer::Status(400, format!("bad messages: {e}")),
        };
        let first_user = messages
            .iter()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let rule = self.scenario.chat_rules.iter().position(|r| first_user.contains(&r.contains));
        let reply = match rule {
            Some(i) => {
                let replies = &self.scenario.chat_rules[i].replies;
                let n = self.rule_hits[i];
                self.rule_hits[i] += 1;
                replies.get(n).or(replies.last()).cloned()
            }
            None => None,
        };
        let content = match reply {
            Some(Reply::Status { status, body }) => return Answer::Status(status, body),
            Some(Reply::Text { text }) => text,
            Some(Reply::Profile { reasoning, profile }) => json!({"reasoning": reasoning, "profile": profile}).to_string(),
            None => {
                let tag = hex::encode(&digest(&[first_user.as_bytes()])[..6]);
                json!({
                    "reasoning": format!("The prompt {tag} describes its subject's content and audience."),
                    "profile": format!("Suited to readers of kind {tag}."),
                })
                .to_string()
            }
        };
        Answer::Json(json!({
            "id": format!("mock-{}", self.stats.chat_requests),
            "object": "chat.completion",
            "model": body["model"],
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": content},
                "finish_reason": "stop",
            }],
        }))
    }

    fn embeddings(&mut self, body: &Value) -> Answer {
        let texts: Vec<String> = match &body["input"] {
            Value::String(s) => vec![s.clone()],
            other => match serde_json::from_value(other.clone()) {
                Ok(t) => t,
                Err(e) => return Answer::Status(400, format!("bad input: {e}")),
            },
        };
        let answered = self.stats.embedding_requests;
        self.stats.embedding_requests += 1;
        self.stats.embedding_batch_sizes.push(texts.len());
        let mut dim = self.scenario.embedding_dim;
        if self.scenario.drift_after.is_some_and(|n| answered >= n) {
            dim += 1;
        }
        let data: Vec<Value> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let v = match self.scenario.embedding_mode {
                    EmbeddingMode::Hash => hash_vector(t, dim),
                    EmbeddingMode::Basis => basis_vector(t, dim),
                };
                json!({"object": "embedding", "index": i, "embedding": v})
            })
            .collect();
        Answer::Json(json!({"object": "list", "data": data, "model": body["model"]}))
    }

    fn handle(&mut self, url: &str, auth: Option<&str>, body: &str) -> Answer {
        self.seen += 1;
        if self.seen <= self.scenario.throttle_first {
            self.stats.throttled += 1;
            return Answer::Status(429, "rate limited".into());
        }
        if let Some(key) = &self.scenario.api_key {
            if auth != Some(format!("Bearer {key}").as_str()) {
                self.stats.rejected += 1;
                return Answer::Status(401, "invalid api key".into());
            }
        }
        let body: Value = match serde_json::from_str(body) {
            Ok(v) => v,
            Err(e) => return Answer::Status(400, format!("invalid json: {e}")),
        };
        if url.ends_with("/chat/completions") {
            self.chat(&body)
        } else if url.ends_with("/embeddings") {
            self.embeddings(&body)
        } else {
            Answer::Status(404, format!("no route for {url}"))
        }
    }
}

/// A running mock server; stops when dropped.
pub struct MockServer {
    server: Arc<Server>,
    state: Arc<Mutex<State>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    base_url: String,
}

impl MockServer {
    /// Binds `addr` (use port 0 for any free port) and serves in the background.
    pub fn start(scenario: Scenario, addr: &str) -> Result<Self> {
        let server = Arc::new(Server::http(addr).map_err(|e| Error::Transport {
            endpoint: addr.to_owned(),
            msg: e.to_string(),
        })?);
        let port = server.server_addr().to_ip().map(|a| a.port()).ok_or_else(|| Error::Transport {
            endpoint: addr.to_owned(),
            msg: "not an IP listener".into(),
        })?;
        let host = addr.rsplit_once(':').map_or("127.0.0.1", |(h, _)| h);
        let base_url = format!("http://{host}:{port}/v1");
        let state = Arc::new(Mutex::new(State {
            rule_hits: vec![0; scenario.chat_rules.len()],
            scenario,
            stats: MockStats::default(),
            seen: 0,
        }));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let (server, state, stop) = (server.clone(), state.clone(), stop.clone());
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let mut body = String::new();
                    let answer = match req.as_reader().read_to_string(&mut body) {
                        Ok(_) => {
                            let auth = req
                                .headers()
                                .iter()
                                .find(|h| h.field.equiv("Authorization"))
                                .map(|h| h.value.as_str().to_owned());
                            state.lock().unwrap().handle(req.url(), auth.as_deref(), &body)
                        }
                        Err(e) => Answer::Status(400, e.to_string()),
                    };
                    let json = Header::from_bytes("Content-Type", "application/json").unwrap();
                    let resp = match answer {
                        Answer::Json(v) => Response::from_string(v.to_string()).with_header(json),
                        Answer::Status(code, msg) => Response::from_string(json!({"error": {"message": msg}}).to_string())
                            .with_status_code(code)
                            .with_header(json),
                    };
                    if let Err(e) = req.respond(resp) {
                        log::warn!("mock server could not respond: {e}");
                    }
                }
            })
        };
        Ok(Self {
            server,
            state,
            stop,
            handle: Some(handle),
            base_url,
        })
    }

    /// Base URL to configure clients with (ends in `/v1`).
    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn stats(&self) -> MockStats {
        self.state.lock().unwrap().stats.clone()
    }

    /// How many requests each chat rule has answered, in scenario order.
    pub fn rule_hits(&self) -> Vec<usize> {
        self.state.lock().unwrap().rule_hits.clone()
    }

    /// Blocks until the server thread exits (it only does when dropped).
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
