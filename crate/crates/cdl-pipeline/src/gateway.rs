//! Chat-completion gateway with pluggable transports and deterministic
//! record/replay.
//!
//! A [`Cassette`] stores responses keyed by a content hash of the request, so
//! a recorded pipeline run can be replayed byte for byte with no network. A
//! gateway in replay mode holds no transport at all — there is nothing that
//! could open a connection.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("replay miss: no cassette record for request key {0}")]
    ReplayMiss(String),
    #[error("provider error (status {status}): {body}")]
    Provider { status: u16, body: String },
    #[error("request timed out after {0} s")]
    Timeout(u64),
    #[error("response contained no code")]
    EmptyCode,
    #[error("malformed cassette {path}: {message}")]
    CassetteMalformed { path: String, message: String },
    #[error("auth environment variable {0} is not set")]
    MissingAuth(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(model_id: &str, system_text: &str, user_text: &str) -> Self {
        ChatRequest {
            model_id: model_id.to_string(),
            system_text: system_text.to_string(),
            user_text: user_text.to_string(),
            max_tokens: 4096,
            temperature: 0.0,
        }
    }

    /// Content hash of (model_id, system_text, user_text). Stable across
    /// re-serialization: it depends only on the three field values.
    pub fn request_key(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.system_text.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.user_text.as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub model_id: String,
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_s: f64,
    pub provider: String,
    pub from_replay: bool,
    /// True when the provider did not report usage and the token counts were
    /// estimated as ceil(chars/4).
    pub tokens_estimated: bool,
}

/// Estimated token count for providers that do not report usage.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// An ordered, append-only set of recorded responses keyed by request hash.
#[derive(Debug, Clone, Default)]
pub struct Cassette {
    pub name: String,
    records: Vec<(String, ChatResponse)>,
}

impl Cassette {
    pub fn new(name: &str) -> Self {
        Cassette {
            name: name.to_string(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self, request_key: &str) -> Option<&ChatResponse> {
        self.records
            .iter()
            .find(|(k, _)| k == request_key)
            .map(|(_, r)| r)
    }

    /// Append a record; a duplicate key is ignored (the first recording
    /// wins, matching replay semantics).
    pub fn append(&mut self, request_key: String, response: ChatResponse) {
        if self.lookup(&request_key).is_none() {
            self.records.push((request_key, response));
        }
    }

    /// Record format, per entry:
    /// `request_key NL byte-length-of-text NL text NL prompt_tokens TAB
    /// completion_tokens TAB latency NL`.
    pub fn to_string_repr(&self) -> String {
        let mut out = String::new();
        for (key, resp) in &self.records {
            out.push_str(key);
            out.push('\n');
            out.push_str(&resp.text.len().to_string());
            out.push('\n');
            out.push_str(&resp.text);
            out.push('\n');
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                resp.prompt_tokens, resp.completion_tokens, resp.latency_s
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        fs::write(path, self.to_string_repr())?;
        Ok(())
    }

    pub fn parse(name: &str, text: &str) -> Result<Cassette, GatewayError> {
        let malformed = |message: &str| GatewayError::CassetteMalformed {
            path: name.to_string(),
            message: message.to_string(),
        };
        let mut cassette = Cassette::new(name);
        let mut rest = text;
        while !rest.is_empty() {
            let (key, after) = rest.split_once('\n').ok_or_else(|| malformed("truncated key"))?;
            let (len_line, after) = after
                .split_once('\n')
                .ok_or_else(|| malformed("truncated length"))?;
            let len: usize = len_line
                .parse()
                .map_err(|_| malformed("bad text length"))?;
            if after.len() < len + 1 {
                return Err(malformed("text shorter than declared length"));
            }
            let body = &after[..len];
            if after.as_bytes()[len] != b'\n' {
                return Err(malformed("missing newline after text"));
            }
            let after = &after[len + 1..];
            let (usage, after) = after
                .split_once('\n')
                .ok_or_else(|| malformed("truncated usage line"))?;
            let mut parts = usage.split('\t');
            let prompt_tokens = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| malformed("bad prompt token count"))?;
            let completion_tokens = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| malformed("bad completion token count"))?;
            let latency_s = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| malformed("bad latency"))?;
            if cassette.lookup(key).is_some() {
                return Err(malformed("duplicate request key"));
            }
            cassette.records.push((
                key.to_string(),
                ChatResponse {
                    model_id: String::new(),
                    text: body.to_string(),
                    prompt_tokens,
                    completion_tokens,
                    latency_s,
                    provider: format!("cassette:{name}"),
                    from_replay: true,
                    tokens_estimated: false,
                },
            ));
            rest = after;
        }
        Ok(cassette)
    }

    pub fn load(path: &Path) -> Result<Cassette, GatewayError> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = fs::read_to_string(path).map_err(|e| GatewayError::CassetteMalformed {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Cassette::parse(&name, &text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub provider: String,
    pub base_url: String,
    pub model_id: String,
    pub auth_env_var: String,
    pub timeout_s: u64,
    pub max_tokens: u32,
}

/// Something that can move a request over the wire. Implementations exist for
/// HTTP chat-completion endpoints and for scripted test stubs.
pub trait Transport {
    fn send(
        &self,
        request: &ChatRequest,
        config: &ProviderConfig,
    ) -> Result<ChatResponse, GatewayError>;
}

enum Mode {
    Live {
        config: ProviderConfig,
        transport: Box<dyn Transport>,
    },
    Replay {
        cassette: Cassette,
    },
    Record {
        config: ProviderConfig,
        transport: Box<dyn Transport>,
        cassette: Cassette,
    },
}

/// Uniform completion interface over the three modes.
pub struct Gateway {
    mode: Mode,
    log: Vec<ChatResponse>,
}

impl Gateway {
    pub fn live(config: ProviderConfig, transport: Box<dyn Transport>) -> Gateway {
        Gateway {
            mode: Mode::Live { config, transport },
            log: Vec::new(),
        }
    }

    /// Replay mode holds only the cassette; no transport exists, so no
    /// network connection can be made.
    pub fn replay(cassette: Cassette) -> Gateway {
        Gateway {
            mode: Mode::Replay { cassette },
            log: Vec::new(),
        }
    }

    pub fn record(
        config: ProviderConfig,
        transport: Box<dyn Transport>,
        cassette: Cassette,
    ) -> Gateway {
        Gateway {
            mode: Mode::Record {
                config,
                transport,
                cassette,
            },
            log: Vec::new(),
        }
    }

    pub fn complete(&mut self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = request.request_key();
        let response = match &mut self.mode {
            Mode::Live { config, transport } => transport.send(request, config)?,
            Mode::Replay { cassette } => {
                let mut stored = cassette
                    .lookup(&key)
                    .cloned()
                    .ok_or(GatewayError::ReplayMiss(key))?;
                stored.model_id = request.model_id.clone();
                stored.from_replay = true;
                stored
            }
            Mode::Record {
                config,
                transport,
                cassette,
            } => {
                if let Some(stored) = cassette.lookup(&key) {
                    let mut stored = stored.clone();
                    stored.model_id = request.model_id.clone();
                    stored.from_replay = true;
                    stored
                } else {
                    let response = transport.send(request, config)?;
                    cassette.append(key, response.clone());
                    response
                }
            }
        };
        self.log.push(response.clone());
        Ok(response)
    }

    /// Every response returned so far, in call order.
    pub fn responses(&self) -> &[ChatResponse] {
        &self.log
    }

    /// The cassette, if this gateway carries one (replay or record mode).
    pub fn cassette(&self) -> Option<&Cassette> {
        match &self.mode {
            Mode::Live { .. } => None,
            Mode::Replay { cassette } | Mode::Record { cassette, .. } => Some(cassette),
        }
    }
}

/// A transport that plays back a fixed list of reply texts in order, with a
/// deterministic zero latency and estimated token counts. Used to drive
/// record mode in tests and fixture generators; the call counter makes
/// outbound traffic observable.
pub struct ScriptedTransport {
    replies: std::cell::RefCell<std::collections::VecDeque<String>>,
    calls: std::cell::Cell<usize>,
}

impl ScriptedTransport {
    pub fn new<I: IntoIterator<Item = String>>(replies: I) -> ScriptedTransport {
        ScriptedTransport {
            replies: std::cell::RefCell::new(replies.into_iter().collect()),
            calls: std::cell::Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl Transport for ScriptedTransport {
    fn send(
        &self,
        request: &ChatRequest,
        config: &ProviderConfig,
    ) -> Result<ChatResponse, GatewayError> {
        self.calls.set(self.calls.get() + 1);
        let text = self.replies.borrow_mut().pop_front().ok_or_else(|| {
            GatewayError::Provider {
                status: 0,
                body: "scripted transport exhausted".to_string(),
            }
        })?;
        Ok(ChatResponse {
            model_id: request.model_id.clone(),
            prompt_tokens: estimate_tokens(&request.system_text)
                + estimate_tokens(&request.user_text),
            completion_tokens: estimate_tokens(&text),
            text,
            latency_s: 0.0,
            provider: config.provider.clone(),
            from_replay: false,
            tokens_estimated: true,
        })
    }
}

// Shared handles keep the call counter observable after the transport is
// boxed into a gateway.
impl<T: Transport + ?Sized> Transport for std::rc::Rc<T> {
    fn send(
        &self,
        request: &ChatRequest,
        config: &ProviderConfig,
    ) -> Result<ChatResponse, GatewayError> {
        (**self).send(request, config)
    }
}

/// Extract Modelica source from a model reply. If the reply contains fenced
/// code blocks, their interiors are concatenated; otherwise the whole reply
/// is trimmed and used as-is.
pub fn extract_code(response_text: &str) -> Result<String, GatewayError> {
    let mut fenced: Vec<&str> = Vec::new();
    let mut in_fence = false;
    for line in response_text.lines() {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            fenced.push(line);
        }
    }
    let code = if fenced.is_empty() {
        response_text.trim().to_string()
    } else {
        fenced.join("\n").trim().to_string()
    };
    if code.is_empty() {
        return Err(GatewayError::EmptyCode);
    }
    Ok(code)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelMetrics {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_mean_s: f64,
    pub latency_min_s: f64,
    pub latency_max_s: f64,
}

/// Per-model call counts, token totals, and latency statistics.
pub fn metrics_summary(responses: &[ChatResponse]) -> BTreeMap<String, ModelMetrics> {
    let mut out: BTreeMap<String, ModelMetrics> = BTreeMap::new();
    let mut latencies: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in responses {
        let m = out.entry(r.model_id.clone()).or_default();
        m.calls += 1;
        m.prompt_tokens += r.prompt_tokens;
        m.completion_tokens += r.completion_tokens;
        latencies.entry(r.model_id.clone()).or_default().push(r.latency_s);
    }
    for (model, lats) in latencies {
        let m = out.get_mut(&model).unwrap();
        m.latency_mean_s = lats.iter().sum::<f64>() / lats.len() as f64;
        m.latency_min_s = lats.iter().cloned().fold(f64::INFINITY, f64::min);
        m.latency_max_s = lats.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    out
}
