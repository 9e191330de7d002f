//! Language-model gateway: scripted, function-backed, cassette record/replay and remote backends.

mod remote;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use remote::{RemoteClient, RemoteConfig, API_KEY_ENV, BASE_URL_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Message {
        Message { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> ChatRequest {
        ChatRequest { model: model.into(), messages, temperature: 0.0, max_tokens: 1024 }
    }

    /// `sha256:` over the canonical JSON encoding (fixed field order, no whitespace).
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        format!("sha256:{}", hex::encode(Sha256::digest(&bytes)))
    }

    /// Text of the final user message.
    pub fn last_user_text(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == Role::User).map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LmError {
    #[error("no cassette entry for request {digest} (call {call})")]
    CassetteMiss { digest: String, call: usize },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("endpoint rejected the credential (HTTP {status})")]
    AuthFailure { status: u16 },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Protocol(String),
    #[error("missing configuration: {0}")]
    Config(String),
    #[error("scripted replies exhausted after {0} call(s)")]
    ScriptExhausted(usize),
    #[error("i/o failure: {0}")]
    Io(String),
}

/// All model traffic goes through this trait. Implementations serialize calls internally.
pub trait LmClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError>;
}

impl<T: LmClient + ?Sized> LmClient for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        (**self).complete(request)
    }
}

impl<T: LmClient + ?Sized> LmClient for &T {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        (**self).complete(request)
    }
}

/// Rough token count for offline backends: one token per four bytes, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

fn estimated_usage(request: &ChatRequest, reply: &str) -> Usage {
    Usage {
        prompt_tokens: request.messages.iter().map(|m| estimate_tokens(&m.content)).sum(),
        completion_tokens: estimate_tokens(reply),
    }
}

/// Returns the given replies in order.
pub struct ScriptedClient {
    replies: Vec<String>,
    next: Mutex<usize>,
}

impl ScriptedClient {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> ScriptedClient {
        ScriptedClient { replies: replies.into_iter().map(Into::into).collect(), next: Mutex::new(0) }
    }

    pub fn calls(&self) -> usize {
        *self.next.lock().unwrap()
    }
}

impl LmClient for ScriptedClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        let mut next = self.next.lock().unwrap();
        let text = self.replies.get(*next).cloned().ok_or(LmError::ScriptExhausted(*next))?;
        *next += 1;
        Ok(ChatResponse { usage: estimated_usage(request, &text), text, backend: "scripted".into() })
    }
}

type Responder = dyn Fn(&ChatRequest) -> Result<String, LmError> + Send + Sync;

/// Wraps a function as a model; used for simulated agents.
pub struct FnClient {
    tag: String,
    respond: Box<Responder>,
}

impl FnClient {
    pub fn new(
        tag: impl Into<String>,
        f: impl Fn(&ChatRequest) -> Result<String, LmError> + Send + Sync + 'static,
    ) -> FnClient {
        FnClient { tag: tag.into(), respond: Box::new(f) }
    }
}

impl LmClient for FnClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        let text = (self.respond)(request)?;
        Ok(ChatResponse { usage: estimated_usage(request, &text), text, backend: self.tag.clone() })
    }
}

// ---- cassettes ----

pub const CASSETTE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub digest: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cassette {
    pub schema_version: u32,
    pub entries: Vec<CassetteEntry>,
}

impl Default for Cassette {
    fn default() -> Self {
        Cassette { schema_version: CASSETTE_SCHEMA_VERSION, entries: Vec::new() }
    }
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Cassette, LmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LmError::Io(format!("{}: {e}", path.display())))?;
        let c: Cassette = serde_json::from_str(&text).map_err(|e| LmError::Io(format!("{}: {e}", path.display())))?;
        if c.schema_version != CASSETTE_SCHEMA_VERSION {
            return Err(LmError::Io(format!("unsupported cassette schema_version {}", c.schema_version)));
        }
        Ok(c)
    }

    /// Write via a sibling temp file and rename; one entry per line.
    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let lines: Vec<String> = self.entries.iter().map(entry_line).collect();
        write_document(self.schema_version, &lines, path)
    }

    pub fn total_usage(&self) -> Usage {
        let mut u = Usage::default();
        for e in &self.entries {
            u += e.response.usage;
        }
        u
    }
}

fn entry_line(entry: &CassetteEntry) -> String {
    serde_json::to_string(entry).expect("entry serializes")
}

fn write_document(schema_version: u32, lines: &[String], path: &Path) -> Result<(), LmError> {
    let io = |e: std::io::Error| LmError::Io(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    let body = if lines.is_empty() { String::new() } else { format!("\n{}\n", lines.join(",\n")) };
    let text = format!("{{\"schema_version\": {schema_version}, \"entries\": [{body}]}}\n");
    std::io::Write::write_all(&mut tmp, text.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    /// Look up by request digest; repeated identical requests consume matching entries in order.
    Digest,
    /// Serve entries strictly in recorded order; each request must match the next entry.
    Sequence,
}

struct ReplayCursor {
    calls: usize,
    used: BTreeMap<String, usize>,
}

pub struct ReplayClient {
    cassette: Cassette,
    mode: ReplayMode,
    cursor: Mutex<ReplayCursor>,
}

impl ReplayClient {
    pub fn new(cassette: Cassette, mode: ReplayMode) -> ReplayClient {
        ReplayClient { cassette, mode, cursor: Mutex::new(ReplayCursor { calls: 0, used: BTreeMap::new() }) }
    }

    pub fn open(path: &Path, mode: ReplayMode) -> Result<ReplayClient, LmError> {
        Ok(ReplayClient::new(Cassette::load(path)?, mode))
    }
}

impl LmClient for ReplayClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        let digest = request.digest();
        let mut cur = self.cursor.lock().unwrap();
        let call = cur.calls;
        cur.calls += 1;
        let miss = || LmError::CassetteMiss { digest: digest.clone(), call };
        match self.mode {
            ReplayMode::Sequence => {
                let entry = self.cassette.entries.get(call).ok_or_else(miss)?;
                if entry.digest != digest {
                    return Err(miss());
                }
                Ok(entry.response.clone())
            }
            ReplayMode::Digest => {
                let matching: Vec<&CassetteEntry> =
                    self.cassette.entries.iter().filter(|e| e.digest == digest).collect();
                if matching.is_empty() {
                    return Err(miss());
                }
                let k = cur.used.entry(digest.clone()).or_insert(0);
                // past the recorded repeats, keep answering with the last one
                let entry = matching[(*k).min(matching.len() - 1)];
                *k += 1;
                Ok(entry.response.clone())
            }
        }
    }
}

/// Forwards to an inner client and appends every successful call to a cassette file.
pub struct RecordingClient<C> {
    inner: C,
    path: PathBuf,
    cassette: Mutex<(Cassette, Vec<String>)>,
}

impl<C: LmClient> RecordingClient<C> {
    /// Creates (or truncates) the cassette file immediately.
    pub fn create(inner: C, path: &Path) -> Result<RecordingClient<C>, LmError> {
        let cassette = Cassette::default();
        cassette.save(path)?;
        Ok(RecordingClient { inner, path: path.to_path_buf(), cassette: Mutex::new((cassette, Vec::new())) })
    }

    pub fn cassette(&self) -> Cassette {
        self.cassette.lock().unwrap().0.clone()
    }
}

impl<C: LmClient> LmClient for RecordingClient<C> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        // hold the lock across the call so entries keep call order
        let mut guard = self.cassette.lock().unwrap();
        let response = self.inner.complete(request)?;
        let entry = CassetteEntry { digest: request.digest(), request: request.clone(), response: response.clone() };
        let (cassette, lines) = &mut *guard;
        lines.push(entry_line(&entry));
        cassette.entries.push(entry);
        write_document(cassette.schema_version, lines, &self.path)?;
        Ok(response)
    }
}
