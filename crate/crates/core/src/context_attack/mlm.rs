//! Masked-LM fill protocol, the in-process stub provider and the HTTP client.

use std::collections::HashSet;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MASK_TOKEN: &str = "[MASK]";
/// Overrides the masked-LM service URL.
pub const MLM_ENDPOINT_ENV: &str = "NERSTRESS_MLM_ENDPOINT";
/// Largest `top_k` the stub accepts.
pub const STUB_MAX_TOP_K: usize = 1000;

const BUILTIN_LEXICON: &str = include_str!("../../data/stub_lexicon.txt");
const CONFORMANCE_VECTORS: &str = include_str!("../../data/mlm_conformance.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillRequest {
    pub tokens: Vec<String>,
    pub mask_index: usize,
    pub top_k: usize,
}

impl FillRequest {
    /// `tokens` with position `mask_index` replaced by the mask sentinel.
    pub fn masked(tokens: &[String], mask_index: usize, top_k: usize) -> Self {
        let mut tokens = tokens.to_vec();
        tokens[mask_index] = MASK_TOKEN.to_string();
        FillRequest { tokens, mask_index, top_k }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub token: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillResponse {
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("masked-LM request failed: {0}")]
    Transport(String),
    #[error("masked-LM service returned HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("masked-LM response violates the fill protocol: {0}")]
    Protocol(String),
}

/// Fills one masked position with ranked candidates.
pub trait MlmProvider: Send + Sync {
    fn fill(&self, request: &FillRequest) -> Result<Vec<Candidate>, ProviderError>;

    fn name(&self) -> String;
}

/// A rejected request: 400 for malformed bodies, 422 for `top_k` outside
/// `1..=max_top_k`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("HTTP {status}: {message}")]
pub struct Rejection {
    pub status: u16,
    pub message: String,
}

pub fn validate_request(request: &FillRequest, max_top_k: usize) -> Result<(), Rejection> {
    let bad = |message: String| Err(Rejection { status: 400, message });
    if request.mask_index >= request.tokens.len() {
        return bad(format!("mask_index {} outside {} tokens", request.mask_index, request.tokens.len()));
    }
    if request.tokens[request.mask_index] != MASK_TOKEN {
        return bad(format!("tokens[{}] is not {MASK_TOKEN}", request.mask_index));
    }
    if request.tokens.iter().filter(|t| *t == MASK_TOKEN).count() != 1 {
        return bad("exactly one mask sentinel is allowed".into());
    }
    if request.top_k == 0 || request.top_k > max_top_k {
        return Err(Rejection { status: 422, message: format!("top_k must lie in 1..={max_top_k}") });
    }
    Ok(())
}

/// Checks a response against the protocol: at most `top_k` candidates, no
/// duplicate tokens, finite non-increasing scores.
pub fn validate_response(request: &FillRequest, candidates: &[Candidate]) -> Result<(), ProviderError> {
    if candidates.len() > request.top_k {
        return Err(ProviderError::Protocol(format!("{} candidates for top_k {}", candidates.len(), request.top_k)));
    }
    let mut seen = HashSet::with_capacity(candidates.len());
    for c in candidates {
        if !seen.insert(c.token.as_str()) {
            return Err(ProviderError::Protocol(format!("duplicate candidate {:?}", c.token)));
        }
        if !c.score.is_finite() {
            return Err(ProviderError::Protocol(format!("non-finite score for {:?}", c.token)));
        }
    }
    if candidates.windows(2).any(|w| w[1].score > w[0].score) {
        return Err(ProviderError::Protocol("scores are not sorted in descending order".into()));
    }
    Ok(())
}

/// Deterministic provider over a fixed lexicon. For each request the
/// lexicon is rotated by an offset derived from the request's context, and
/// the candidate at rank `r` scores `1 / (r + 1)`. Every request is recorded.
pub struct StubProvider {
    lexicon: Vec<String>,
    label: String,
    requests: Mutex<Vec<FillRequest>>,
}

impl StubProvider {
    /// Lexicon text: one token per line, `#` comments, duplicates dropped.
    pub fn from_lexicon(text: &str, label: impl Into<String>) -> Result<Self, ProviderError> {
        let mut seen = HashSet::new();
        let lexicon: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter(|l| seen.insert(l.to_string()))
            .map(str::to_string)
            .collect();
        if lexicon.is_empty() {
            return Err(ProviderError::Protocol("stub lexicon is empty".into()));
        }
        if let Some(bad) = lexicon.iter().find(|t| t.contains(char::is_whitespace) || *t == MASK_TOKEN) {
            return Err(ProviderError::Protocol(format!("stub lexicon entry {bad:?} is not a single token")));
        }
        Ok(StubProvider { lexicon, label: label.into(), requests: Mutex::new(Vec::new()) })
    }

    pub fn builtin() -> Self {
        StubProvider::from_lexicon(BUILTIN_LEXICON, "stub:builtin").expect("bundled lexicon is valid")
    }

    pub fn lexicon(&self) -> &[String] {
        &self.lexicon
    }

    /// Requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<FillRequest> {
        self.requests.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn clear_requests(&self) {
        self.requests.lock().unwrap_or_else(|p| p.into_inner()).clear();
    }

    /// The response the stub gives for a valid request.
    pub fn candidates(&self, request: &FillRequest) -> Vec<Candidate> {
        let mut hasher = Sha256::new();
        for t in &request.tokens {
            hasher.update((t.len() as u64).to_le_bytes());
            hasher.update(t.as_bytes());
        }
        hasher.update((request.mask_index as u64).to_le_bytes());
        let digest = hasher.finalize();
        let offset = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) as usize % self.lexicon.len();
        (0..request.top_k.min(self.lexicon.len()))
            .map(|r| Candidate {
                token: self.lexicon[(offset + r) % self.lexicon.len()].clone(),
                score: 1.0 / (r as f64 + 1.0),
            })
            .collect()
    }
}

impl MlmProvider for StubProvider {
    fn fill(&self, request: &FillRequest) -> Result<Vec<Candidate>, ProviderError> {
        validate_request(request, STUB_MAX_TOP_K)
            .map_err(|r| ProviderError::Status { status: r.status, message: r.message })?;
        self.requests.lock().unwrap_or_else(|p| p.into_inner()).push(request.clone());
        Ok(self.candidates(request))
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

/// Client for a service speaking the fill protocol over HTTP.
pub struct HttpMlmProvider {
    client: reqwest::blocking::Client,
    base: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub status: String,
    #[serde(default)]
    pub model: Option<String>,
}

impl HttpMlmProvider {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpMlmProvider { client, base: base_url.trim_end_matches('/').to_string() })
    }

    pub fn health(&self) -> Result<HealthStatus, ProviderError> {
        let response = self
            .client
            .get(format!("{}/health", self.base))
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status { status: status.as_u16(), message: text });
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::Protocol(format!("health body: {e}")))
    }
}

impl MlmProvider for HttpMlmProvider {
    fn fill(&self, request: &FillRequest) -> Result<Vec<Candidate>, ProviderError> {
        let response = self
            .client
            .post(format!("{}/fill", self.base))
            .json(request)
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status { status: status.as_u16(), message: text });
        }
        let body: FillResponse = serde_json::from_str(&text).map_err(|e| ProviderError::Protocol(e.to_string()))?;
        validate_response(request, &body.candidates)?;
        Ok(body.candidates)
    }

    fn name(&self) -> String {
        format!("http:{}", self.base)
    }
}

/// One entry of the shared conformance vector file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceVector {
    pub name: String,
    pub request: serde_json::Value,
    pub expect: Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub status: u16,
    #[serde(default)]
    pub exact_candidates: Option<usize>,
    #[serde(default)]
    pub repeat_identical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceSuite {
    pub version: u32,
    pub mask_token: String,
    pub vectors: Vec<ConformanceVector>,
}

impl ConformanceSuite {
    pub fn bundled() -> Self {
        serde_json::from_str(CONFORMANCE_VECTORS).expect("bundled conformance vectors are valid")
    }
}

/// Outcome of sending one raw request body to a provider.
pub type RawOutcome = Result<Vec<Candidate>, u16>;

/// Runs every vector through `send`, which maps a raw JSON body to either
/// candidates or an HTTP status. Returns the names of failed vectors with a
/// reason.
pub fn run_conformance(suite: &ConformanceSuite, mut send: impl FnMut(&serde_json::Value) -> RawOutcome) -> Vec<(String, String)> {
    let mut failures = Vec::new();
    for v in &suite.vectors {
        let outcome = send(&v.request);
        let fail = |why: String| (v.name.clone(), why);
        match (&outcome, v.expect.status) {
            (Ok(candidates), 200) => {
                let request: FillRequest = match serde_json::from_value(v.request.clone()) {
                    Ok(r) => r,
                    Err(e) => {
                        failures.push(fail(format!("vector expects 200 but the request is malformed: {e}")));
                        continue;
                    }
                };
                if let Err(e) = validate_response(&request, candidates) {
                    failures.push(fail(e.to_string()));
                } else if v.expect.exact_candidates.is_some_and(|n| n != candidates.len()) {
                    failures.push(fail(format!("expected {:?} candidates, got {}", v.expect.exact_candidates, candidates.len())));
                } else if v.expect.repeat_identical && send(&v.request) != outcome {
                    failures.push(fail("repeated request gave a different response".into()));
                }
            }
            (Ok(_), want) => failures.push(fail(format!("expected HTTP {want}, got 200"))),
            (Err(got), want) if *got != want => failures.push(fail(format!("expected HTTP {want}, got {got}"))),
            (Err(_), _) => {}
        }
    }
    failures
}

/// Sends a raw body to an in-process provider the way a server would.
pub fn raw_fill(provider: &dyn MlmProvider, body: &serde_json::Value) -> RawOutcome {
    let request: FillRequest = serde_json::from_value(body.clone()).map_err(|_| 400u16)?;
    provider.fill(&request).map_err(|e| match e {
        ProviderError::Status { status, .. } => status,
        _ => 500,
    })
}
