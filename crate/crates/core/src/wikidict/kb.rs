//! Knowledge-base access: an entity search endpoint plus SPARQL lookups for
//! `P31` (instance of) in both directions, fronted by an on-disk cache.
//!
//! Every response is normalized and stored as canonical JSON in
//! `<cache_dir>/<sha256 of the request>.json`. In offline mode no transport
//! exists at all, so lookups are served from the cache or fail with
//! [`KbError::FixtureMissing`].

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{is_qid, EntityRecord, FineClass};
use crate::seed::sha256_hex;

pub const DEFAULT_API_ENDPOINT: &str = "https://www.wikidata.org/w/api.php";
pub const DEFAULT_SPARQL_ENDPOINT: &str = "https://query.wikidata.org/sparql";
/// Overrides the entity search endpoint.
pub const KB_ENDPOINT_ENV: &str = "NERSTRESS_KB_ENDPOINT";
/// Overrides the SPARQL endpoint.
pub const SPARQL_ENDPOINT_ENV: &str = "NERSTRESS_SPARQL_ENDPOINT";

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("knowledge-base request failed: {0}")]
    Network(String),
    #[error("knowledge-base endpoint returned HTTP {0}")]
    Status(u16),
    #[error("malformed knowledge-base response: {0}")]
    Malformed(String),
    #[error("offline and no cached response for {request} (expected {path})")]
    FixtureMissing { request: String, path: String },
    #[error("response cache: {0}")]
    Cache(#[from] io::Error),
    #[error("not a QID: {0:?}")]
    InvalidQid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum KbRequest {
    Search { query: String, language: String, limit: usize },
    InstanceOf { qid: String },
    Members { class: String, max: usize },
}

impl KbRequest {
    pub fn canonical_json(&self) -> String {
        // serde_json maps keep keys sorted, so the round trip through Value is canonical
        serde_json::to_value(self).map(|v| v.to_string()).unwrap_or_default()
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

/// Fetches a normalized response for a request.
pub trait KbTransport: Send + Sync {
    fn fetch(&self, request: &KbRequest) -> Result<Value, KbError>;
}

/// Responses stored as `<digest>.json` files holding `{request, response}`.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, request: &KbRequest) -> PathBuf {
        self.dir.join(format!("{}.json", request.digest()))
    }

    pub fn get(&self, request: &KbRequest) -> Result<Option<Value>, KbError> {
        let path = self.path_for(request);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut doc: Value = serde_json::from_str(&text).map_err(|e| KbError::Malformed(format!("{}: {e}", path.display())))?;
        doc.get_mut("response")
            .map(Value::take)
            .map(Some)
            .ok_or_else(|| KbError::Malformed(format!("{}: no response field", path.display())))
    }

    pub fn put(&self, request: &KbRequest, response: &Value) -> Result<(), KbError> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(request);
        let tmp = path.with_extension(format!("json.tmp{}", std::process::id()));
        fs::write(&tmp, canonical_document(request, response))?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// The exact bytes stored for a cached response.
pub fn canonical_document(request: &KbRequest, response: &Value) -> String {
    let doc = json!({ "request": request, "response": response });
    let mut text = serde_json::to_string_pretty(&doc).unwrap_or_default();
    text.push('\n');
    text
}

#[derive(Debug, Clone)]
pub struct KbConfig {
    pub api_endpoint: String,
    pub sparql_endpoint: String,
    pub timeout: Duration,
    pub cache_dir: Option<PathBuf>,
    pub offline: bool,
    /// Minimum spacing between two network requests.
    pub min_interval: Duration,
    pub language: String,
    pub search_limit: usize,
    pub user_agent: String,
}

impl Default for KbConfig {
    fn default() -> Self {
        KbConfig {
            api_endpoint: DEFAULT_API_ENDPOINT.to_string(),
            sparql_endpoint: DEFAULT_SPARQL_ENDPOINT.to_string(),
            timeout: Duration::from_secs(30),
            cache_dir: None,
            offline: false,
            min_interval: Duration::from_millis(200),
            language: "en".to_string(),
            search_limit: 10,
            user_agent: concat!("nerstress/", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

impl KbConfig {
    /// Default configuration with endpoint overrides taken from the environment.
    pub fn from_env() -> Self {
        let mut config = KbConfig::default();
        if let Ok(v) = std::env::var(KB_ENDPOINT_ENV) {
            config.api_endpoint = v;
        }
        if let Ok(v) = std::env::var(SPARQL_ENDPOINT_ENV) {
            config.sparql_endpoint = v;
        }
        config
    }

    pub fn offline(cache_dir: impl Into<PathBuf>) -> Self {
        KbConfig { cache_dir: Some(cache_dir.into()), offline: true, ..KbConfig::default() }
    }
}

pub struct KbClient {
    config: KbConfig,
    cache: Option<ResponseCache>,
    transport: Option<Box<dyn KbTransport>>,
    last_request: Mutex<Option<Instant>>,
}

impl KbClient {
    /// Builds a client; an HTTP transport is only created when online.
    pub fn new(config: KbConfig) -> Result<Self, KbError> {
        let transport: Option<Box<dyn KbTransport>> = if config.offline {
            None
        } else {
            Some(Box::new(HttpTransport::new(&config)?))
        };
        Ok(Self::assemble(config, transport))
    }

    /// Client with a caller-supplied transport. The transport is dropped when
    /// the configuration is offline.
    pub fn with_transport(config: KbConfig, transport: Box<dyn KbTransport>) -> Self {
        let transport = if config.offline { None } else { Some(transport) };
        Self::assemble(config, transport)
    }

    fn assemble(config: KbConfig, transport: Option<Box<dyn KbTransport>>) -> Self {
        let cache = config.cache_dir.clone().map(ResponseCache::new);
        KbClient { config, cache, transport, last_request: Mutex::new(None) }
    }

    pub fn config(&self) -> &KbConfig {
        &self.config
    }

    pub fn is_offline(&self) -> bool {
        self.transport.is_none()
    }

    pub fn search(&self, query: &str) -> Result<Vec<EntityRecord>, KbError> {
        let req = KbRequest::Search {
            query: query.to_string(),
            language: self.config.language.clone(),
            limit: self.config.search_limit,
        };
        decode(self.request(&req)?)
    }

    pub fn instance_of(&self, qid: &str) -> Result<Vec<FineClass>, KbError> {
        if !is_qid(qid) {
            return Err(KbError::InvalidQid(qid.to_string()));
        }
        decode(self.request(&KbRequest::InstanceOf { qid: qid.to_string() })?)
    }

    pub fn members(&self, class: &str, max: usize) -> Result<Vec<EntityRecord>, KbError> {
        if !is_qid(class) {
            return Err(KbError::InvalidQid(class.to_string()));
        }
        decode(self.request(&KbRequest::Members { class: class.to_string(), max })?)
    }

    fn request(&self, req: &KbRequest) -> Result<Value, KbError> {
        if let Some(cache) = &self.cache {
            if let Some(v) = cache.get(req)? {
                return Ok(v);
            }
        }
        let Some(transport) = &self.transport else {
            let path = self
                .cache
                .as_ref()
                .map(|c| c.path_for(req).display().to_string())
                .unwrap_or_else(|| "<no cache directory>".to_string());
            return Err(KbError::FixtureMissing { request: req.canonical_json(), path });
        };
        let value = {
            // one request at a time, spaced by min_interval
            let mut last = self.last_request.lock().unwrap_or_else(|p| p.into_inner());
            if let Some(t) = *last {
                let elapsed = t.elapsed();
                if elapsed < self.config.min_interval {
                    std::thread::sleep(self.config.min_interval - elapsed);
                }
            }
            log::debug!("kb request {}", req.canonical_json());
            let result = transport.fetch(req);
            *last = Some(Instant::now());
            result?
        };
        if let Some(cache) = &self.cache {
            cache.put(req, &value)?;
        }
        Ok(value)
    }
}

fn decode<T: serde::de::DeserializeOwned>(value: Value) -> Result<T, KbError> {
    serde_json::from_value(value).map_err(|e| KbError::Malformed(e.to_string()))
}

/// Live transport: `wbsearchentities` for search, SPARQL for `P31`.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    api_endpoint: String,
    sparql_endpoint: String,
}

impl HttpTransport {
    pub fn new(config: &KbConfig) -> Result<Self, KbError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .user_agent(config.user_agent.clone())
            .build()
            .map_err(|e| KbError::Network(e.to_string()))?;
        Ok(HttpTransport {
            client,
            api_endpoint: config.api_endpoint.clone(),
            sparql_endpoint: config.sparql_endpoint.clone(),
        })
    }

    fn get_json(&self, url: &str, query: &[(&str, &str)]) -> Result<Value, KbError> {
        let response = self
            .client
            .get(url)
            .query(query)
            .header("Accept", "application/sparql-results+json, application/json")
            .send()
            .map_err(|e| KbError::Network(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(KbError::Status(status.as_u16()));
        }
        let text = response.text().map_err(|e| KbError::Network(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| KbError::Malformed(e.to_string()))
    }

    fn sparql(&self, query: &str) -> Result<Vec<(String, String)>, KbError> {
        let doc = self.get_json(&self.sparql_endpoint, &[("query", query), ("format", "json")])?;
        parse_sparql_bindings(&doc)
    }
}

impl KbTransport for HttpTransport {
    fn fetch(&self, request: &KbRequest) -> Result<Value, KbError> {
        match request {
            KbRequest::Search { query, language, limit } => {
                let limit = limit.to_string();
                let doc = self.get_json(
                    &self.api_endpoint,
                    &[
                        ("action", "wbsearchentities"),
                        ("search", query),
                        ("language", language),
                        ("uselang", language),
                        ("type", "item"),
                        ("limit", &limit),
                        ("format", "json"),
                    ],
                )?;
                let records = parse_search_response(&doc)?;
                Ok(serde_json::to_value(records).unwrap_or_default())
            }
            KbRequest::InstanceOf { qid } => {
                if !is_qid(qid) {
                    return Err(KbError::InvalidQid(qid.clone()));
                }
                let q = format!(
                    "SELECT ?item ?itemLabel WHERE {{ wd:{qid} wdt:P31 ?item . \
                     SERVICE wikibase:label {{ bd:serviceParam wikibase:language \"en\". }} }}"
                );
                let mut classes: Vec<FineClass> =
                    self.sparql(&q)?.into_iter().map(|(qid, label)| FineClass { qid, label }).collect();
                classes.sort_by_key(|c| super::qid_number(&c.qid));
                classes.dedup_by(|a, b| a.qid == b.qid);
                Ok(serde_json::to_value(classes).unwrap_or_default())
            }
            KbRequest::Members { class, max } => {
                if !is_qid(class) {
                    return Err(KbError::InvalidQid(class.clone()));
                }
                let q = format!(
                    "SELECT ?item ?itemLabel WHERE {{ ?item wdt:P31 wd:{class} . \
                     SERVICE wikibase:label {{ bd:serviceParam wikibase:language \"en\". }} }} LIMIT {max}"
                );
                let mut members: Vec<EntityRecord> = self
                    .sparql(&q)?
                    .into_iter()
                    .map(|(qid, label)| EntityRecord { qid, label, aliases: Vec::new() })
                    .collect();
                members.sort_by_key(|m| super::qid_number(&m.qid));
                members.dedup_by(|a, b| a.qid == b.qid);
                Ok(serde_json::to_value(members).unwrap_or_default())
            }
        }
    }
}

/// Normalizes a `wbsearchentities` response. Alias matches reported in the
/// `match` field are folded into `aliases`.
pub fn parse_search_response(doc: &Value) -> Result<Vec<EntityRecord>, KbError> {
    let hits = doc
        .get("search")
        .and_then(Value::as_array)
        .ok_or_else(|| KbError::Malformed("search response without a search array".into()))?;
    let mut records = Vec::with_capacity(hits.len());
    for hit in hits {
        let Some(qid) = hit.get("id").and_then(Value::as_str).filter(|q| is_qid(q)) else {
            continue;
        };
        let label = hit.get("label").and_then(Value::as_str).unwrap_or(qid).to_string();
        let mut aliases: Vec<String> = hit
            .get("aliases")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default();
        if let Some(m) = hit.get("match") {
            if m.get("type").and_then(Value::as_str) == Some("alias") {
                if let Some(text) = m.get("text").and_then(Value::as_str) {
                    if !aliases.iter().any(|a| a == text) {
                        aliases.push(text.to_string());
                    }
                }
            }
        }
        records.push(EntityRecord { qid: qid.to_string(), label, aliases });
    }
    Ok(records)
}

/// Extracts `(qid, label)` pairs from SPARQL JSON results selecting
/// `?item ?itemLabel`.
pub fn parse_sparql_bindings(doc: &Value) -> Result<Vec<(String, String)>, KbError> {
    let bindings = doc
        .pointer("/results/bindings")
        .and_then(Value::as_array)
        .ok_or_else(|| KbError::Malformed("SPARQL response without results.bindings".into()))?;
    let mut out = Vec::with_capacity(bindings.len());
    for b in bindings {
        let Some(uri) = b.pointer("/item/value").and_then(Value::as_str) else {
            continue;
        };
        let qid = uri.rsplit('/').next().unwrap_or_default();
        if !is_qid(qid) {
            continue;
        }
        let label = b.pointer("/itemLabel/value").and_then(Value::as_str).unwrap_or(qid);
        out.push((qid.to_string(), label.to_string()));
    }
    Ok(out)
}
