//! Entity descriptions: fetch, cache, and serve for prompt enrichment.
//!
//! Descriptions come from a configurable KB summary endpoint and land in an
//! append-friendly JSON Lines cache keyed by entity label, one record per
//! line: `{"entity", "text", "fetched_at", "source"}` with `text: null`
//! marking a confirmed not-found. Full texts are stored; truncation happens
//! only at serve time. Reads go through an in-memory index loaded at open;
//! fetch-and-append writes are serialized through a single writer, so the
//! store can be shared across pipeline workers.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::node::NodeId;

#[derive(Debug, Error)]
pub enum DescriptionError {
    #[error("cache I/O failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("request failed after {attempts} attempts: {last_error}")]
    RetriesExhausted { attempts: u32, last_error: String },
    #[error("endpoint failure: {0}")]
    Endpoint(String),
    #[error("response lacks field `{0}`")]
    MissingField(String),
}

/// A retrieved entity description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Description {
    pub entity: NodeId,
    pub text: String,
    /// Unix seconds at fetch time.
    pub fetched_at: u64,
    /// Identifier of the endpoint (or fixture) the text came from.
    pub source: String,
}

/// First `limit` characters of a text; shorter texts pass through
/// unchanged. Counts Unicode scalar values, never bytes, so the cut cannot
/// split a code point. Idempotent.
pub fn truncate_for_prompt(text: &str, limit: usize) -> String {
    match text.char_indices().nth(limit) {
        Some((byte_idx, _)) => text[..byte_idx].to_string(),
        None => text.to_string(),
    }
}

/// Serves descriptions to the pruning pipeline. Absence covers unknown
/// entities, cached not-founds, and fetch failures alike; the query builder
/// renders absent descriptions as "no description available".
pub trait DescriptionProvider: Send + Sync {
    fn describe(&self, entity: &NodeId) -> Option<Description>;
}

/// A provider with nothing to say; the non-enhanced baseline uses it.
pub struct NoDescriptions;

impl DescriptionProvider for NoDescriptions {
    fn describe(&self, _entity: &NodeId) -> Option<Description> {
        None
    }
}

/// Fetches one description from a remote KB. `Ok(None)` is a confirmed
/// not-found (cacheable); `Err` is a transient failure (not cached).
pub trait Fetcher: Send + Sync {
    fn fetch(&self, entity: &str) -> Result<Option<String>, FetchError>;
    /// Identifier recorded in the cache's `source` field.
    fn source_id(&self) -> String;
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    entity: NodeId,
    text: Option<String>,
    fetched_at: u64,
    source: String,
}

/// Disk-backed description store. Reads go through a read lock on the
/// in-memory index and never touch the file; fetch-and-append writes are
/// serialized through the single writer lock.
pub struct DescriptionStore {
    path: PathBuf,
    index: RwLock<HashMap<NodeId, Option<Description>>>,
    writer: Mutex<BufWriter<File>>,
    fetcher: Option<Box<dyn Fetcher>>,
    fetch_failures: AtomicU64,
    fetch_calls: AtomicU64,
}

impl DescriptionStore {
    /// Opens (creating if missing) a cache file. Corrupt lines are dropped
    /// and the file is compacted to the surviving records; each dropped
    /// line is reported as a warning.
    ///
    /// `fetcher: None` is offline mode: misses are served as absent and
    /// nothing touches the network.
    pub fn open(
        path: impl AsRef<Path>,
        fetcher: Option<Box<dyn Fetcher>>,
    ) -> Result<(Self, Vec<String>), DescriptionError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| DescriptionError::Io {
            path: path.clone(),
            source,
        };

        let mut index: HashMap<NodeId, Option<Description>> = HashMap::new();
        let mut warnings = Vec::new();
        let mut valid_lines: Vec<String> = Vec::new();
        let mut needs_rebuild = false;

        if path.exists() {
            let file = File::open(&path).map_err(io_err)?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(record) => {
                        let entry = record.text.map(|text| Description {
                            entity: record.entity.clone(),
                            text,
                            fetched_at: record.fetched_at,
                            source: record.source,
                        });
                        index.insert(record.entity, entry);
                        valid_lines.push(line);
                    }
                    Err(e) => {
                        warnings.push(format!(
                            "description cache {}:{}: dropping corrupt line ({e})",
                            path.display(),
                            idx + 1
                        ));
                        needs_rebuild = true;
                    }
                }
            }
        }

        if needs_rebuild {
            let mut rebuilt = String::new();
            for line in &valid_lines {
                rebuilt.push_str(line);
                rebuilt.push('\n');
            }
            std::fs::write(&path, rebuilt).map_err(io_err)?;
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        Ok((
            DescriptionStore {
                path,
                index: RwLock::new(index),
                writer: Mutex::new(BufWriter::new(file)),
                fetcher,
                fetch_failures: AtomicU64::new(0),
                fetch_calls: AtomicU64::new(0),
            },
            warnings,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Cached entries, found or not-found.
    pub fn len(&self) -> usize {
        self.index.read().expect("index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fetch attempts that failed after retries since open.
    pub fn fetch_failures(&self) -> u64 {
        self.fetch_failures.load(Ordering::Relaxed)
    }

    /// Network fetches issued since open (cache hits issue none).
    pub fn fetch_calls(&self) -> u64 {
        self.fetch_calls.load(Ordering::Relaxed)
    }

    fn get(&self, entity: &NodeId) -> Option<Description> {
        if let Some(cached) = self.index.read().expect("index lock").get(entity) {
            return cached.clone();
        }
        let Some(fetcher) = &self.fetcher else {
            // Offline: a miss stays a miss and is not recorded as absent.
            return None;
        };
        // No lock held while the network round trip runs. Two threads may
        // race to fetch the same entity; both write the same answer and
        // the loader keeps the last cache line, so that is harmless.
        self.fetch_calls.fetch_add(1, Ordering::Relaxed);
        match fetcher.fetch(entity.as_str()) {
            Ok(found) => {
                let fetched_at = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .unwrap_or(Duration::ZERO)
                    .as_secs();
                let record = CacheLine {
                    entity: entity.clone(),
                    text: found.clone(),
                    fetched_at,
                    source: fetcher.source_id(),
                };
                {
                    let mut writer = self.writer.lock().expect("writer lock");
                    if let Ok(line) = serde_json::to_string(&record) {
                        let _ = writeln!(writer, "{line}");
                        let _ = writer.flush();
                    }
                }
                let entry = found.map(|text| Description {
                    entity: entity.clone(),
                    text,
                    fetched_at,
                    source: fetcher.source_id(),
                });
                self.index
                    .write()
                    .expect("index lock")
                    .insert(entity.clone(), entry.clone());
                entry
            }
            Err(_) => {
                // Transient: serve absent now, try again next time.
                self.fetch_failures.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }
}

impl DescriptionProvider for DescriptionStore {
    fn describe(&self, entity: &NodeId) -> Option<Description> {
        self.get(entity)
    }
}

/// Fetches summaries over HTTP from a URL template with one `{entity}`
/// placeholder, reading a single text field out of the JSON response
/// (dot-separated path, e.g. `extract`). 404 means confirmed not-found.
pub struct HttpFetcher {
    url_template: String,
    field_path: String,
    agent: ureq::Agent,
    max_retries: u32,
    backoff_base_ms: u64,
}

impl HttpFetcher {
    pub fn new(url_template: &str, field_path: &str, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        HttpFetcher {
            url_template: url_template.to_string(),
            field_path: field_path.to_string(),
            agent,
            max_retries: 3,
            backoff_base_ms: 250,
        }
    }

    pub fn with_retries(mut self, max_retries: u32, backoff_base_ms: u64) -> Self {
        self.max_retries = max_retries;
        self.backoff_base_ms = backoff_base_ms;
        self
    }

    fn url_for(&self, entity: &str) -> String {
        self.url_template
            .replace("{entity}", &percent_encode(entity))
    }

    fn attempt(&self, url: &str) -> Result<Option<String>, (bool, String)> {
        let mut response = match self.agent.get(url).call() {
            Ok(r) => r,
            Err(e) => {
                let retryable = matches!(
                    e,
                    ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed
                );
                return Err((retryable, e.to_string()));
            }
        };
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            404 => return Ok(None),
            429 | 500..=599 => return Err((true, format!("HTTP {status}"))),
            other => return Err((false, format!("HTTP {other}"))),
        }
        let json: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| (false, e.to_string()))?;
        let mut value = &json;
        for key in self.field_path.split('.') {
            value = match value.get(key) {
                Some(v) => v,
                None => return Err((false, format!("missing field `{}`", self.field_path))),
            };
        }
        match value.as_str() {
            Some(text) => Ok(Some(text.to_string())),
            None => Err((false, format!("field `{}` is not text", self.field_path))),
        }
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, entity: &str) -> Result<Option<String>, FetchError> {
        let url = self.url_for(entity);
        let mut attempt_no = 0u32;
        loop {
            match self.attempt(&url) {
                Ok(found) => return Ok(found),
                Err((retryable, message)) => {
                    if !retryable {
                        return Err(FetchError::Endpoint(message));
                    }
                    if attempt_no >= self.max_retries {
                        return Err(FetchError::RetriesExhausted {
                            attempts: attempt_no + 1,
                            last_error: message,
                        });
                    }
                    std::thread::sleep(Duration::from_millis(self.backoff_base_ms << attempt_no));
                    attempt_no += 1;
                }
            }
        }
    }

    fn source_id(&self) -> String {
        self.url_template.clone()
    }
}

fn percent_encode(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for byte in raw.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char);
            }
            other => {
                out.push('%');
                out.push_str(&format!("{other:02X}"));
            }
        }
    }
    out
}
