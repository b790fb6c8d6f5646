//! Record/replay cassettes.
//!
//! A cassette maps request fingerprints to response text. Recording wraps
//! a live (or scripted) provider and captures every exchange; replay
//! serves the same run back byte-for-byte with no credential and no
//! network. Lookup is by fingerprint, so replay does not care about call
//! order.
//!
//! Cassettes never hold credentials: only fingerprints and response text
//! are written.

use super::{fingerprint, ChatRequest, ChatResponse, LlmError, Provider};
use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex};

pub const CASSETTE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cassette {
    pub version: u32,
    pub created_at: String,
    pub harness_version: String,
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn new(entries: Vec<CassetteEntry>) -> Cassette {
        Cassette {
            version: CASSETTE_VERSION,
            created_at: chrono::Utc::now().to_rfc3339(),
            harness_version: crate::HARNESS_VERSION.to_string(),
            entries,
        }
    }

    pub fn load(path: &Path) -> Result<Cassette, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        let cassette: Cassette = serde_json::from_str(&text)
            .map_err(|e| LlmError::MalformedCassette(format!("{}: {e}", path.display())))?;
        if cassette.version != CASSETTE_VERSION {
            return Err(LlmError::MalformedCassette(format!(
                "unsupported cassette version {} (expected {CASSETTE_VERSION})",
                cassette.version
            )));
        }
        Ok(cassette)
    }

    pub fn write_to(&self, path: &Path) -> Result<(), LlmError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| LlmError::Io(format!("serializing cassette: {e}")))?;
        std::fs::write(path, json + "\n")
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Default)]
struct RecordState {
    entries: Vec<CassetteEntry>,
    seen: HashSet<String>,
}

/// Wraps another provider and records every exchange.
///
/// A repeated fingerprint is an error by default: with temperature 0 the
/// same request should yield the same response, so asking twice usually
/// means a prompt lost its distinguishing marker and the cassette would
/// silently alias two calls. `allow_duplicates` downgrades this to
/// pass-through (the first recording wins).
pub struct RecordingProvider {
    inner: Arc<dyn Provider>,
    state: Mutex<RecordState>,
    allow_duplicates: bool,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn Provider>) -> RecordingProvider {
        RecordingProvider {
            inner,
            state: Mutex::new(RecordState::default()),
            allow_duplicates: false,
        }
    }

    pub fn allowing_duplicates(mut self) -> Self {
        self.allow_duplicates = true;
        self
    }

    /// Snapshot of everything recorded so far.
    pub fn cassette(&self) -> Cassette {
        let state = self.state.lock().expect("record lock");
        Cassette::new(state.entries.clone())
    }

    pub fn write_to(&self, path: &Path) -> Result<(), LlmError> {
        self.cassette().write_to(path)
    }
}

#[async_trait]
impl Provider for RecordingProvider {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let fp = fingerprint(request);
        {
            let state = self.state.lock().expect("record lock");
            if state.seen.contains(&fp) {
                if !self.allow_duplicates {
                    return Err(LlmError::DuplicateFingerprint { fingerprint: fp });
                }
                // Duplicate allowed: serve the first recording rather than
                // spending a second live call on an identical request.
                let recorded = state
                    .entries
                    .iter()
                    .find(|e| e.fingerprint == fp)
                    .expect("seen fingerprints have entries");
                return Ok(ChatResponse {
                    content: recorded.response.clone(),
                    model: request.model.clone(),
                    usage: None,
                });
            }
        }

        let response = self.inner.complete(request).await?;

        let mut state = self.state.lock().expect("record lock");
        // Two concurrent firsts can race; keep only one entry.
        if state.seen.insert(fp.clone()) {
            state.entries.push(CassetteEntry {
                fingerprint: fp,
                response: response.content.clone(),
            });
        }
        Ok(response)
    }
}

/// Serves recorded responses by fingerprint. Requests that were never
/// recorded fail with [`LlmError::ReplayMiss`].
#[derive(Debug)]
pub struct ReplayProvider {
    responses: HashMap<String, String>,
}

impl ReplayProvider {
    pub fn from_cassette(cassette: &Cassette) -> Result<ReplayProvider, LlmError> {
        let mut responses = HashMap::with_capacity(cassette.entries.len());
        for entry in &cassette.entries {
            if responses
                .insert(entry.fingerprint.clone(), entry.response.clone())
                .is_some()
            {
                return Err(LlmError::MalformedCassette(format!(
                    "fingerprint {} appears more than once",
                    entry.fingerprint
                )));
            }
        }
        Ok(ReplayProvider { responses })
    }

    pub fn load(path: &Path) -> Result<ReplayProvider, LlmError> {
        ReplayProvider::from_cassette(&Cassette::load(path)?)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

#[async_trait]
impl Provider for ReplayProvider {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let fp = fingerprint(request);
        match self.responses.get(&fp) {
            Some(content) => Ok(ChatResponse {
                content: content.clone(),
                model: request.model.clone(),
                usage: None,
            }),
            None => Err(LlmError::ReplayMiss { fingerprint: fp }),
        }
    }
}
