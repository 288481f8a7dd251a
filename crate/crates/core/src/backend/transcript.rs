use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest};

/// One request/response exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub backend: String,
    pub request: CompletionRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Records every exchange with the inner backend, in memory and optionally
/// as JSON lines appended to a file.
pub struct TranscriptBackend<B> {
    inner: B,
    entries: Mutex<Vec<TranscriptEntry>>,
    sink: Mutex<Option<File>>,
}

impl<B: CompletionBackend> TranscriptBackend<B> {
    pub fn new(inner: B) -> Self {
        TranscriptBackend { inner, entries: Mutex::new(Vec::new()), sink: Mutex::new(None) }
    }

    /// Also appends to `path`, creating it if needed.
    pub fn with_file(inner: B, path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TranscriptBackend { inner, entries: Mutex::new(Vec::new()), sink: Mutex::new(Some(file)) })
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("lock").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: CompletionBackend> CompletionBackend for TranscriptBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn concurrent(&self) -> bool {
        self.inner.concurrent()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let result = self.inner.complete(req);
        let mut entries = self.entries.lock().expect("lock");
        let entry = TranscriptEntry {
            seq: entries.len() as u64,
            backend: self.inner.name().to_string(),
            request: req.clone(),
            response: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
        };
        if let Some(f) = self.sink.lock().expect("lock").as_mut() {
            let line = serde_json::to_string(&entry).expect("entry serializes");
            // A failed transcript write must not fail the run; the in-memory
            // copy is still complete.
            let _ = writeln!(f, "{line}");
        }
        entries.push(entry);
        result
    }
}
