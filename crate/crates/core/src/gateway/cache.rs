use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

/// One persisted model exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub raw_response: String,
    pub parsed_ok: bool,
    pub timestamp: String,
    /// Set when the backend failed instead of answering; replays reproduce
    /// the failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Transcript {
    pub fn new(key: &str, raw_response: &str, parsed_ok: bool) -> Self {
        Self {
            key: key.to_string(),
            raw_response: raw_response.to_string(),
            parsed_ok,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            error: None,
        }
    }

    pub fn failure(key: &str, error: &str) -> Self {
        Self { error: Some(error.to_string()), ..Self::new(key, "", false) }
    }

    fn outcome(self) -> (String, Result<String, String>) {
        match self.error {
            Some(e) => (self.key, Err(e)),
            None => (self.key, Ok(self.raw_response)),
        }
    }
}

/// Append-only JSONL transcript store, one [`Transcript`] per line.
///
/// Lookups go through an in-memory index that is only updated after the
/// line has been fully written, so readers never see a partial entry.
pub struct TranscriptCache {
    path: PathBuf,
    index: RwLock<HashMap<String, Result<String, String>>>,
    writer: Mutex<File>,
}

impl TranscriptCache {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut index = HashMap::new();
        if path.exists() {
            for t in Self::read_all(&path)? {
                let (key, outcome) = t.outcome();
                index.insert(key, outcome);
            }
        }
        let mut writer = OpenOptions::new().create(true).append(true).open(&path)?;
        let existing = std::fs::read(&path)?;
        if existing.last().is_some_and(|b| *b != b'\n') {
            writer.write_all(b"\n")?;
        }
        Ok(Self { path, index: RwLock::new(index), writer: Mutex::new(writer) })
    }

    /// Reads every well-formed transcript in file order. A truncated final
    /// line (interrupted writer) is skipped.
    pub fn read_all(path: &Path) -> io::Result<Vec<Transcript>> {
        let reader = BufReader::new(File::open(path)?);
        let mut out = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Transcript>(&line) {
                Ok(t) => out.push(t),
                Err(e) => log::warn!("{}:{}: skipping unreadable transcript: {e}", path.display(), n + 1),
            }
        }
        Ok(out)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Recorded response for `key`; failed exchanges read as `None`.
    pub fn get(&self, key: &str) -> Option<String> {
        self.lookup(key).and_then(Result::ok)
    }

    /// Recorded outcome for `key`: the response, or the recorded failure.
    pub fn lookup(&self, key: &str) -> Option<Result<String, String>> {
        self.index.read().expect("cache index lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, transcript: Transcript) -> io::Result<()> {
        let mut line = serde_json::to_string(&transcript)?;
        line.push('\n');
        let mut writer = self.writer.lock().expect("cache writer lock");
        writer.write_all(line.as_bytes())?;
        writer.flush()?;
        let (key, outcome) = transcript.outcome();
        self.index.write().expect("cache index lock").insert(key, outcome);
        Ok(())
    }
}
