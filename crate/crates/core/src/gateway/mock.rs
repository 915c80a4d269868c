use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{sha256_hex, Backend, BackendError, Capabilities, Prompt};

/// How a script entry recognises a prompt. Matching runs against
/// [`Prompt::render`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Rendered prompt contains the substring.
    Contains(String),
    /// Rendered prompt contains every substring.
    #[serde(rename = "all")]
    AllOf(Vec<String>),
    /// SHA-256 (hex) of the rendered prompt.
    Hash(String),
    Any,
}

impl Matcher {
    pub fn contains(s: impl Into<String>) -> Self {
        Matcher::Contains(s.into())
    }

    pub fn all<S: Into<String>>(parts: impl IntoIterator<Item = S>) -> Self {
        Matcher::AllOf(parts.into_iter().map(Into::into).collect())
    }

    pub fn hash_of(prompt: &Prompt) -> Self {
        Matcher::Hash(sha256_hex(prompt.render().as_bytes()))
    }

    fn matches(&self, rendered: &str, rendered_hash: &str) -> bool {
        match self {
            Matcher::Contains(s) => rendered.contains(s.as_str()),
            Matcher::AllOf(parts) => parts.iter().all(|s| rendered.contains(s.as_str())),
            Matcher::Hash(h) => h.eq_ignore_ascii_case(rendered_hash),
            Matcher::Any => true,
        }
    }
}

/// A scripted response. In script files the response may be a string or
/// any JSON value (serialized compactly when served).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    #[serde(serialize_with = "ser_response", deserialize_with = "de_response")]
    pub response: String,
    /// One-shot entries are consumed by the first prompt they serve.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub once: bool,
}

fn ser_response<S: Serializer>(response: &str, s: S) -> Result<S::Ok, S::Error> {
    match serde_json::from_str::<serde_json::Value>(response) {
        Ok(v) if v.is_object() || v.is_array() => v.serialize(s),
        _ => s.serialize_str(response),
    }
}

fn de_response<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    Ok(match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    })
}

impl ScriptEntry {
    pub fn new(matcher: Matcher, response: impl Into<String>) -> Self {
        Self { matcher, response: response.into(), once: false }
    }

    pub fn once(matcher: Matcher, response: impl Into<String>) -> Self {
        Self { matcher, response: response.into(), once: true }
    }
}

/// Serializable mock script (`--backend mock:<script.json>`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    #[serde(default = "default_true")]
    pub vision: bool,
    pub entries: Vec<ScriptEntry>,
}

fn default_true() -> bool {
    true
}

impl MockScript {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { identity: None, vision: true, entries }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scripts serialize")
    }
}

/// Deterministic backend answering from an ordered script: the first
/// matching, unconsumed entry wins.
pub struct ScriptedMock {
    identity: String,
    vision: bool,
    entries: Vec<ScriptEntry>,
    consumed: Mutex<Vec<bool>>,
}

impl ScriptedMock {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self::from_script(MockScript::new(entries))
    }

    /// The identity defaults to a digest of the script, so editing a script
    /// invalidates transcripts recorded against the old one.
    pub fn from_script(script: MockScript) -> Self {
        let identity = script.identity.clone().unwrap_or_else(|| {
            let digest = sha256_hex(serde_json::to_string(&script.entries).expect("entries serialize").as_bytes());
            format!("mock:{}", &digest[..16])
        });
        Self {
            identity,
            vision: script.vision,
            consumed: Mutex::new(vec![false; script.entries.len()]),
            entries: script.entries,
        }
    }

    pub fn with_vision(mut self, vision: bool) -> Self {
        self.vision = vision;
        self
    }
}

impl Backend for ScriptedMock {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { vision: self.vision }
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, BackendError> {
        let rendered = prompt.render();
        let hash = sha256_hex(rendered.as_bytes());
        let mut consumed = self.consumed.lock().expect("mock lock");
        for (i, entry) in self.entries.iter().enumerate() {
            if consumed[i] || !entry.matcher.matches(&rendered, &hash) {
                continue;
            }
            if entry.once {
                consumed[i] = true;
            }
            return Ok(entry.response.clone());
        }
        let excerpt: String = rendered.chars().take(160).collect();
        Err(BackendError::MockMiss(excerpt))
    }
}

type Responder = dyn Fn(&Prompt) -> Result<String, BackendError> + Send + Sync;

/// Backend driven by a closure; handy for programmatic test doubles.
pub struct FnBackend {
    identity: String,
    vision: bool,
    respond: Box<Responder>,
}

impl FnBackend {
    pub fn new(
        identity: impl Into<String>,
        vision: bool,
        respond: impl Fn(&Prompt) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self { identity: identity.into(), vision, respond: Box::new(respond) }
    }
}

impl Backend for FnBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { vision: self.vision }
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, BackendError> {
        (self.respond)(prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Prompt {
        Prompt::new("sys").text(text)
    }

    #[test]
    fn substring_match() {
        let m = ScriptedMock::new(vec![ScriptEntry::new(Matcher::contains("RANK"), "[2,1]")]);
        assert_eq!(m.complete(&p("please RANK these")).unwrap(), "[2,1]");
    }

    #[test]
    fn empty_script_misses() {
        let m = ScriptedMock::new(vec![]);
        assert!(matches!(m.complete(&p("anything")), Err(BackendError::MockMiss(_))));
    }

    #[test]
    fn one_shot_entries_in_order() {
        let m = ScriptedMock::new(vec![
            ScriptEntry::once(Matcher::contains("X"), "first"),
            ScriptEntry::once(Matcher::contains("X"), "second"),
        ]);
        assert_eq!(m.complete(&p("X")).unwrap(), "first");
        assert_eq!(m.complete(&p("X")).unwrap(), "second");
        assert!(m.complete(&p("X")).is_err());
    }

    #[test]
    fn hash_and_all_matchers() {
        let prompt = p("alpha beta");
        let m = ScriptedMock::new(vec![
            ScriptEntry::new(Matcher::all(["alpha", "gamma"]), "no"),
            ScriptEntry::new(Matcher::hash_of(&prompt), "hashed"),
        ]);
        assert_eq!(m.complete(&prompt).unwrap(), "hashed");
        assert!(m.complete(&p("alpha")).is_err());
    }

    #[test]
    fn script_file_format() {
        let text = r#"{"entries":[
            {"match":{"contains":"score"},"response":{"score":0.5}},
            {"match":{"all":["a","b"]},"response":"plain","once":true},
            {"match":"any","response":"fallback"}]}"#;
        let script: MockScript = serde_json::from_str(text).unwrap();
        assert!(script.vision);
        assert_eq!(script.entries[0].response, r#"{"score":0.5}"#);
        assert!(script.entries[1].once);
        assert_eq!(script.entries[2].matcher, Matcher::Any);
        let again: MockScript = serde_json::from_str(&script.to_json()).unwrap();
        assert_eq!(again, script);
    }

    #[test]
    fn identity_tracks_script_content() {
        let a = ScriptedMock::new(vec![ScriptEntry::new(Matcher::Any, "a")]);
        let b = ScriptedMock::new(vec![ScriptEntry::new(Matcher::Any, "b")]);
        assert_ne!(a.identity(), b.identity());
        assert!(a.identity().starts_with("mock:"));
    }
}
