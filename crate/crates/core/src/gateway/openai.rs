//! Client for any OpenAI-compatible `/chat/completions` endpoint.

use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};

use super::{Backend, BackendError, Capabilities, Part, Prompt};

pub const ENV_API_BASE: &str = "CHARTATTRIB_API_BASE";
pub const ENV_API_KEY: &str = "CHARTATTRIB_API_KEY";
pub const ENV_MODEL: &str = "CHARTATTRIB_MODEL";

const MAX_ATTEMPTS: u32 = 3;

pub struct OpenAiBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    identity: String,
    vision: bool,
}

impl OpenAiBackend {
    pub fn new(api_base: &str, api_key: Option<String>, model: &str) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(180))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let endpoint = format!("{}/chat/completions", api_base.trim_end_matches('/'));
        Ok(Self {
            client,
            identity: format!("openai:{model}"),
            endpoint,
            api_key,
            model: model.to_string(),
            vision: true,
        })
    }

    /// Reads `CHARTATTRIB_API_BASE`, `CHARTATTRIB_API_KEY` and `CHARTATTRIB_MODEL`.
    pub fn from_env() -> Result<Self, BackendError> {
        let base = std::env::var(ENV_API_BASE)
            .map_err(|_| BackendError::Transport(format!("{ENV_API_BASE} is not set")))?;
        let model = std::env::var(ENV_MODEL)
            .map_err(|_| BackendError::Transport(format!("{ENV_MODEL} is not set")))?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Self::new(&base, key, &model)
    }

    pub fn with_vision(mut self, vision: bool) -> Self {
        self.vision = vision;
        self
    }

    /// Chat request body; images travel as base64 `data:` URLs.
    pub fn request_body(&self, prompt: &Prompt) -> Value {
        let content: Vec<Value> = prompt
            .parts
            .iter()
            .map(|part| match part {
                Part::Text(t) => json!({"type": "text", "text": t}),
                Part::Image(img) => {
                    let b64 = base64::engine::general_purpose::STANDARD.encode(img.bytes());
                    json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}})
                }
            })
            .collect();
        json!({
            "model": prompt.model.as_deref().unwrap_or(&self.model),
            "temperature": prompt.temperature,
            "max_tokens": prompt.max_tokens,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": content},
            ],
        })
    }

    fn send_once(&self, body: &Value) -> Result<String, (bool, String)> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| (true, e.to_string()))?;
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            return Err((retryable, format!("HTTP {status}: {}", truncate(&text, 300))));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| (false, format!("bad response body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| (false, format!("response has no message content: {}", truncate(&text, 300))))
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

impl Backend for OpenAiBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { vision: self.vision }
    }

    fn complete(&self, prompt: &Prompt) -> Result<String, BackendError> {
        let body = self.request_body(prompt);
        let mut last = String::new();
        for attempt in 0..MAX_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(500 << attempt));
            }
            match self.send_once(&body) {
                Ok(text) => return Ok(text),
                Err((retryable, msg)) => {
                    log::warn!("{} attempt {} failed: {msg}", self.endpoint, attempt + 1);
                    last = msg;
                    if !retryable {
                        break;
                    }
                }
            }
        }
        Err(BackendError::Transport(last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ImageRef;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves `responses` in order, one per connection, and returns the
    /// request bodies it saw.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (format!("http://{addr}/v1"), handle)
    }

    #[test]
    fn sends_images_as_data_urls_and_reads_content() {
        let reply = json!({"choices":[{"message":{"role":"assistant","content":"hello"}}]}).to_string();
        let (base, handle) = serve(vec![(200, reply)]);
        let backend = OpenAiBackend::new(&base, Some("k".into()), "test-model").unwrap();
        let img = ImageRef::from_rgb(&image::RgbImage::new(2, 2));
        let prompt = Prompt::new("sys").text("look").image(img);
        assert_eq!(backend.complete(&prompt).unwrap(), "hello");
        let bodies = handle.join().unwrap();
        let sent: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["model"], "test-model");
        assert_eq!(sent["messages"][0]["content"], "sys");
        let url = sent["messages"][1]["content"][1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let reply = json!({"choices":[{"message":{"content":"ok"}}]}).to_string();
        let (base, handle) = serve(vec![(503, "{}".into()), (200, reply)]);
        let backend = OpenAiBackend::new(&base, None, "m").unwrap();
        assert_eq!(backend.complete(&Prompt::new("s").text("t")).unwrap(), "ok");
        assert_eq!(handle.join().unwrap().len(), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (base, handle) = serve(vec![(401, r#"{"error":"nope"}"#.into())]);
        let backend = OpenAiBackend::new(&base, None, "m").unwrap();
        let err = backend.complete(&Prompt::new("s").text("t")).unwrap_err();
        assert!(matches!(err, BackendError::Transport(m) if m.contains("401")));
        assert_eq!(handle.join().unwrap().len(), 1);
    }
}
