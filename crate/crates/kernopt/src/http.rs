//! OpenAI-compatible chat-completions backend.

use std::time::{Duration, Instant};

use kernopt_core::agent::{AgentReply, AgentRequest, BackendError, LlmBackend};
use kernopt_core::PriceTable;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSettings {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub prices: PriceTable,
    pub temperature: Option<f64>,
    pub timeout_s: f64,
}

impl HttpSettings {
    pub fn new(model: &str) -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: model.into(),
            api_key_env: "OPENAI_API_KEY".into(),
            prices: PriceTable::default(),
            temperature: None,
            timeout_s: 600.0,
        }
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    settings: HttpSettings,
    api_key: String,
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(settings: HttpSettings) -> Result<Self, BackendError> {
        let key = std::env::var(&settings.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::Auth(format!("environment variable {} is not set", settings.api_key_env)))?;
        Self::with_key(settings, key)
    }

    pub fn with_key(settings: HttpSettings, api_key: String) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(settings.timeout_s))
            .build()
            .map_err(|e| BackendError::Other(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", settings.base_url.trim_end_matches('/')),
            settings,
            api_key,
        })
    }

    fn body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.settings.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(t) = self.settings.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(300).collect()
}

fn parse_reply(text: &str) -> Result<(String, u64, u64), BackendError> {
    let v: Value = serde_json::from_str(text).map_err(|e| BackendError::Other(format!("bad reply body: {e}")))?;
    let content = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| BackendError::Other(format!("reply has no message content: {}", snippet(text))))?;
    let usage = &v["usage"];
    Ok((
        content.to_string(),
        usage["prompt_tokens"].as_u64().unwrap_or(0),
        usage["completion_tokens"].as_u64().unwrap_or(0),
    ))
}

impl LlmBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.settings.model
    }

    fn prices(&self) -> PriceTable {
        self.settings.prices
    }

    fn complete(&self, req: &AgentRequest<'_>) -> Result<AgentReply, BackendError> {
        let start = Instant::now();
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(self.body(req.prompt).to_string())
            .send()
            .map_err(|e| BackendError::Network(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Network(e.to_string()))?;
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(format!("{status}: {}", snippet(&text)))),
            408 | 429 | 500..=599 => return Err(BackendError::Network(format!("{status}: {}", snippet(&text)))),
            _ => return Err(BackendError::Other(format!("{status}: {}", snippet(&text)))),
        }
        let (raw_text, prompt_tokens, completion_tokens) = parse_reply(&text)?;
        Ok(AgentReply { raw_text, prompt_tokens, completion_tokens, latency_s: start.elapsed().as_secs_f64() })
    }
}
