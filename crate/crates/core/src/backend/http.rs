//! OpenAI-compatible chat-completions transport.

use std::time::Duration;

use serde_json::{json, Value};

use super::{GenerationError, GenerationRequest, TextBackend};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpSettings {
    /// Base URL, e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub api_base: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl HttpSettings {
    pub fn new(api_base: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            api_base: api_base.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
        }
    }
}

pub struct HttpBackend {
    settings: HttpSettings,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .build();
        Self {
            settings,
            agent: ureq::Agent::new_with_config(config),
        }
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.settings.api_base.trim_end_matches('/')
        )
    }

    fn body(&self, request: &GenerationRequest) -> Value {
        // greedy decoding is the only mode
        let mut body = json!({
            "model": self.settings.model,
            "temperature": 0,
            "stream": false,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
        });
        if request.expects_structure {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }
}

impl TextBackend for HttpBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let unavailable = |e: ureq::Error| GenerationError::BackendUnavailable(e.to_string());
        let mut call = self.agent.post(&self.endpoint());
        if let Some(key) = &self.settings.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(self.body(request)).map_err(unavailable)?;
        let reply: Value = response.body_mut().read_json().map_err(unavailable)?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                GenerationError::BackendUnavailable(
                    "completion reply has no message content".into(),
                )
            })
    }
}
