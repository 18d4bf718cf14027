//! Gateway to text-generation models.
//!
//! Every model call goes through [`generate`], which validates structured
//! replies against a named schema and re-prompts with the validation error
//! on failure, at most [`MAX_ATTEMPTS`] attempts in total. Backends only move
//! text; they never see schemas beyond the name carried in the request.

mod http;
pub mod schema;
mod scripted;

use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

use crate::prompts::{PromptError, RenderedPrompt};
use crate::text::{collapse_whitespace, sha256_hex};

pub use http::{HttpBackend, HttpSettings};
pub use schema::StructuredOutput;
pub use scripted::{FnBackend, RecordingBackend, ScriptEntry, ScriptedBackend};

/// Initial attempt plus two retries.
pub const MAX_ATTEMPTS: u32 = 3;

/// Schema name used for free-text requests.
pub const PLAIN_TEXT: &str = "text";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decoding {
    #[default]
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub system_text: String,
    pub user_text: String,
    pub expects_structure: bool,
    pub schema_name: String,
    pub decoding: Decoding,
}

impl GenerationRequest {
    pub fn structured(prompt: RenderedPrompt, schema_name: &str) -> Self {
        Self {
            system_text: prompt.system,
            user_text: prompt.user,
            expects_structure: true,
            schema_name: schema_name.to_string(),
            decoding: Decoding::Greedy,
        }
    }

    pub fn text(prompt: RenderedPrompt) -> Self {
        Self {
            system_text: prompt.system,
            user_text: prompt.user,
            expects_structure: false,
            schema_name: PLAIN_TEXT.to_string(),
            decoding: Decoding::Greedy,
        }
    }

    /// Whitespace-insensitive digest of the prompt pair.
    pub fn prompt_digest(&self) -> String {
        let normalized = format!(
            "{}\u{1e}{}",
            collapse_whitespace(&self.system_text),
            collapse_whitespace(&self.user_text)
        );
        sha256_hex(normalized)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResponse {
    pub raw_text: String,
    pub parsed: Option<Value>,
    pub attempts: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed `{schema}` output after {attempts} attempts: {detail}")]
    MalformedOutput {
        schema: String,
        attempts: u32,
        detail: String,
    },
    #[error("no scripted response for `{schema_name}` prompt {digest}")]
    ScriptMiss { schema_name: String, digest: String },
    #[error("user prompt is empty")]
    EmptyPrompt,
    #[error("unknown schema `{0}`")]
    UnknownSchema(String),
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl GenerationError {
    /// Transport and parse failures, which callers may cover with a
    /// fallback. A scripted miss means the fixture and the code disagree and
    /// is never recoverable.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            GenerationError::BackendUnavailable(_) | GenerationError::MalformedOutput { .. }
        )
    }
}

/// A model that turns a prompt pair into text.
pub trait TextBackend: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError>;
}

impl<B: TextBackend + ?Sized> TextBackend for &B {
    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        (**self).complete(request)
    }
}

impl<B: TextBackend + ?Sized> TextBackend for Box<B> {
    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        (**self).complete(request)
    }
}

impl<B: TextBackend + ?Sized> TextBackend for std::sync::Arc<B> {
    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        (**self).complete(request)
    }
}

/// Runs a request, validating structured output against its schema.
pub fn generate(
    request: &GenerationRequest,
    backend: &dyn TextBackend,
) -> Result<GenerationResponse, GenerationError> {
    generate_checked(request, backend, &|_| Ok(()))
}

/// Like [`generate`], with an extra caller-supplied check applied after the
/// schema check. A failing check triggers the same re-prompt as a schema
/// failure.
pub fn generate_checked(
    request: &GenerationRequest,
    backend: &dyn TextBackend,
    extra: &dyn Fn(&Value) -> Result<(), String>,
) -> Result<GenerationResponse, GenerationError> {
    if request.user_text.trim().is_empty() {
        return Err(GenerationError::EmptyPrompt);
    }
    if !request.expects_structure {
        let raw_text = backend.complete(request)?;
        return Ok(GenerationResponse {
            raw_text,
            parsed: None,
            attempts: 1,
        });
    }
    if !schema::is_registered(&request.schema_name) {
        return Err(GenerationError::UnknownSchema(request.schema_name.clone()));
    }

    let mut attempt_request = request.clone();
    let mut last_error = String::new();
    for attempt in 1..=MAX_ATTEMPTS {
        let raw_text = backend.complete(&attempt_request)?;
        let outcome = extract_json(&raw_text).and_then(|value| {
            schema::validate(&request.schema_name, &value)?;
            extra(&value)?;
            Ok(value)
        });
        match outcome {
            Ok(value) => {
                return Ok(GenerationResponse {
                    raw_text,
                    parsed: Some(value),
                    attempts: attempt,
                })
            }
            Err(err) => {
                tracing::debug!(schema = %request.schema_name, attempt, %err, "invalid structured reply");
                attempt_request.user_text = retry_prompt(&request.user_text, &err);
                last_error = err;
            }
        }
    }
    Err(GenerationError::MalformedOutput {
        schema: request.schema_name.clone(),
        attempts: MAX_ATTEMPTS,
        detail: last_error,
    })
}

/// Typed wrapper over [`generate_checked`].
pub fn generate_structured<T: StructuredOutput>(
    prompt: RenderedPrompt,
    backend: &dyn TextBackend,
    extra: &dyn Fn(&T) -> Result<(), String>,
) -> Result<(T, u32), GenerationError> {
    let request = GenerationRequest::structured(prompt, T::SCHEMA);
    let check = |value: &Value| {
        let typed: T = decode(value)?;
        extra(&typed)
    };
    let response = generate_checked(&request, backend, &check)?;
    let value = response
        .parsed
        .expect("structured response carries a value");
    let typed = decode(&value).expect("validated value decodes");
    Ok((typed, response.attempts))
}

fn decode<T: DeserializeOwned>(value: &Value) -> Result<T, String> {
    serde_json::from_value(value.clone()).map_err(|e| e.to_string())
}

fn retry_prompt(original: &str, error: &str) -> String {
    format!(
        "{original}\n\nYour previous reply could not be used: {error}\nReply again with only the strict JSON described in the instructions."
    )
}

/// Pulls a JSON object out of a model reply, tolerating code fences and
/// chatter around the object.
pub fn extract_json(raw: &str) -> Result<Value, String> {
    let trimmed = raw.trim();
    if let Ok(value) = serde_json::from_str::<Value>(trimmed) {
        return Ok(value);
    }
    let start = trimmed.find('{');
    let end = trimmed.rfind('}');
    match (start, end) {
        (Some(s), Some(e)) if s < e => serde_json::from_str(&trimmed[s..=e])
            .map_err(|err| format!("reply is not valid JSON: {err}")),
        _ => Err("reply contains no JSON object".to_string()),
    }
}
