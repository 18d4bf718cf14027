//! Deterministic backends: replay from a script, record into one, or answer
//! from a closure.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{GenerationError, GenerationRequest, TextBackend};

/// One canned reply, keyed by schema name and prompt digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub schema_name: String,
    pub prompt_digest: String,
    pub response_text: String,
}

impl ScriptEntry {
    pub fn for_request(request: &GenerationRequest, response_text: impl Into<String>) -> Self {
        Self {
            schema_name: request.schema_name.clone(),
            prompt_digest: request.prompt_digest(),
            response_text: response_text.into(),
        }
    }
}

/// Replays canned replies by request fingerprint.
///
/// In strict mode an unmatched request is a [`GenerationError::ScriptMiss`].
/// Otherwise it goes to the fallback backend, or fails as unavailable when
/// there is none.
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    index: HashMap<(String, String), usize>,
    strict: bool,
    fallback: Option<Box<dyn TextBackend>>,
}

impl std::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedBackend")
            .field("entries", &self.entries.len())
            .field("strict", &self.strict)
            .field("fallback", &self.fallback.is_some())
            .finish()
    }
}

impl ScriptedBackend {
    pub fn strict(entries: Vec<ScriptEntry>) -> Result<Self, GenerationError> {
        Self::build(entries, true, None)
    }

    pub fn lenient(
        entries: Vec<ScriptEntry>,
        fallback: Option<Box<dyn TextBackend>>,
    ) -> Result<Self, GenerationError> {
        Self::build(entries, false, fallback)
    }

    fn build(
        entries: Vec<ScriptEntry>,
        strict: bool,
        fallback: Option<Box<dyn TextBackend>>,
    ) -> Result<Self, GenerationError> {
        let mut index: HashMap<(String, String), usize> = HashMap::new();
        let mut kept: Vec<ScriptEntry> = Vec::with_capacity(entries.len());
        for entry in entries {
            let key = (entry.schema_name.clone(), entry.prompt_digest.clone());
            match index.get(&key) {
                Some(&i) if kept[i].response_text != entry.response_text => {
                    return Err(GenerationError::InvalidScript(format!(
                        "conflicting responses for `{}` prompt {}",
                        entry.schema_name, entry.prompt_digest
                    )));
                }
                Some(_) => {}
                None => {
                    index.insert(key, kept.len());
                    kept.push(entry);
                }
            }
        }
        Ok(Self {
            entries: kept,
            index,
            strict,
            fallback,
        })
    }

    /// Parses a script file: a JSON array of entries.
    pub fn parse_script(document: &str) -> Result<Vec<ScriptEntry>, GenerationError> {
        serde_json::from_str(document).map_err(|e| GenerationError::InvalidScript(e.to_string()))
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }
}

impl TextBackend for ScriptedBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let digest = request.prompt_digest();
        if let Some(&i) = self
            .index
            .get(&(request.schema_name.clone(), digest.clone()))
        {
            return Ok(self.entries[i].response_text.clone());
        }
        if self.strict {
            return Err(GenerationError::ScriptMiss {
                schema_name: request.schema_name.clone(),
                digest,
            });
        }
        match &self.fallback {
            Some(backend) => backend.complete(request),
            None => Err(GenerationError::BackendUnavailable(format!(
                "no scripted response for `{}` and no fallback backend",
                request.schema_name
            ))),
        }
    }
}

/// Wraps a backend and keeps every successful exchange as a script entry,
/// so a live or simulated run can later be replayed with
/// [`ScriptedBackend::strict`].
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<Vec<ScriptEntry>>,
}

impl<B: TextBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            recorded: Mutex::new(Vec::new()),
        }
    }

    /// Recorded entries in call order, with repeated fingerprints collapsed.
    pub fn entries(&self) -> Vec<ScriptEntry> {
        let recorded = self.recorded.lock().expect("recording lock");
        let mut seen = std::collections::HashSet::new();
        recorded
            .iter()
            .filter(|e| seen.insert((e.schema_name.clone(), e.prompt_digest.clone())))
            .cloned()
            .collect()
    }
}

impl<B: TextBackend> TextBackend for RecordingBackend<B> {
    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let text = self.inner.complete(request)?;
        self.recorded
            .lock()
            .expect("recording lock")
            .push(ScriptEntry::for_request(request, text.clone()));
        Ok(text)
    }
}

/// Backend answered by a closure.
pub struct FnBackend<F> {
    respond: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&GenerationRequest) -> Result<String, GenerationError> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self { respond }
    }
}

impl<F> TextBackend for FnBackend<F>
where
    F: Fn(&GenerationRequest) -> Result<String, GenerationError> + Send + Sync,
{
    fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        (self.respond)(request)
    }
}
