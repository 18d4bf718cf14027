use std::path::PathBuf;
use std::sync::Arc;

use ontoagent_core::backend::{HttpBackend, HttpSettings, ScriptedBackend};
use ontoagent_core::gym::{EpisodeConfig, MatcherKind, DEFAULT_LEXICAL_THRESHOLD};
use ontoagent_core::interview::{InterviewConfig, DEFAULT_RERANK_WINDOW};
use ontoagent_core::TextBackend;
use thiserror::Error;

pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read script `{path}`: {message}")]
    Script { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Scripted,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "scripted" => Ok(BackendKind::Scripted),
            "http" => Ok(BackendKind::Http),
            other => Err(format!(
                "unknown backend `{other}` (expected scripted or http)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AppConfig {
    pub backend: BackendKind,
    pub model: Option<String>,
    pub api_base: String,
    pub api_key: Option<String>,
    pub scripts: Vec<PathBuf>,
    pub max_turns: u32,
    pub gate_threshold: u32,
    pub matcher: MatcherKind,
    pub data_dir: PathBuf,
    pub listen: String,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Scripted,
            model: None,
            api_base: DEFAULT_API_BASE.to_string(),
            api_key: None,
            scripts: Vec::new(),
            max_turns: 20,
            gate_threshold: 3,
            matcher: MatcherKind::Lexical,
            data_dir: PathBuf::from("ontoagent-data"),
            listen: "127.0.0.1:8080".to_string(),
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_turns < 1 {
            return Err(ConfigError::Invalid(
                "--max-turns must be at least 1".into(),
            ));
        }
        if self.gate_threshold < 1 {
            return Err(ConfigError::Invalid(
                "--gate-threshold must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn interview(&self) -> InterviewConfig {
        InterviewConfig {
            max_turns: self.max_turns,
            gate_threshold: self.gate_threshold,
            rerank_window: DEFAULT_RERANK_WINDOW,
        }
    }

    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig {
            interview: self.interview(),
            matcher: self.matcher,
            lexical_threshold: DEFAULT_LEXICAL_THRESHOLD,
        }
    }

    /// Builds the configured backend. Script files are merged in order; a
    /// scripted backend replays strictly.
    pub fn build_backend(&self) -> Result<Arc<dyn TextBackend>, ConfigError> {
        match self.backend {
            BackendKind::Scripted => {
                if self.scripts.is_empty() {
                    return Err(ConfigError::Invalid(
                        "the scripted backend needs at least one script (--script or ONTOAGENT_SCRIPT)".into(),
                    ));
                }
                let mut entries = Vec::new();
                for path in &self.scripts {
                    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Script {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                    let mut parsed =
                        ScriptedBackend::parse_script(&text).map_err(|e| ConfigError::Script {
                            path: path.clone(),
                            message: e.to_string(),
                        })?;
                    entries.append(&mut parsed);
                }
                let backend = ScriptedBackend::strict(entries)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(Arc::new(backend))
            }
            BackendKind::Http => {
                let model = self.model.clone().ok_or_else(|| {
                    ConfigError::Invalid(
                        "the http backend needs a model (--model or ONTOAGENT_MODEL)".into(),
                    )
                })?;
                let mut settings = HttpSettings::new(self.api_base.clone(), model);
                settings.api_key = self.api_key.clone();
                Ok(Arc::new(HttpBackend::new(settings)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_are_enforced() {
        let mut c = AppConfig::default();
        assert!(c.validate().is_ok());
        c.max_turns = 0;
        assert!(c.validate().is_err());
        c.max_turns = 1;
        c.gate_threshold = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn backends_need_their_settings() {
        let c = AppConfig::default();
        assert!(matches!(c.build_backend(), Err(ConfigError::Invalid(_))));
        let c = AppConfig {
            backend: BackendKind::Http,
            ..AppConfig::default()
        };
        assert!(matches!(c.build_backend(), Err(ConfigError::Invalid(_))));
        let c = AppConfig {
            backend: BackendKind::Http,
            model: Some("m".into()),
            ..AppConfig::default()
        };
        assert!(c.build_backend().is_ok());
        let c = AppConfig {
            scripts: vec![PathBuf::from("/nonexistent/script.json")],
            ..AppConfig::default()
        };
        assert!(matches!(c.build_backend(), Err(ConfigError::Script { .. })));
    }
}
