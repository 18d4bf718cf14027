//! Plain-file persistence under the data directory:
//! `ontologies/`, `sessions/`, `reports/`, `transcripts/`.

use std::io;
use std::path::{Path, PathBuf};

use base64::Engine;
use ontoagent_core::interview::SessionState;
use ontoagent_core::{ExperienceOntology, OntologyError};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("stored document {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("session `{0}` is finished and cannot change")]
    Immutable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub session_id: String,
    pub created: String,
    pub ontology_id: Option<String>,
    pub status: SessionStatus,
    /// Relative to the data directory; set once the session finishes.
    pub transcript_path: Option<String>,
    pub snapshot: SessionState,
}

impl SessionRecord {
    pub fn new(ontology_id: Option<String>, snapshot: SessionState) -> Self {
        let status = if snapshot.is_finished() {
            SessionStatus::Finished
        } else {
            SessionStatus::Active
        };
        Self {
            session_id: snapshot.session_id.clone(),
            created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            ontology_id,
            status,
            transcript_path: None,
            snapshot,
        }
    }
}

/// A random 128-bit URL-safe token.
pub fn new_session_id() -> String {
    let mut bytes = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut bytes);
    base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(bytes)
}

/// Ontology ids are derived from the document digest.
pub fn ontology_id(onto: &ExperienceOntology) -> String {
    format!("onto-{}", &onto.digest()[..16])
}

/// Ids double as file names, so only a conservative alphabet is accepted.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a sibling temporary file so readers never see a torn file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    std::fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["ontologies", "sessions", "reports", "transcripts"] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn read_optional(path: &Path) -> Result<Option<String>, StoreError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(path)(e)),
        }
    }

    fn ontology_path(&self, id: &str) -> PathBuf {
        self.root.join("ontologies").join(format!("{id}.json"))
    }

    /// Stores an ontology under its content address and returns the id.
    /// Storing the same document twice is a no-op.
    pub fn put_ontology(&self, onto: &ExperienceOntology) -> Result<String, StoreError> {
        let id = ontology_id(onto);
        let path = self.ontology_path(&id);
        if !path.exists() {
            write_atomic(&path, &onto.to_json())?;
        }
        Ok(id)
    }

    pub fn get_ontology(&self, id: &str) -> Result<Option<ExperienceOntology>, StoreError> {
        if !is_valid_id(id) {
            return Ok(None);
        }
        let path = self.ontology_path(id);
        let Some(text) = Self::read_optional(&path)? else {
            return Ok(None);
        };
        ExperienceOntology::from_json(&text)
            .map(Some)
            .map_err(|e: OntologyError| StoreError::Corrupt {
                path,
                message: e.to_string(),
            })
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    pub fn get_session(&self, id: &str) -> Result<Option<SessionRecord>, StoreError> {
        if !is_valid_id(id) {
            return Ok(None);
        }
        let path = self.session_path(id);
        let Some(text) = Self::read_optional(&path)? else {
            return Ok(None);
        };
        let record: SessionRecord =
            serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?;
        record
            .snapshot
            .onto
            .validate()
            .map_err(|e| StoreError::Corrupt {
                path,
                message: e.to_string(),
            })?;
        Ok(Some(record))
    }

    /// Persists a session. A finished record is frozen: later writes fail.
    /// When the session has just finished, its transcript and requirements
    /// files are written too.
    pub fn save_session(&self, record: &mut SessionRecord) -> Result<(), StoreError> {
        if let Some(existing) = self.get_session(&record.session_id)? {
            if existing.status == SessionStatus::Finished {
                return Err(StoreError::Immutable(record.session_id.clone()));
            }
        }
        if record.snapshot.is_finished() {
            record.status = SessionStatus::Finished;
            let relative = format!("transcripts/{}.jsonl", record.session_id);
            write_atomic(
                &self.root.join(&relative),
                &record.snapshot.transcript().to_jsonl(),
            )?;
            let requirements = crate::views::requirements_view(&record.snapshot);
            write_atomic(
                &self
                    .root
                    .join("sessions")
                    .join(format!("{}.requirements.json", record.session_id)),
                &serde_json::to_string_pretty(&requirements).expect("requirements serialize"),
            )?;
            record.transcript_path = Some(relative);
        }
        let text = serde_json::to_string_pretty(record).expect("session record serializes");
        write_atomic(&self.session_path(&record.session_id), &text)
    }

    fn report_path(&self, id: &str) -> PathBuf {
        self.root.join("reports").join(id).join("report.json")
    }

    /// Stores an evaluation report with its transcripts beside it.
    pub fn put_evaluation(
        &self,
        id: &str,
        report_json: &str,
        transcripts: &[(String, String)],
    ) -> Result<(), StoreError> {
        write_report_bundle(&self.report_path(id), report_json, transcripts)
    }

    pub fn get_report(&self, id: &str) -> Result<Option<String>, StoreError> {
        if !is_valid_id(id) {
            return Ok(None);
        }
        Self::read_optional(&self.report_path(id))
    }
}

/// Writes a report and its transcripts, whose paths are relative to the
/// report's directory.
pub fn write_report_bundle(
    report_path: &Path,
    report_json: &str,
    transcripts: &[(String, String)],
) -> Result<(), StoreError> {
    let dir = report_path.parent().unwrap_or(Path::new("."));
    for (relative, text) in transcripts {
        write_atomic(&dir.join(relative), text)?;
    }
    write_atomic(report_path, report_json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_ids_are_url_safe_and_distinct() {
        let a = new_session_id();
        let b = new_session_id();
        assert_ne!(a, b);
        assert_eq!(a.len(), 22);
        assert!(is_valid_id(&a));
    }

    #[test]
    fn id_validation_blocks_paths() {
        assert!(!is_valid_id("../etc"));
        assert!(!is_valid_id(""));
        assert!(!is_valid_id("a/b"));
        assert!(is_valid_id("onto-0123abcd"));
    }

    #[test]
    fn ontologies_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let onto = ExperienceOntology::with_aspects("web", &["Style"]).unwrap();
        let id = store.put_ontology(&onto).unwrap();
        assert_eq!(store.put_ontology(&onto).unwrap(), id);
        assert_eq!(store.get_ontology(&id).unwrap(), Some(onto));
        assert_eq!(store.get_ontology("onto-missing").unwrap(), None);
    }
}
