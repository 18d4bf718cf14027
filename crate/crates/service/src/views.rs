//! Response bodies shared by the HTTP API and the CLI.

use ontoagent_core::interview::{FinishReason, QuestionKind, SessionState, Turn};
use ontoagent_core::NodeId;
use serde::{Deserialize, Serialize};

use crate::store::{SessionRecord, SessionStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementRow {
    pub slot_id: NodeId,
    pub aspect: String,
    pub dimension: String,
    pub key: String,
    pub excerpt: String,
    pub turn: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementsView {
    pub session_id: String,
    pub count: usize,
    pub requirements: Vec<RequirementRow>,
}

pub fn requirements_view(session: &SessionState) -> RequirementsView {
    let requirements: Vec<RequirementRow> = session
        .elicited_requirements()
        .iter()
        .map(|r| {
            let (aspect, dimension) = session
                .onto
                .slot_parents(&r.slot_id)
                .map(|(a, d)| (a.name.clone(), d.name.clone()))
                .unwrap_or_default();
            RequirementRow {
                slot_id: r.slot_id.clone(),
                aspect,
                dimension,
                key: r.key.clone(),
                excerpt: r.excerpt.clone(),
                turn: r.turn,
            }
        })
        .collect();
    RequirementsView {
        session_id: session.session_id.clone(),
        count: requirements.len(),
        requirements,
    }
}

/// What the client needs after creating a session or posting an answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepView {
    pub question: Option<String>,
    pub question_kind: Option<QuestionKind>,
    pub done: bool,
    pub finish_reason: Option<FinishReason>,
    pub elicited_count: usize,
    pub ontology_digest: String,
}

pub fn step_view(session: &SessionState) -> StepView {
    let pending = session.pending();
    StepView {
        question: pending.map(|p| p.text().to_string()),
        question_kind: pending.map(|p| p.kind()),
        done: session.is_finished(),
        finish_reason: session.finish_reason(),
        elicited_count: session.elicited_requirements().len(),
        ontology_digest: session.onto.digest(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedSessionView {
    pub session_id: String,
    #[serde(flatten)]
    pub step: StepView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub created: String,
    pub ontology_id: Option<String>,
    pub status: SessionStatus,
    pub turn: u32,
    pub max_turns: u32,
    pub gate_threshold: u32,
    pub current_aspect: Option<NodeId>,
    pub transcript: Vec<Turn>,
    #[serde(flatten)]
    pub step: StepView,
}

pub fn session_view(record: &SessionRecord) -> SessionView {
    let s = &record.snapshot;
    SessionView {
        session_id: record.session_id.clone(),
        created: record.created.clone(),
        ontology_id: record.ontology_id.clone(),
        status: record.status,
        turn: s.turn,
        max_turns: s.max_turns,
        gate_threshold: s.gate_threshold,
        current_aspect: s.current_aspect.clone(),
        transcript: s.history.turns().to_vec(),
        step: step_view(s),
    }
}
