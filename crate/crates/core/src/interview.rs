//! Ontology-guided interviewing.
//!
//! A session owns a private working copy of the ontology. Each exchange is
//! one agent question followed by one stakeholder answer. After every
//! answer the engine interprets it, updates slot states (confirming,
//! rejecting, or pruning), and then selects what to ask next:
//!
//! 1. stop when the slot-question budget is spent;
//! 2. ask the aspect gate question when enough rejections piled up under
//!    the current aspect;
//! 3. otherwise re-rank the eligible slots and ask about the best one,
//!    stopping when none is left.
//!
//! Gate exchanges are recorded in the history but do not consume the
//! budget, so `max_turns` bounds the number of slot questions.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::backend::schema::{
    GateJudgmentReply, GateVerdictReply, QuestionReply, RankChoiceReply, ScoreMapReply,
    SlotJudgmentReply, SlotVerdictReply,
};
use crate::backend::{generate_structured, GenerationError, TextBackend};
use crate::ontology::{ExperienceOntology, NodeId, OntologyError, QuestionForm};
use crate::prompts::render_prompt;

pub const DEFAULT_MAX_TURNS: u32 = 20;
pub const DEFAULT_GATE_THRESHOLD: u32 = 3;
pub const DEFAULT_RERANK_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterviewConfig {
    /// Budget of slot questions (T).
    pub max_turns: u32,
    /// Rejections under one aspect before the gate question (N).
    pub gate_threshold: u32,
    /// How many top eligible slots are offered to the re-ranker (M).
    pub rerank_window: usize,
}

impl Default for InterviewConfig {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            gate_threshold: DEFAULT_GATE_THRESHOLD,
            rerank_window: DEFAULT_RERANK_WINDOW,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterviewError {
    #[error("ontology has no slot to ask about")]
    EmptyOntology,
    #[error("initial description is empty")]
    EmptyDescription,
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("session is finished")]
    SessionFinished,
    #[error("session is not waiting for an answer")]
    NotAwaitingAnswer,
    #[error("invalid interview configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Agent,
    Stakeholder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TurnKind {
    Initial,
    SlotQuestion {
        slot_id: NodeId,
    },
    GateQuestion {
        aspect_id: NodeId,
    },
    /// A question not tied to any ontology node, as asked by the baseline.
    FreeQuestion,
    Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub kind: TurnKind,
}

/// The dialogue so far, starting with the stakeholder's initial description.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DialogueHistory {
    turns: Vec<Turn>,
}

impl DialogueHistory {
    pub fn new(initial_description: &str) -> Self {
        Self {
            turns: vec![Turn {
                speaker: Speaker::Stakeholder,
                text: initial_description.trim().to_string(),
                kind: TurnKind::Initial,
            }],
        }
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn push_question(&mut self, text: &str, kind: TurnKind) {
        self.turns.push(Turn {
            speaker: Speaker::Agent,
            text: text.to_string(),
            kind,
        });
    }

    pub fn push_answer(&mut self, text: &str) {
        self.turns.push(Turn {
            speaker: Speaker::Stakeholder,
            text: text.trim().to_string(),
            kind: TurnKind::Answer,
        });
    }

    pub fn initial_description(&self) -> &str {
        self.turns
            .first()
            .map(|t| t.text.as_str())
            .unwrap_or_default()
    }

    /// Number of agent questions asked so far.
    pub fn question_count(&self) -> usize {
        self.turns
            .iter()
            .filter(|t| t.speaker == Speaker::Agent)
            .count()
    }

    /// Plain-text rendering used inside prompts.
    pub fn render(&self) -> String {
        render_turns(&self.turns)
    }
}

pub fn render_turns(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| match t.speaker {
            Speaker::Agent => format!("Interviewer: {}", t.text),
            Speaker::Stakeholder => format!("Stakeholder: {}", t.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitedRequirement {
    pub slot_id: NodeId,
    pub key: String,
    pub excerpt: String,
    /// 1-based index of the slot exchange that confirmed it.
    pub turn: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConfirmedSlot,
    RejectedSlot,
    RejectedDimension,
    AspectDone,
    AspectHasMore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserJudgment {
    pub verdict: Verdict,
    pub target: NodeId,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Slot,
    Gate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PendingQuestion {
    Slot { slot_id: NodeId, text: String },
    Gate { aspect_id: NodeId, text: String },
}

impl PendingQuestion {
    pub fn text(&self) -> &str {
        match self {
            PendingQuestion::Slot { text, .. } | PendingQuestion::Gate { text, .. } => text,
        }
    }

    pub fn kind(&self) -> QuestionKind {
        match self {
            PendingQuestion::Slot { .. } => QuestionKind::Slot,
            PendingQuestion::Gate { .. } => QuestionKind::Gate,
        }
    }

    pub fn target(&self) -> &NodeId {
        match self {
            PendingQuestion::Slot { slot_id, .. } => slot_id,
            PendingQuestion::Gate { aspect_id, .. } => aspect_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    MaxTurns,
    NoEligibleSlots,
    Stopped,
}

impl std::fmt::Display for FinishReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FinishReason::MaxTurns => "max_turns",
            FinishReason::NoEligibleSlots => "no_eligible_slots",
            FinishReason::Stopped => "stopped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    AwaitingAnswer { pending: PendingQuestion },
    Selecting,
    Finished { reason: FinishReason },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Question(PendingQuestion),
    Finished(FinishReason),
}

/// One interview in flight. Serializes to the session snapshot format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionState {
    pub session_id: String,
    pub onto: ExperienceOntology,
    pub history: DialogueHistory,
    pub elicited: Vec<ElicitedRequirement>,
    pub turn: u32,
    pub max_turns: u32,
    pub gate_threshold: u32,
    pub rerank_window: usize,
    pub aspect_no_need_count: u32,
    pub current_aspect: Option<NodeId>,
    pub phase: Phase,
}

impl SessionState {
    /// Starts a session over a fresh copy of `onto` and selects the first
    /// question.
    pub fn start(
        session_id: impl Into<String>,
        onto: &ExperienceOntology,
        initial_description: &str,
        config: InterviewConfig,
        backend: &dyn TextBackend,
    ) -> Result<(Self, StepOutcome), InterviewError> {
        if initial_description.trim().is_empty() {
            return Err(InterviewError::EmptyDescription);
        }
        if config.gate_threshold == 0 {
            return Err(InterviewError::InvalidConfig(
                "gate threshold must be at least 1".into(),
            ));
        }
        if config.rerank_window == 0 {
            return Err(InterviewError::InvalidConfig(
                "re-rank window must be at least 1".into(),
            ));
        }
        let mut working = onto.fresh_copy();
        if working.eligible_slots().is_empty() {
            return Err(InterviewError::EmptyOntology);
        }
        let history = DialogueHistory::new(initial_description);
        score_onto(history.initial_description(), &mut working, backend)?;

        let mut session = Self {
            session_id: session_id.into(),
            onto: working,
            history,
            elicited: Vec::new(),
            turn: 0,
            max_turns: config.max_turns,
            gate_threshold: config.gate_threshold,
            rerank_window: config.rerank_window,
            aspect_no_need_count: 0,
            current_aspect: None,
            phase: Phase::Selecting,
        };
        let outcome = session.advance(backend)?;
        Ok((session, outcome))
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Finished { .. })
    }

    pub fn finish_reason(&self) -> Option<FinishReason> {
        match self.phase {
            Phase::Finished { reason } => Some(reason),
            _ => None,
        }
    }

    pub fn pending(&self) -> Option<&PendingQuestion> {
        match &self.phase {
            Phase::AwaitingAnswer { pending } => Some(pending),
            _ => None,
        }
    }

    /// The requirements confirmed so far, in confirmation order.
    pub fn elicited_requirements(&self) -> &[ElicitedRequirement] {
        &self.elicited
    }

    /// Processes the stakeholder's answer to the pending question and
    /// selects the next one.
    pub fn step(
        &mut self,
        answer: &str,
        backend: &dyn TextBackend,
    ) -> Result<StepOutcome, InterviewError> {
        let pending = match &self.phase {
            Phase::AwaitingAnswer { pending } => pending.clone(),
            Phase::Finished { .. } => return Err(InterviewError::SessionFinished),
            Phase::Selecting => return Err(InterviewError::NotAwaitingAnswer),
        };
        if answer.trim().is_empty() {
            return Err(InterviewError::EmptyAnswer);
        }
        let judgment = parse_user(answer, &pending, &self.onto, backend)?;
        self.history.push_answer(answer);

        match &pending {
            PendingQuestion::Slot { slot_id, .. } => {
                match judgment.verdict {
                    Verdict::ConfirmedSlot => {
                        self.onto.confirm_slot(slot_id)?;
                        let key = self
                            .onto
                            .slot(slot_id)
                            .map(|s| s.key.clone())
                            .unwrap_or_default();
                        self.elicited.push(ElicitedRequirement {
                            slot_id: slot_id.clone(),
                            key,
                            excerpt: judgment.rationale,
                            turn: self.turn + 1,
                        });
                    }
                    Verdict::RejectedSlot => {
                        self.onto.reject_slot(slot_id)?;
                        self.aspect_no_need_count += 1;
                    }
                    Verdict::RejectedDimension => {
                        self.onto.reject_slot(slot_id)?;
                        self.aspect_no_need_count += 1;
                        let dim_id = self
                            .onto
                            .slot_parents(slot_id)
                            .map(|(_, d)| d.id.clone())
                            .ok_or_else(|| OntologyError::UnknownNode(slot_id.0.clone()))?;
                        self.onto.prune_dimension(&dim_id)?;
                    }
                    Verdict::AspectDone | Verdict::AspectHasMore => {
                        unreachable!("slot judgments never carry gate verdicts")
                    }
                }
                self.turn += 1;
            }
            PendingQuestion::Gate { aspect_id, .. } => {
                if judgment.verdict == Verdict::AspectDone {
                    self.onto.prune_aspect(aspect_id)?;
                }
                self.aspect_no_need_count = 0;
            }
        }
        self.phase = Phase::Selecting;
        self.advance(backend)
    }

    /// Re-runs selection for a session left in the selecting phase by a
    /// failed backend call.
    pub fn resume(&mut self, backend: &dyn TextBackend) -> Result<StepOutcome, InterviewError> {
        match &self.phase {
            Phase::Selecting => self.advance(backend),
            Phase::AwaitingAnswer { pending } => Ok(StepOutcome::Question(pending.clone())),
            Phase::Finished { reason } => Ok(StepOutcome::Finished(*reason)),
        }
    }

    /// Ends the session early.
    pub fn stop(&mut self) -> FinishReason {
        if let Phase::Finished { reason } = self.phase {
            return reason;
        }
        self.phase = Phase::Finished {
            reason: FinishReason::Stopped,
        };
        FinishReason::Stopped
    }

    fn finish(&mut self, reason: FinishReason) -> StepOutcome {
        self.phase = Phase::Finished { reason };
        StepOutcome::Finished(reason)
    }

    fn advance(&mut self, backend: &dyn TextBackend) -> Result<StepOutcome, InterviewError> {
        debug_assert_eq!(self.phase, Phase::Selecting);
        if self.turn >= self.max_turns {
            return Ok(self.finish(FinishReason::MaxTurns));
        }
        if let Some(gate) = self.gate_check() {
            return Ok(StepOutcome::Question(gate));
        }
        let Some(slot_id) =
            rerank_onto(&self.history, &mut self.onto, backend, self.rerank_window)?
        else {
            return Ok(self.finish(FinishReason::NoEligibleSlots));
        };
        let aspect_id = self
            .onto
            .slot_parents(&slot_id)
            .map(|(a, _)| a.id.clone())
            .ok_or_else(|| OntologyError::UnknownNode(slot_id.0.clone()))?;
        if self.current_aspect.as_ref() != Some(&aspect_id) {
            self.current_aspect = Some(aspect_id);
            self.aspect_no_need_count = 0;
        }
        let text = question_gen(&self.history, &self.onto, &slot_id, backend);
        self.history.push_question(
            &text,
            TurnKind::SlotQuestion {
                slot_id: slot_id.clone(),
            },
        );
        let pending = PendingQuestion::Slot { slot_id, text };
        self.phase = Phase::AwaitingAnswer {
            pending: pending.clone(),
        };
        Ok(StepOutcome::Question(pending))
    }

    /// Issues the aspect gate question when the rejection count under the
    /// current aspect has reached the threshold.
    pub fn gate_check(&mut self) -> Option<PendingQuestion> {
        if self.phase != Phase::Selecting || self.aspect_no_need_count < self.gate_threshold {
            return None;
        }
        let aspect = self
            .current_aspect
            .as_ref()
            .and_then(|id| self.onto.aspect(id))
            .filter(|a| !a.pruned);
        let Some(aspect) = aspect else {
            self.aspect_no_need_count = 0;
            return None;
        };
        let aspect_id = aspect.id.clone();
        let text = gate_question(&aspect.name);
        self.history.push_question(
            &text,
            TurnKind::GateQuestion {
                aspect_id: aspect_id.clone(),
            },
        );
        let pending = PendingQuestion::Gate { aspect_id, text };
        self.phase = Phase::AwaitingAnswer {
            pending: pending.clone(),
        };
        Some(pending)
    }

    pub fn to_snapshot(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_snapshot(document: &str) -> Result<Self, OntologyError> {
        let mut de = serde_json::Deserializer::from_str(document);
        let state: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            OntologyError::SchemaViolation {
                path: e.path().to_string(),
                message: e.into_inner().to_string(),
            }
        })?;
        state.onto.validate().map_err(|e| match e {
            OntologyError::SchemaViolation { path, message } => OntologyError::SchemaViolation {
                path: format!("onto.{path}"),
                message,
            },
            other => other,
        })?;
        Ok(state)
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            turns: self.history.turns().to_vec(),
            summary: TranscriptSummary {
                elicited: self.elicited.clone(),
                final_ontology_state_digest: Some(self.onto.digest()),
                finish_reason: self.finish_reason(),
            },
        }
    }
}

/// The macro confirmation question asked at an aspect gate.
pub fn gate_question(aspect_name: &str) -> String {
    format!(
        "Are there any other requirements related to {}?",
        aspect_name.trim().to_lowercase()
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptSummary {
    pub elicited: Vec<ElicitedRequirement>,
    pub final_ontology_state_digest: Option<String>,
    pub finish_reason: Option<FinishReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TranscriptRecord {
    Turn(Turn),
    Summary(TranscriptSummary),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub turns: Vec<Turn>,
    pub summary: TranscriptSummary,
}

impl Transcript {
    /// One JSON object per turn, then the summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            out.push_str(&serde_json::to_string(turn).expect("turn serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary).expect("summary serializes"));
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut turns = Vec::new();
        let mut summary = None;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            if summary.is_some() {
                return Err(format!("line {}: record after the summary", i + 1));
            }
            match serde_json::from_str::<TranscriptRecord>(line)
                .map_err(|e| format!("line {}: {e}", i + 1))?
            {
                TranscriptRecord::Turn(t) => turns.push(t),
                TranscriptRecord::Summary(s) => summary = Some(s),
            }
        }
        Ok(Self {
            turns,
            summary: summary.ok_or("missing summary record")?,
        })
    }
}

fn warn_fallback(operation: &str, err: &GenerationError) {
    tracing::warn!(operation, error = %err, "backend call failed; using deterministic fallback");
}

/// Writes initial relevance scores for every node from the initial
/// description. Unlisted nodes keep 0; values are clamped into `[0, 1]`.
/// A recoverable backend failure leaves all scores at 0.
pub fn score_onto(
    initial_description: &str,
    onto: &mut ExperienceOntology,
    backend: &dyn TextBackend,
) -> Result<(), InterviewError> {
    let mut nodes = Vec::new();
    for a in &onto.aspects {
        nodes.push(json!({"id": a.id, "level": "aspect", "name": a.name}));
        for d in &a.dimensions {
            nodes.push(json!({"id": d.id, "level": "dimension", "name": d.name, "parent": a.id}));
            for s in &d.slots {
                nodes.push(json!({"id": s.id, "level": "slot", "key": s.key, "question": s.question, "parent": d.id}));
            }
        }
    }
    let nodes = serde_json::to_string_pretty(&nodes).expect("nodes serialize");
    let prompt = render_prompt(
        "score_onto",
        &[("description", initial_description), ("nodes", &nodes)],
    )
    .map_err(GenerationError::from)?;
    let reply = match generate_structured::<ScoreMapReply>(prompt, backend, &|_| Ok(())) {
        Ok((reply, _)) => reply,
        Err(e) if e.is_recoverable() => {
            warn_fallback("score_onto", &e);
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    for (id, score) in reply.scores {
        let node = NodeId(id);
        match onto.set_score(&node, score) {
            Ok(stored) if stored != score => {
                tracing::warn!(node = %node, score, stored, "score clamped into [0, 1]")
            }
            Ok(_) => {}
            Err(_) => tracing::warn!(node = %node, "score for unknown node ignored"),
        }
    }
    Ok(())
}

/// Picks the next slot among the top `window` eligible slots, letting the
/// backend re-score them in light of the dialogue. `None` when nothing is
/// eligible. A recoverable backend failure falls back to the head of the
/// eligible list.
pub fn rerank_onto(
    history: &DialogueHistory,
    onto: &mut ExperienceOntology,
    backend: &dyn TextBackend,
    window: usize,
) -> Result<Option<NodeId>, InterviewError> {
    let eligible = onto.eligible_slots();
    let candidates: Vec<NodeId> = eligible.into_iter().take(window.max(1)).collect();
    match candidates.len() {
        0 => return Ok(None),
        1 => return Ok(candidates.into_iter().next()),
        _ => {}
    }
    let listing: Vec<_> = candidates
        .iter()
        .map(|id| {
            let slot = onto.slot(id).expect("eligible slot exists");
            let (aspect, dim) = onto.slot_parents(id).expect("eligible slot has parents");
            json!({
                "id": id,
                "aspect": aspect.name,
                "dimension": dim.name,
                "key": slot.key,
                "question": slot.question,
                "score": slot.score,
            })
        })
        .collect();
    let listing = serde_json::to_string_pretty(&listing).expect("candidates serialize");
    let rendered = history.render();
    let prompt = render_prompt(
        "rerank_onto",
        &[("history", &rendered), ("candidates", &listing)],
    )
    .map_err(GenerationError::from)?;
    let is_candidate = |r: &RankChoiceReply| {
        if candidates.iter().any(|c| c.0 == r.choice) {
            Ok(())
        } else {
            Err(format!(
                "choice `{}` is not one of the candidate ids",
                r.choice
            ))
        }
    };
    let reply = match generate_structured::<RankChoiceReply>(prompt, backend, &is_candidate) {
        Ok((reply, _)) => reply,
        Err(e) if e.is_recoverable() => {
            warn_fallback("rerank_onto", &e);
            return Ok(candidates.into_iter().next());
        }
        Err(e) => return Err(e.into()),
    };
    for (id, score) in &reply.scores {
        if let Some(c) = candidates.iter().find(|c| &c.0 == id) {
            onto.set_score(c, *score)?;
        }
    }
    Ok(Some(NodeId(reply.choice)))
}

/// Interprets an answer to the pending question. Parser failure never
/// prunes: a slot answer defaults to confirmed, a gate answer to "has more".
pub fn parse_user(
    answer: &str,
    pending: &PendingQuestion,
    onto: &ExperienceOntology,
    backend: &dyn TextBackend,
) -> Result<UserJudgment, InterviewError> {
    match pending {
        PendingQuestion::Slot { slot_id, text } => {
            let slot = onto
                .slot(slot_id)
                .ok_or_else(|| OntologyError::UnknownNode(slot_id.0.clone()))?;
            let (aspect, dim) = onto.slot_parents(slot_id).expect("slot has parents");
            let prompt = render_prompt(
                "parse_user_slot",
                &[
                    ("aspect", &aspect.name),
                    ("dimension", &dim.name),
                    ("slot", &slot.key),
                    ("question", text),
                    ("answer", answer.trim()),
                ],
            )
            .map_err(GenerationError::from)?;
            match generate_structured::<SlotJudgmentReply>(prompt, backend, &|_| Ok(())) {
                Ok((reply, _)) => Ok(match reply.verdict {
                    SlotVerdictReply::ConfirmedSlot => UserJudgment {
                        verdict: Verdict::ConfirmedSlot,
                        target: slot_id.clone(),
                        rationale: reply.excerpt,
                    },
                    SlotVerdictReply::RejectedSlot => UserJudgment {
                        verdict: Verdict::RejectedSlot,
                        target: slot_id.clone(),
                        rationale: reply.excerpt,
                    },
                    SlotVerdictReply::RejectedDimension => UserJudgment {
                        verdict: Verdict::RejectedDimension,
                        target: dim.id.clone(),
                        rationale: reply.excerpt,
                    },
                }),
                Err(e) if e.is_recoverable() => {
                    warn_fallback("parse_user", &e);
                    Ok(UserJudgment {
                        verdict: Verdict::ConfirmedSlot,
                        target: slot_id.clone(),
                        rationale: String::new(),
                    })
                }
                Err(e) => Err(e.into()),
            }
        }
        PendingQuestion::Gate { aspect_id, text } => {
            let aspect = onto
                .aspect(aspect_id)
                .ok_or_else(|| OntologyError::UnknownNode(aspect_id.0.clone()))?;
            let prompt = render_prompt(
                "parse_user_gate",
                &[
                    ("aspect", &aspect.name),
                    ("question", text),
                    ("answer", answer.trim()),
                ],
            )
            .map_err(GenerationError::from)?;
            match generate_structured::<GateJudgmentReply>(prompt, backend, &|_| Ok(())) {
                Ok((reply, _)) => Ok(UserJudgment {
                    verdict: match reply.verdict {
                        GateVerdictReply::AspectDone => Verdict::AspectDone,
                        GateVerdictReply::AspectHasMore => Verdict::AspectHasMore,
                    },
                    target: aspect_id.clone(),
                    rationale: reply.excerpt,
                }),
                Err(e) if e.is_recoverable() => {
                    warn_fallback("parse_user", &e);
                    Ok(UserJudgment {
                        verdict: Verdict::AspectHasMore,
                        target: aspect_id.clone(),
                        rationale: String::new(),
                    })
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

const YES_NO_OPENERS: &[&str] = &[
    "do", "does", "did", "would", "should", "is", "are", "will", "can", "could", "have", "has",
    "shall", "may",
];
const WH_WORDS: &[&str] = &["what", "which", "how", "who", "where", "when", "why"];

fn question_matches_form(question: &str, form: QuestionForm) -> Result<(), String> {
    let lower = question.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    match form {
        QuestionForm::Binary if words.first().is_some_and(|w| YES_NO_OPENERS.contains(w)) => Ok(()),
        QuestionForm::Binary => Err("a binary slot needs a yes/no question".into()),
        QuestionForm::OpenEnded if words.iter().any(|w| WH_WORDS.contains(w)) => Ok(()),
        QuestionForm::OpenEnded => Err("an open slot needs a what/which/how question".into()),
    }
}

/// Phrases the question for a selected slot. Never fails: any backend
/// problem yields the slot's stored candidate question.
pub fn question_gen(
    history: &DialogueHistory,
    onto: &ExperienceOntology,
    slot_id: &NodeId,
    backend: &dyn TextBackend,
) -> String {
    let Some(slot) = onto.slot(slot_id) else {
        return String::new();
    };
    let (aspect, dim) = onto.slot_parents(slot_id).expect("slot has parents");
    let form = match slot.question_form {
        QuestionForm::Binary => "binary",
        QuestionForm::OpenEnded => "open",
    };
    let rendered = history.render();
    let prompt = match render_prompt(
        "question_gen",
        &[
            ("history", &rendered),
            ("aspect", &aspect.name),
            ("dimension", &dim.name),
            ("key", &slot.key),
            ("form", form),
            ("question", &slot.question),
        ],
    ) {
        Ok(p) => p,
        Err(_) => return slot.question.clone(),
    };
    let check = |r: &QuestionReply| question_matches_form(&r.question, slot.question_form);
    match generate_structured::<QuestionReply>(prompt, backend, &check) {
        Ok((reply, _)) => reply.question.trim().to_string(),
        Err(e) => {
            warn_fallback("question_gen", &e);
            slot.question.clone()
        }
    }
}

/// Free-form baseline interviewer: one question straight from the raw
/// dialogue, with no ontology involved.
pub fn freeform_step(
    history: &DialogueHistory,
    backend: &dyn TextBackend,
) -> Result<String, GenerationError> {
    let rendered = history.render();
    let prompt = render_prompt("freeform_question", &[("history", &rendered)])?;
    let (reply, _) = generate_structured::<QuestionReply>(prompt, backend, &|_| Ok(()))?;
    Ok(reply.question.trim().to_string())
}
