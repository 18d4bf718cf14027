//! Ontology induction from domain requirement texts.
//!
//! Induction runs in two full passes over the corpus. The first pass grows
//! the dimension layer under the expert-provided aspects, merging whenever
//! the backend finds an existing dimension that fits. The second pass
//! attaches slots to the dimensions each document touched. Nothing is ever
//! deleted, so node counts only grow across documents.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::backend::schema::{DimensionAction, DimensionInductionReply, SlotInductionReply};
use crate::backend::{generate_structured, GenerationError, TextBackend};
use crate::ontology::{
    binary_question_for, classify_question, is_binary_question, ExperienceOntology, NodeId,
    OntologyError, QuestionForm,
};
use crate::prompts::render_prompt;
use crate::text::normalize_key;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementDoc {
    pub id: String,
    pub app_type: String,
    pub body: String,
}

#[derive(Debug, Error)]
pub enum InductionError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("aspect list is empty; the aspect layer is provided by domain experts")]
    EmptyAspectList,
    #[error("corpus line {line}: {message}")]
    CorpusLine { line: usize, message: String },
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

/// Parses a JSONL corpus. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus(jsonl: &str) -> Result<Vec<RequirementDoc>, InductionError> {
    let mut docs = Vec::new();
    for (i, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: RequirementDoc =
            serde_json::from_str(line).map_err(|e| InductionError::CorpusLine {
                line: i + 1,
                message: e.to_string(),
            })?;
        if doc.body.trim().is_empty() {
            return Err(InductionError::CorpusLine {
                line: i + 1,
                message: format!("document `{}` has an empty body", doc.id),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposedDimension {
    MergeInto(String),
    AddNew(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionProposal {
    pub aspect_name: String,
    pub action: ProposedDimension,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotProposal {
    pub aspect_name: String,
    pub dimension_name: String,
    pub key: String,
    pub question: String,
    pub form: QuestionForm,
    pub overlaps_with: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LoggedProposal {
    Dimension(DimensionProposal),
    Slot(SlotProposal),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InductionAction {
    AddDimension,
    MergeDimension,
    AddSlot,
    /// Conflict resolved in favour of the slot already in the tree.
    KeepExistingSlot,
    /// Conflict resolved in favour of the new key; the existing slot is rekeyed.
    RekeySlot,
    SkipUnknownAspect,
    SkipUnknownDimension,
    SkipUntouchedDimension,
    SkipInvalidSlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductionLogEntry {
    pub doc_id: String,
    pub proposal: LoggedProposal,
    pub action: InductionAction,
    pub node_id: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InductionOutcome {
    pub ontology: ExperienceOntology,
    pub log: Vec<InductionLogEntry>,
}

impl InductionOutcome {
    pub fn log_jsonl(&self) -> String {
        log_to_jsonl(&self.log)
    }
}

pub fn log_to_jsonl(log: &[InductionLogEntry]) -> String {
    log.iter()
        .map(|e| serde_json::to_string(e).expect("log entry serializes") + "\n")
        .collect()
}

/// Conflict rule for overlapping slot keys: keep the shorter formulation,
/// and the existing one on a tie.
pub fn resolve_conflict(existing_key: &str, new_key: &str) -> String {
    let existing = normalize_key(existing_key);
    let new = normalize_key(new_key);
    if new.chars().count() < existing.chars().count() {
        new
    } else {
        existing
    }
}

/// Incremental induction state: the running log plus, per document, the
/// dimensions its dimension pass touched.
pub struct Inducer<'a> {
    backend: &'a dyn TextBackend,
    log: Vec<InductionLogEntry>,
    touched: HashMap<String, HashSet<NodeId>>,
}

impl<'a> Inducer<'a> {
    pub fn new(backend: &'a dyn TextBackend) -> Self {
        Self {
            backend,
            log: Vec::new(),
            touched: HashMap::new(),
        }
    }

    pub fn log(&self) -> &[InductionLogEntry] {
        &self.log
    }

    pub fn into_log(self) -> Vec<InductionLogEntry> {
        self.log
    }

    fn record(
        &mut self,
        doc: &RequirementDoc,
        proposal: LoggedProposal,
        action: InductionAction,
        node: Option<NodeId>,
    ) {
        if action != InductionAction::AddSlot && action != InductionAction::AddDimension {
            tracing::debug!(doc = %doc.id, ?action, "induction proposal not applied as a new node");
        }
        self.log.push(InductionLogEntry {
            doc_id: doc.id.clone(),
            proposal,
            action,
            node_id: node,
        });
    }

    /// Dimension pass for one document.
    pub fn induce_dimensions(
        &mut self,
        doc: &RequirementDoc,
        onto: &mut ExperienceOntology,
    ) -> Result<(), InductionError> {
        let tree = serde_json::to_string_pretty(&dimension_view(onto)).expect("view serializes");
        let prompt = render_prompt(
            "dimension_induction",
            &[("ontology", &tree), ("requirements", &doc.body)],
        )
        .map_err(GenerationError::from)?;
        let (reply, _) =
            generate_structured::<DimensionInductionReply>(prompt, self.backend, &|_| Ok(()))?;

        for p in reply.proposals {
            let proposal = DimensionProposal {
                aspect_name: p.aspect.trim().to_string(),
                action: match p.action {
                    DimensionAction::Merge => {
                        ProposedDimension::MergeInto(p.dimension.trim().to_string())
                    }
                    DimensionAction::Add => {
                        ProposedDimension::AddNew(p.dimension.trim().to_string())
                    }
                },
                evidence: p.evidence,
            };
            let (action, node) = self.apply_dimension(&proposal, onto)?;
            if let Some(id) = &node {
                self.touched
                    .entry(doc.id.clone())
                    .or_default()
                    .insert(id.clone());
            }
            self.record(doc, LoggedProposal::Dimension(proposal), action, node);
        }
        Ok(())
    }

    fn apply_dimension(
        &mut self,
        proposal: &DimensionProposal,
        onto: &mut ExperienceOntology,
    ) -> Result<(InductionAction, Option<NodeId>), InductionError> {
        let Some(aspect) = onto.find_aspect_by_name(&proposal.aspect_name) else {
            return Ok((InductionAction::SkipUnknownAspect, None));
        };
        let aspect_id = aspect.id.clone();
        let aspect_name = aspect.name.clone();
        match &proposal.action {
            ProposedDimension::MergeInto(target) => {
                Ok(match onto.find_dimension_by_name(&aspect_name, target) {
                    Some(dim) => (InductionAction::MergeDimension, Some(dim.id.clone())),
                    None => (InductionAction::SkipUnknownDimension, None),
                })
            }
            ProposedDimension::AddNew(name) => {
                if name.is_empty() {
                    return Ok((InductionAction::SkipUnknownDimension, None));
                }
                if let Some(dim) = onto.find_dimension_by_name(&aspect_name, name) {
                    return Ok((InductionAction::MergeDimension, Some(dim.id.clone())));
                }
                let id = onto.add_dimension(&aspect_id, name)?;
                Ok((InductionAction::AddDimension, Some(id)))
            }
        }
    }

    /// Slot pass for one document.
    pub fn induce_slots(
        &mut self,
        doc: &RequirementDoc,
        onto: &mut ExperienceOntology,
    ) -> Result<(), InductionError> {
        let tree = serde_json::to_string_pretty(&slot_view(onto)).expect("view serializes");
        let prompt = render_prompt(
            "slot_induction",
            &[("current_ontology", &tree), ("instruction", &doc.body)],
        )
        .map_err(GenerationError::from)?;
        let (reply, _) =
            generate_structured::<SlotInductionReply>(prompt, self.backend, &|_| Ok(()))?;

        for s in reply.slots {
            let proposal = SlotProposal {
                aspect_name: s.aspect.trim().to_string(),
                dimension_name: s.dimension.trim().to_string(),
                key: normalize_key(&s.key),
                question: s.question.trim().to_string(),
                form: s.form,
                overlaps_with: s
                    .overlaps_with
                    .map(|k| normalize_key(&k))
                    .filter(|k| !k.is_empty()),
            };
            let (action, node) = self.apply_slot(doc, &proposal, onto)?;
            self.record(doc, LoggedProposal::Slot(proposal), action, node);
        }
        Ok(())
    }

    fn apply_slot(
        &mut self,
        doc: &RequirementDoc,
        proposal: &SlotProposal,
        onto: &mut ExperienceOntology,
    ) -> Result<(InductionAction, Option<NodeId>), InductionError> {
        if onto.find_aspect_by_name(&proposal.aspect_name).is_none() {
            return Ok((InductionAction::SkipUnknownAspect, None));
        }
        let Some(dim) =
            onto.find_dimension_by_name(&proposal.aspect_name, &proposal.dimension_name)
        else {
            return Ok((InductionAction::SkipUnknownDimension, None));
        };
        let dim_id = dim.id.clone();
        if let Some(touched) = self.touched.get(&doc.id) {
            if !touched.contains(&dim_id) {
                return Ok((InductionAction::SkipUntouchedDimension, None));
            }
        }
        if proposal.key.is_empty() {
            return Ok((InductionAction::SkipInvalidSlot, None));
        }
        let (question, form) = conform_question(&proposal.key, &proposal.question, proposal.form);

        if let Some(existing) = dim.slots.iter().find(|s| s.key == proposal.key) {
            return Ok((InductionAction::KeepExistingSlot, Some(existing.id.clone())));
        }
        let overlapping = proposal
            .overlaps_with
            .as_ref()
            .and_then(|k| dim.slots.iter().find(|s| &s.key == k));
        if let Some(existing) = overlapping {
            let existing_id = existing.id.clone();
            let kept = resolve_conflict(&existing.key, &proposal.key);
            if kept == existing.key {
                return Ok((InductionAction::KeepExistingSlot, Some(existing_id)));
            }
            onto.rekey_slot(&existing_id, &kept, &question, form)?;
            return Ok((InductionAction::RekeySlot, Some(existing_id)));
        }
        match onto.add_slot(&dim_id, &proposal.key, &question, form) {
            Ok(id) => Ok((InductionAction::AddSlot, Some(id))),
            Err(OntologyError::QuestionFormMismatch { .. }) | Err(OntologyError::EmptyName) => {
                Ok((InductionAction::SkipInvalidSlot, None))
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Makes the question agree with the declared form: a binary slot always
/// gets the canonical "Do you need …?" text, and an open question that is
/// really a "Do you need" question is treated as binary.
fn conform_question(key: &str, question: &str, form: QuestionForm) -> (String, QuestionForm) {
    match form {
        QuestionForm::Binary if is_binary_question(question) => (question.to_string(), form),
        QuestionForm::Binary => (binary_question_for(key), form),
        QuestionForm::OpenEnded => match classify_question(question) {
            Some(QuestionForm::OpenEnded) => (question.to_string(), form),
            Some(QuestionForm::Binary) => (question.to_string(), QuestionForm::Binary),
            None => (binary_question_for(key), QuestionForm::Binary),
        },
    }
}

fn dimension_view(onto: &ExperienceOntology) -> serde_json::Value {
    json!(onto
        .aspects
        .iter()
        .map(|a| json!({
            "aspect": a.name,
            "dimensions": a.dimensions.iter().map(|d| d.name.clone()).collect::<Vec<_>>(),
        }))
        .collect::<Vec<_>>())
}

fn slot_view(onto: &ExperienceOntology) -> serde_json::Value {
    json!(onto
        .aspects
        .iter()
        .map(|a| json!({
            "aspect": a.name,
            "dimensions": a.dimensions.iter().map(|d| json!({
                "dimension": d.name,
                "slots": d.slots.iter().map(|s| s.key.clone()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        }))
        .collect::<Vec<_>>())
}

/// Builds an ontology from scratch: aspects first, then a dimension pass
/// over the whole corpus, then a slot pass over the whole corpus.
pub fn induce_ontology<S: AsRef<str>>(
    domain_name: &str,
    corpus: &[RequirementDoc],
    aspects: &[S],
    backend: &dyn TextBackend,
) -> Result<InductionOutcome, InductionError> {
    if aspects.is_empty() {
        return Err(InductionError::EmptyAspectList);
    }
    if corpus.is_empty() {
        return Err(InductionError::EmptyCorpus);
    }
    let mut onto = ExperienceOntology::with_aspects(domain_name, aspects)?;
    let mut inducer = Inducer::new(backend);
    for doc in corpus {
        inducer.induce_dimensions(doc, &mut onto)?;
    }
    for doc in corpus {
        inducer.induce_slots(doc, &mut onto)?;
    }
    Ok(InductionOutcome {
        ontology: onto,
        log: inducer.into_log(),
    })
}
