//! The experience ontology: a three-level aspect → dimension → slot tree.
//!
//! Aspects partition the requirement space, dimensions group functional
//! points under an aspect, and slots are the individual clarifiable items an
//! interviewer can ask about. Every node carries a relevance score in
//! `[0, 1]`; slots also carry a lifecycle [`SlotState`].
//!
//! The tree is stored by containment, so every dimension has exactly one
//! parent aspect and every slot exactly one parent dimension. Node ids are
//! opaque strings assigned at creation and never reused.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{normalize_key, sha256_hex, slugify};

/// Opaque, stable node identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotState {
    Unexplored,
    Confirmed,
    Rejected,
    Pruned,
}

impl SlotState {
    pub fn is_terminal(self) -> bool {
        !matches!(self, SlotState::Unexplored)
    }
}

impl fmt::Display for SlotState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SlotState::Unexplored => "unexplored",
            SlotState::Confirmed => "confirmed",
            SlotState::Rejected => "rejected",
            SlotState::Pruned => "pruned",
        };
        f.write_str(s)
    }
}

/// Linguistic form of a slot's candidate question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionForm {
    /// "Do you need …?" confirmation.
    #[serde(rename = "binary")]
    Binary,
    /// Open refinement question ("What …?").
    #[serde(rename = "open")]
    OpenEnded,
}

/// True for questions of the form "Do you need …?".
pub fn is_binary_question(question: &str) -> bool {
    let q = normalize_key(question);
    q.starts_with("do you need ") && q.ends_with('?')
}

/// The form a question text actually has, or `None` if it is not a question.
pub fn classify_question(question: &str) -> Option<QuestionForm> {
    let q = question.trim();
    if !q.ends_with('?') || q.len() < 2 {
        None
    } else if is_binary_question(q) {
        Some(QuestionForm::Binary)
    } else {
        Some(QuestionForm::OpenEnded)
    }
}

/// Canonical binary question for a key.
pub fn binary_question_for(key: &str) -> String {
    format!("Do you need {}?", normalize_key(key))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub id: NodeId,
    pub key: String,
    pub question: String,
    pub question_form: QuestionForm,
    pub state: SlotState,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub id: NodeId,
    pub name: String,
    pub pruned: bool,
    pub score: f64,
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aspect {
    pub id: NodeId,
    pub name: String,
    pub pruned: bool,
    pub score: f64,
    pub dimensions: Vec<Dimension>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperienceOntology {
    pub domain_name: String,
    pub version: u64,
    pub aspects: Vec<Aspect>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OntologyError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("`{name}` already exists under `{parent}`")]
    DuplicateName { parent: String, name: String },
    #[error("slot key `{key}` already exists under `{parent}`")]
    DuplicateKey { parent: String, key: String },
    #[error("name must not be empty")]
    EmptyName,
    #[error("node `{0}` is pruned")]
    PrunedNode(String),
    #[error("question `{question}` does not have the {form:?} form")]
    QuestionFormMismatch {
        question: String,
        form: QuestionForm,
    },
    #[error("slot `{id}` cannot move from {from} to {to}")]
    InvalidTransition {
        id: String,
        from: SlotState,
        to: SlotState,
    },
    #[error("schema violation at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
}

/// Where a slot sits in the tree, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotPosition {
    pub aspect: usize,
    pub dimension: usize,
    pub slot: usize,
}

impl ExperienceOntology {
    pub fn new(domain_name: impl Into<String>) -> Self {
        Self {
            domain_name: domain_name.into(),
            version: 0,
            aspects: Vec::new(),
        }
    }

    /// Builds an ontology whose aspect layer is `names`, with no dimensions.
    pub fn with_aspects<S: AsRef<str>>(
        domain_name: impl Into<String>,
        names: &[S],
    ) -> Result<Self, OntologyError> {
        let mut onto = Self::new(domain_name);
        for name in names {
            onto.add_aspect(name.as_ref())?;
        }
        Ok(onto)
    }

    fn node_count(&self) -> usize {
        self.aspects
            .iter()
            .map(|a| {
                1 + a
                    .dimensions
                    .iter()
                    .map(|d| 1 + d.slots.len())
                    .sum::<usize>()
            })
            .sum()
    }

    fn contains_id(&self, id: &str) -> bool {
        self.aspects.iter().any(|a| {
            a.id.0 == id
                || a.dimensions
                    .iter()
                    .any(|d| d.id.0 == id || d.slots.iter().any(|s| s.id.0 == id))
        })
    }

    fn fresh_id(&self, path: &str) -> NodeId {
        let mut n = self.node_count();
        loop {
            let candidate = format!("{path}#{n}");
            if !self.contains_id(&candidate) {
                return NodeId(candidate);
            }
            n += 1;
        }
    }

    pub fn add_aspect(&mut self, name: &str) -> Result<NodeId, OntologyError> {
        let display = name.trim();
        if display.is_empty() {
            return Err(OntologyError::EmptyName);
        }
        let norm = normalize_key(display);
        if self.aspects.iter().any(|a| normalize_key(&a.name) == norm) {
            return Err(OntologyError::DuplicateName {
                parent: self.domain_name.clone(),
                name: display.to_string(),
            });
        }
        let id = self.fresh_id(&slugify(display));
        self.aspects.push(Aspect {
            id: id.clone(),
            name: display.to_string(),
            pruned: false,
            score: 0.0,
            dimensions: Vec::new(),
        });
        self.version += 1;
        Ok(id)
    }

    pub fn add_dimension(
        &mut self,
        aspect_id: &NodeId,
        name: &str,
    ) -> Result<NodeId, OntologyError> {
        let display = name.trim();
        let ai = self.aspect_index(aspect_id)?;
        if display.is_empty() {
            return Err(OntologyError::EmptyName);
        }
        let aspect = &self.aspects[ai];
        if aspect.pruned {
            return Err(OntologyError::PrunedNode(aspect_id.0.clone()));
        }
        let norm = normalize_key(display);
        if aspect
            .dimensions
            .iter()
            .any(|d| normalize_key(&d.name) == norm)
        {
            return Err(OntologyError::DuplicateName {
                parent: aspect.name.clone(),
                name: display.to_string(),
            });
        }
        let path = format!("{}.{}", slugify(&aspect.name), slugify(display));
        let id = self.fresh_id(&path);
        self.aspects[ai].dimensions.push(Dimension {
            id: id.clone(),
            name: display.to_string(),
            pruned: false,
            score: 0.0,
            slots: Vec::new(),
        });
        self.version += 1;
        Ok(id)
    }

    pub fn add_slot(
        &mut self,
        dimension_id: &NodeId,
        key: &str,
        question: &str,
        form: QuestionForm,
    ) -> Result<NodeId, OntologyError> {
        let (ai, di) = self.dimension_index(dimension_id)?;
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(OntologyError::EmptyName);
        }
        let question = question.trim();
        if classify_question(question) != Some(form) {
            return Err(OntologyError::QuestionFormMismatch {
                question: question.to_string(),
                form,
            });
        }
        let aspect = &self.aspects[ai];
        let dim = &aspect.dimensions[di];
        if aspect.pruned || dim.pruned {
            return Err(OntologyError::PrunedNode(dimension_id.0.clone()));
        }
        if dim.slots.iter().any(|s| s.key == key) {
            return Err(OntologyError::DuplicateKey {
                parent: dim.name.clone(),
                key,
            });
        }
        let path = format!(
            "{}.{}.{}",
            slugify(&aspect.name),
            slugify(&dim.name),
            slugify(&key)
        );
        let id = self.fresh_id(&path);
        self.aspects[ai].dimensions[di].slots.push(Slot {
            id: id.clone(),
            key,
            question: question.to_string(),
            question_form: form,
            state: SlotState::Unexplored,
            score: 0.0,
        });
        self.version += 1;
        Ok(id)
    }

    /// Replaces a slot's key and question in place, keeping its id and state.
    pub fn rekey_slot(
        &mut self,
        slot_id: &NodeId,
        key: &str,
        question: &str,
        form: QuestionForm,
    ) -> Result<(), OntologyError> {
        let pos = self.slot_position(slot_id)?;
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(OntologyError::EmptyName);
        }
        let question = question.trim();
        if classify_question(question) != Some(form) {
            return Err(OntologyError::QuestionFormMismatch {
                question: question.to_string(),
                form,
            });
        }
        let dim = &self.aspects[pos.aspect].dimensions[pos.dimension];
        if dim
            .slots
            .iter()
            .enumerate()
            .any(|(i, s)| i != pos.slot && s.key == key)
        {
            return Err(OntologyError::DuplicateKey {
                parent: dim.name.clone(),
                key,
            });
        }
        let slot = &mut self.aspects[pos.aspect].dimensions[pos.dimension].slots[pos.slot];
        slot.key = key;
        slot.question = question.to_string();
        slot.question_form = form;
        self.version += 1;
        Ok(())
    }

    /// Prunes an aspect and every unexplored slot below it. Returns whether
    /// anything changed; confirmed and rejected slots keep their state.
    pub fn prune_aspect(&mut self, aspect_id: &NodeId) -> Result<bool, OntologyError> {
        let ai = self.aspect_index(aspect_id)?;
        let aspect = &mut self.aspects[ai];
        let mut changed = !aspect.pruned;
        aspect.pruned = true;
        for dim in &mut aspect.dimensions {
            changed |= prune_slots(&mut dim.slots);
        }
        if changed {
            self.version += 1;
        }
        Ok(changed)
    }

    /// Dimension-scoped counterpart of [`prune_aspect`](Self::prune_aspect).
    pub fn prune_dimension(&mut self, dimension_id: &NodeId) -> Result<bool, OntologyError> {
        let (ai, di) = self.dimension_index(dimension_id)?;
        let dim = &mut self.aspects[ai].dimensions[di];
        let mut changed = !dim.pruned;
        dim.pruned = true;
        changed |= prune_slots(&mut dim.slots);
        if changed {
            self.version += 1;
        }
        Ok(changed)
    }

    pub fn confirm_slot(&mut self, slot_id: &NodeId) -> Result<(), OntologyError> {
        self.transition(slot_id, SlotState::Confirmed)
    }

    pub fn reject_slot(&mut self, slot_id: &NodeId) -> Result<(), OntologyError> {
        self.transition(slot_id, SlotState::Rejected)
    }

    fn transition(&mut self, slot_id: &NodeId, to: SlotState) -> Result<(), OntologyError> {
        let pos = self.slot_position(slot_id)?;
        let slot = &mut self.aspects[pos.aspect].dimensions[pos.dimension].slots[pos.slot];
        if slot.state != SlotState::Unexplored {
            return Err(OntologyError::InvalidTransition {
                id: slot_id.0.clone(),
                from: slot.state,
                to,
            });
        }
        slot.state = to;
        self.version += 1;
        Ok(())
    }

    /// Writes a score onto any node, clamped into `[0, 1]` (NaN becomes 0).
    /// Returns the value actually stored.
    pub fn set_score(&mut self, node_id: &NodeId, score: f64) -> Result<f64, OntologyError> {
        let value = clamp_unit(score);
        let target = self
            .aspects
            .iter_mut()
            .find_map(|a| {
                if a.id == *node_id {
                    return Some(&mut a.score);
                }
                a.dimensions.iter_mut().find_map(|d| {
                    if d.id == *node_id {
                        return Some(&mut d.score);
                    }
                    d.slots
                        .iter_mut()
                        .find(|s| s.id == *node_id)
                        .map(|s| &mut s.score)
                })
            })
            .ok_or_else(|| OntologyError::UnknownNode(node_id.0.clone()))?;
        if *target != value {
            *target = value;
            self.version += 1;
        }
        Ok(value)
    }

    /// A copy ready for a new interview: every slot unexplored, nothing
    /// pruned, all scores zero. Structure and ids are unchanged.
    pub fn fresh_copy(&self) -> Self {
        let mut copy = self.clone();
        for aspect in &mut copy.aspects {
            aspect.pruned = false;
            aspect.score = 0.0;
            for dim in &mut aspect.dimensions {
                dim.pruned = false;
                dim.score = 0.0;
                for slot in &mut dim.slots {
                    slot.state = SlotState::Unexplored;
                    slot.score = 0.0;
                }
            }
        }
        copy
    }

    /// Unexplored slots under unpruned ancestors, best first.
    ///
    /// Ordered by aspect score, then dimension score, then slot score, all
    /// descending; ties keep tree (insertion) order.
    pub fn eligible_slots(&self) -> Vec<NodeId> {
        let mut candidates: Vec<(f64, f64, f64, &NodeId)> = Vec::new();
        for aspect in self.aspects.iter().filter(|a| !a.pruned) {
            for dim in aspect.dimensions.iter().filter(|d| !d.pruned) {
                for slot in dim
                    .slots
                    .iter()
                    .filter(|s| s.state == SlotState::Unexplored)
                {
                    candidates.push((aspect.score, dim.score, slot.score, &slot.id));
                }
            }
        }
        // stable sort keeps tree order on ties
        candidates.sort_by(|x, y| {
            y.0.total_cmp(&x.0)
                .then(y.1.total_cmp(&x.1))
                .then(y.2.total_cmp(&x.2))
        });
        candidates.into_iter().map(|c| c.3.clone()).collect()
    }

    pub fn aspect(&self, id: &NodeId) -> Option<&Aspect> {
        self.aspects.iter().find(|a| a.id == *id)
    }

    pub fn dimension(&self, id: &NodeId) -> Option<&Dimension> {
        self.aspects
            .iter()
            .flat_map(|a| a.dimensions.iter())
            .find(|d| d.id == *id)
    }

    pub fn slot(&self, id: &NodeId) -> Option<&Slot> {
        self.slot_position(id).ok().map(|p| self.slot_at(p))
    }

    pub fn slot_at(&self, pos: SlotPosition) -> &Slot {
        &self.aspects[pos.aspect].dimensions[pos.dimension].slots[pos.slot]
    }

    /// The aspect and dimension that own a slot.
    pub fn slot_parents(&self, slot_id: &NodeId) -> Option<(&Aspect, &Dimension)> {
        let pos = self.slot_position(slot_id).ok()?;
        let aspect = &self.aspects[pos.aspect];
        Some((aspect, &aspect.dimensions[pos.dimension]))
    }

    pub fn find_aspect_by_name(&self, name: &str) -> Option<&Aspect> {
        let norm = normalize_key(name);
        self.aspects.iter().find(|a| normalize_key(&a.name) == norm)
    }

    pub fn find_dimension_by_name(&self, aspect_name: &str, name: &str) -> Option<&Dimension> {
        let norm = normalize_key(name);
        self.find_aspect_by_name(aspect_name)?
            .dimensions
            .iter()
            .find(|d| normalize_key(&d.name) == norm)
    }

    pub fn slot_position(&self, id: &NodeId) -> Result<SlotPosition, OntologyError> {
        for (ai, aspect) in self.aspects.iter().enumerate() {
            for (di, dim) in aspect.dimensions.iter().enumerate() {
                if let Some(si) = dim.slots.iter().position(|s| s.id == *id) {
                    return Ok(SlotPosition {
                        aspect: ai,
                        dimension: di,
                        slot: si,
                    });
                }
            }
        }
        Err(OntologyError::UnknownNode(id.0.clone()))
    }

    fn aspect_index(&self, id: &NodeId) -> Result<usize, OntologyError> {
        self.aspects
            .iter()
            .position(|a| a.id == *id)
            .ok_or_else(|| OntologyError::UnknownNode(id.0.clone()))
    }

    fn dimension_index(&self, id: &NodeId) -> Result<(usize, usize), OntologyError> {
        for (ai, aspect) in self.aspects.iter().enumerate() {
            if let Some(di) = aspect.dimensions.iter().position(|d| d.id == *id) {
                return Ok((ai, di));
            }
        }
        Err(OntologyError::UnknownNode(id.0.clone()))
    }

    /// All slots in tree order.
    pub fn slots(&self) -> impl Iterator<Item = &Slot> {
        self.aspects
            .iter()
            .flat_map(|a| a.dimensions.iter())
            .flat_map(|d| d.slots.iter())
    }

    pub fn dimension_count(&self) -> usize {
        self.aspects.iter().map(|a| a.dimensions.len()).sum()
    }

    pub fn slot_count(&self) -> usize {
        self.slots().count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ontology serializes")
    }

    /// Parses and validates an ontology document.
    pub fn from_json(document: &str) -> Result<Self, OntologyError> {
        let mut de = serde_json::Deserializer::from_str(document);
        let onto: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            OntologyError::SchemaViolation {
                path: if path == "." { "$".to_string() } else { path },
                message: e.into_inner().to_string(),
            }
        })?;
        onto.validate()?;
        Ok(onto)
    }

    /// SHA-256 of the compact serialized tree.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_vec(self).expect("ontology serializes"))
    }

    /// Checks every structural invariant, reporting the first violation
    /// with the path of the offending field.
    pub fn validate(&self) -> Result<(), OntologyError> {
        let mut ids = HashSet::new();
        let mut seen_aspects = HashSet::new();
        for (ai, aspect) in self.aspects.iter().enumerate() {
            let ap = format!("aspects[{ai}]");
            check_node(&mut ids, &aspect.id, &aspect.name, aspect.score, &ap)?;
            if !seen_aspects.insert(normalize_key(&aspect.name)) {
                return Err(violation(format!("{ap}.name"), "duplicate aspect name"));
            }
            let mut seen_dims = HashSet::new();
            for (di, dim) in aspect.dimensions.iter().enumerate() {
                let dp = format!("{ap}.dimensions[{di}]");
                check_node(&mut ids, &dim.id, &dim.name, dim.score, &dp)?;
                if !seen_dims.insert(normalize_key(&dim.name)) {
                    return Err(violation(format!("{dp}.name"), "duplicate dimension name"));
                }
                let mut seen_keys = HashSet::new();
                for (si, slot) in dim.slots.iter().enumerate() {
                    let sp = format!("{dp}.slots[{si}]");
                    check_node(&mut ids, &slot.id, &slot.key, slot.score, &sp)?;
                    if slot.key != normalize_key(&slot.key) {
                        return Err(violation(format!("{sp}.key"), "key is not normalized"));
                    }
                    if !seen_keys.insert(slot.key.as_str()) {
                        return Err(violation(format!("{sp}.key"), "duplicate slot key"));
                    }
                    if classify_question(&slot.question) != Some(slot.question_form) {
                        return Err(violation(
                            format!("{sp}.question"),
                            "question does not match question_form",
                        ));
                    }
                    if (aspect.pruned || dim.pruned) && slot.state == SlotState::Unexplored {
                        return Err(violation(
                            format!("{sp}.state"),
                            "unexplored slot under a pruned node",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn prune_slots(slots: &mut [Slot]) -> bool {
    let mut changed = false;
    for slot in slots
        .iter_mut()
        .filter(|s| s.state == SlotState::Unexplored)
    {
        slot.state = SlotState::Pruned;
        changed = true;
    }
    changed
}

pub(crate) fn clamp_unit(score: f64) -> f64 {
    if score.is_nan() {
        0.0
    } else {
        score.clamp(0.0, 1.0)
    }
}

fn violation(path: String, message: &str) -> OntologyError {
    OntologyError::SchemaViolation {
        path,
        message: message.to_string(),
    }
}

fn check_node(
    ids: &mut HashSet<String>,
    id: &NodeId,
    label: &str,
    score: f64,
    path: &str,
) -> Result<(), OntologyError> {
    if id.0.is_empty() {
        return Err(violation(format!("{path}.id"), "empty id"));
    }
    if !ids.insert(id.0.clone()) {
        return Err(violation(format!("{path}.id"), "duplicate node id"));
    }
    if label.trim().is_empty() {
        return Err(violation(path.to_string(), "empty name or key"));
    }
    if !(0.0..=1.0).contains(&score) {
        return Err(violation(format!("{path}.score"), "score outside [0, 1]"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn web() -> ExperienceOntology {
        ExperienceOntology::with_aspects("web", &["Interaction", "Content", "Style"]).unwrap()
    }

    fn aspect_id(onto: &ExperienceOntology, name: &str) -> NodeId {
        onto.find_aspect_by_name(name).unwrap().id.clone()
    }

    #[test]
    fn adds_dimension_under_aspect() {
        let mut onto = web();
        let interaction = aspect_id(&onto, "Interaction");
        let v = onto.version;
        let search = onto.add_dimension(&interaction, "Search").unwrap();
        assert_eq!(onto.version, v + 1);
        let dim = onto.dimension(&search).unwrap();
        assert_eq!(dim.name, "Search");
        assert!(dim.slots.is_empty());
        assert_eq!(dim.score, 0.0);
        assert!(!dim.pruned);
        assert_eq!(onto.aspect(&interaction).unwrap().dimensions.len(), 1);
    }

    #[test]
    fn duplicate_dimension_is_rejected() {
        let mut onto = web();
        let interaction = aspect_id(&onto, "Interaction");
        onto.add_dimension(&interaction, "Search").unwrap();
        assert!(matches!(
            onto.add_dimension(&interaction, "  search "),
            Err(OntologyError::DuplicateName { .. })
        ));
    }

    #[test]
    fn unknown_parent_is_rejected() {
        let mut onto = web();
        assert_eq!(
            onto.add_dimension(&NodeId::from("nope"), "X"),
            Err(OntologyError::UnknownNode("nope".into()))
        );
        assert!(matches!(
            onto.add_slot(
                &NodeId::from("nope"),
                "k",
                "Do you need k?",
                QuestionForm::Binary
            ),
            Err(OntologyError::UnknownNode(_))
        ));
    }

    #[test]
    fn slots_enforce_key_uniqueness_and_form() {
        let mut onto = web();
        let interaction = aspect_id(&onto, "Interaction");
        let search = onto.add_dimension(&interaction, "Search").unwrap();
        let id = onto
            .add_slot(
                &search,
                "Filtering  Options",
                "Do you need filtering options?",
                QuestionForm::Binary,
            )
            .unwrap();
        assert_eq!(onto.slot(&id).unwrap().key, "filtering options");
        assert_eq!(onto.slot(&id).unwrap().state, SlotState::Unexplored);
        assert!(matches!(
            onto.add_slot(
                &search,
                "filtering options",
                "Do you need filtering options?",
                QuestionForm::Binary
            ),
            Err(OntologyError::DuplicateKey { .. })
        ));
        let open = onto
            .add_slot(
                &search,
                "sorting rules",
                "What sorting rules should apply?",
                QuestionForm::OpenEnded,
            )
            .unwrap();
        assert_eq!(
            onto.slot(&open).unwrap().question_form,
            QuestionForm::OpenEnded
        );
        assert!(matches!(
            onto.add_slot(&search, "paging", "What paging?", QuestionForm::Binary),
            Err(OntologyError::QuestionFormMismatch { .. })
        ));
        assert!(matches!(
            onto.add_slot(
                &search,
                "paging",
                "Do you need paging?",
                QuestionForm::OpenEnded
            ),
            Err(OntologyError::QuestionFormMismatch { .. })
        ));
    }

    fn style_with_slots() -> (ExperienceOntology, NodeId, NodeId, Vec<NodeId>) {
        let mut onto = web();
        let style = aspect_id(&onto, "Style");
        let theme = onto.add_dimension(&style, "Theme").unwrap();
        let slots = ["colors", "fonts", "dark mode"]
            .iter()
            .map(|k| {
                onto.add_slot(&theme, k, &binary_question_for(k), QuestionForm::Binary)
                    .unwrap()
            })
            .collect();
        (onto, style, theme, slots)
    }

    #[test]
    fn aspect_prune_cascades_to_unexplored_slots() {
        let (mut onto, style, _, slots) = style_with_slots();
        assert!(onto.prune_aspect(&style).unwrap());
        for s in &slots {
            assert_eq!(onto.slot(s).unwrap().state, SlotState::Pruned);
        }
        assert!(onto.eligible_slots().is_empty());
    }

    #[test]
    fn prune_preserves_terminal_states() {
        let (mut onto, style, _, slots) = style_with_slots();
        onto.confirm_slot(&slots[0]).unwrap();
        onto.prune_aspect(&style).unwrap();
        assert_eq!(onto.slot(&slots[0]).unwrap().state, SlotState::Confirmed);
        assert_eq!(onto.slot(&slots[1]).unwrap().state, SlotState::Pruned);
    }

    #[test]
    fn prune_is_idempotent() {
        let (mut onto, style, _, _) = style_with_slots();
        onto.prune_aspect(&style).unwrap();
        let once = onto.to_json();
        let v = onto.version;
        assert!(!onto.prune_aspect(&style).unwrap());
        assert_eq!(onto.version, v);
        assert_eq!(onto.to_json(), once);
    }

    #[test]
    fn dimension_prune() {
        let (mut onto, _, theme, slots) = style_with_slots();
        assert!(onto.prune_dimension(&theme).unwrap());
        assert!(slots
            .iter()
            .all(|s| onto.slot(s).unwrap().state == SlotState::Pruned));

        let interaction = aspect_id(&onto, "Interaction");
        let empty = onto.add_dimension(&interaction, "Login").unwrap();
        assert!(onto.prune_dimension(&empty).unwrap());
        assert!(onto.dimension(&empty).unwrap().pruned);
        assert_eq!(
            onto.prune_dimension(&NodeId::from("missing")),
            Err(OntologyError::UnknownNode("missing".into()))
        );
    }

    #[test]
    fn terminal_states_never_change() {
        let (mut onto, _, _, slots) = style_with_slots();
        onto.reject_slot(&slots[0]).unwrap();
        assert!(matches!(
            onto.confirm_slot(&slots[0]),
            Err(OntologyError::InvalidTransition { .. })
        ));
    }

    #[test]
    fn eligible_order_follows_scores_then_insertion() {
        let (mut onto, style, _, slots) = style_with_slots();
        assert_eq!(onto.eligible_slots(), slots);

        let interaction = aspect_id(&onto, "Interaction");
        let search = onto.add_dimension(&interaction, "Search").unwrap();
        let filter = onto
            .add_slot(
                &search,
                "filters",
                "Do you need filters?",
                QuestionForm::Binary,
            )
            .unwrap();
        // tree order puts Interaction first
        assert_eq!(onto.eligible_slots()[0], filter);
        onto.set_score(&style, 0.9).unwrap();
        onto.set_score(&interaction, 0.2).unwrap();
        let order = onto.eligible_slots();
        assert_eq!(&order[..3], &slots[..]);
        assert_eq!(order[3], filter);
    }

    #[test]
    fn scores_are_clamped() {
        let (mut onto, style, _, _) = style_with_slots();
        assert_eq!(onto.set_score(&style, 1.7).unwrap(), 1.0);
        assert_eq!(onto.set_score(&style, -3.0).unwrap(), 0.0);
        assert_eq!(onto.set_score(&style, f64::NAN).unwrap(), 0.0);
    }

    #[test]
    fn json_round_trip_and_wire_names() {
        let (mut onto, _, _, slots) = style_with_slots();
        onto.confirm_slot(&slots[1]).unwrap();
        let doc = onto.to_json();
        assert!(doc.contains("\"question_form\": \"binary\""));
        assert!(doc.contains("\"state\": \"confirmed\""));
        assert_eq!(ExperienceOntology::from_json(&doc).unwrap(), onto);
    }

    #[test]
    fn schema_violations_carry_paths() {
        let (onto, _, _, _) = style_with_slots();
        let mut doc: serde_json::Value = serde_json::from_str(&onto.to_json()).unwrap();

        let mut dup = doc.clone();
        let key = dup["aspects"][2]["dimensions"][0]["slots"][0]["key"].clone();
        dup["aspects"][2]["dimensions"][0]["slots"][1]["key"] = key;
        dup["aspects"][2]["dimensions"][0]["slots"][1]["question"] = "Do you need colors?".into();
        match ExperienceOntology::from_json(&dup.to_string()) {
            Err(OntologyError::SchemaViolation { path, .. }) => {
                assert_eq!(path, "aspects[2].dimensions[0].slots[1].key")
            }
            other => panic!("unexpected {other:?}"),
        }

        // a slot placed directly under an aspect has no parent dimension
        doc["aspects"][0]["slots"] = serde_json::json!([]);
        match ExperienceOntology::from_json(&doc.to_string()) {
            Err(OntologyError::SchemaViolation { path, message }) => {
                assert!(path.starts_with("aspects[0]"), "{path}");
                assert!(message.contains("slots"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }

        let bad_state = onto.to_json().replace("\"unexplored\"", "\"maybe\"");
        match ExperienceOntology::from_json(&bad_state) {
            Err(OntologyError::SchemaViolation { path, .. }) => {
                assert_eq!(path, "aspects[2].dimensions[0].slots[0].state")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fresh_copy_resets_session_state() {
        let (mut onto, style, _, slots) = style_with_slots();
        onto.confirm_slot(&slots[0]).unwrap();
        onto.set_score(&style, 0.5).unwrap();
        onto.prune_aspect(&style).unwrap();
        let fresh = onto.fresh_copy();
        assert!(fresh
            .slots()
            .all(|s| s.state == SlotState::Unexplored && s.score == 0.0));
        assert!(fresh.aspects.iter().all(|a| !a.pruned && a.score == 0.0));
        assert_eq!(fresh.eligible_slots().len(), 3);
    }
}
