//! Structured reply schemas, one per model-backed operation.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ontology::QuestionForm;

/// A reply type that can be requested from a backend by schema name.
pub trait StructuredOutput: DeserializeOwned + Serialize {
    const SCHEMA: &'static str;

    /// Semantic checks beyond the JSON shape.
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimensionAction {
    Merge,
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionProposalReply {
    pub aspect: String,
    pub action: DimensionAction,
    pub dimension: String,
    #[serde(default)]
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionInductionReply {
    pub proposals: Vec<DimensionProposalReply>,
}

impl StructuredOutput for DimensionInductionReply {
    const SCHEMA: &'static str = "dimension_induction";

    fn check(&self) -> Result<(), String> {
        for (i, p) in self.proposals.iter().enumerate() {
            if p.aspect.trim().is_empty() || p.dimension.trim().is_empty() {
                return Err(format!(
                    "proposals[{i}]: aspect and dimension must be non-empty"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotProposalReply {
    pub aspect: String,
    pub dimension: String,
    pub key: String,
    pub question: String,
    pub form: QuestionForm,
    #[serde(default)]
    pub overlaps_with: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotInductionReply {
    pub slots: Vec<SlotProposalReply>,
}

impl StructuredOutput for SlotInductionReply {
    const SCHEMA: &'static str = "slot_induction";

    fn check(&self) -> Result<(), String> {
        for (i, s) in self.slots.iter().enumerate() {
            if s.key.trim().is_empty() {
                return Err(format!("slots[{i}].key must be non-empty"));
            }
            if !s.question.trim().ends_with('?') {
                return Err(format!("slots[{i}].question must be a question"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMapReply {
    pub scores: BTreeMap<String, f64>,
}

impl StructuredOutput for ScoreMapReply {
    const SCHEMA: &'static str = "score_map";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankChoiceReply {
    pub choice: String,
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
}

impl StructuredOutput for RankChoiceReply {
    const SCHEMA: &'static str = "rank_choice";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotVerdictReply {
    ConfirmedSlot,
    RejectedSlot,
    RejectedDimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotJudgmentReply {
    pub verdict: SlotVerdictReply,
    #[serde(default)]
    pub excerpt: String,
}

impl StructuredOutput for SlotJudgmentReply {
    const SCHEMA: &'static str = "slot_judgment";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateVerdictReply {
    AspectDone,
    AspectHasMore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateJudgmentReply {
    pub verdict: GateVerdictReply,
    #[serde(default)]
    pub excerpt: String,
}

impl StructuredOutput for GateJudgmentReply {
    const SCHEMA: &'static str = "gate_judgment";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionReply {
    pub question: String,
}

impl StructuredOutput for QuestionReply {
    const SCHEMA: &'static str = "question";

    fn check(&self) -> Result<(), String> {
        let q = self.question.trim();
        if q.len() < 2 || !q.ends_with('?') {
            return Err("question must be a non-empty sentence ending in '?'".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitJudgmentReply {
    pub matched: Vec<String>,
}

impl StructuredOutput for HitJudgmentReply {
    const SCHEMA: &'static str = "hit_judgment";
}

const REGISTERED: &[&str] = &[
    DimensionInductionReply::SCHEMA,
    SlotInductionReply::SCHEMA,
    ScoreMapReply::SCHEMA,
    RankChoiceReply::SCHEMA,
    SlotJudgmentReply::SCHEMA,
    GateJudgmentReply::SCHEMA,
    QuestionReply::SCHEMA,
    HitJudgmentReply::SCHEMA,
];

pub fn is_registered(schema_name: &str) -> bool {
    REGISTERED.contains(&schema_name)
}

fn check_as<T: StructuredOutput>(value: &Value) -> Result<(), String> {
    let typed: T = serde_json::from_value(value.clone())
        .map_err(|e| format!("reply does not match the `{}` schema: {e}", T::SCHEMA))?;
    typed.check()
}

/// Validates a value against a registered schema.
pub fn validate(schema_name: &str, value: &Value) -> Result<(), String> {
    match schema_name {
        DimensionInductionReply::SCHEMA => check_as::<DimensionInductionReply>(value),
        SlotInductionReply::SCHEMA => check_as::<SlotInductionReply>(value),
        ScoreMapReply::SCHEMA => check_as::<ScoreMapReply>(value),
        RankChoiceReply::SCHEMA => check_as::<RankChoiceReply>(value),
        SlotJudgmentReply::SCHEMA => check_as::<SlotJudgmentReply>(value),
        GateJudgmentReply::SCHEMA => check_as::<GateJudgmentReply>(value),
        QuestionReply::SCHEMA => check_as::<QuestionReply>(value),
        HitJudgmentReply::SCHEMA => check_as::<HitJudgmentReply>(value),
        other => Err(format!("unknown schema `{other}`")),
    }
}
