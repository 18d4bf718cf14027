//! Prompt catalog and placeholder rendering.
//!
//! Templates use `{name}` placeholders (lowercase letters and underscores).
//! Rendering is a single left-to-right pass, so bound values are never
//! re-scanned for placeholders.
//!
//! The two induction user prompts are kept word for word as the method
//! defines them. The interview, simulation, and judging prompts are
//! reconstructions written for this crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("missing binding for placeholder `{0}`")]
    MissingBinding(String),
}

struct Template {
    name: &'static str,
    system: &'static str,
    user: &'static str,
}

const DIMENSION_SYSTEM: &str = r#"You maintain the dimension layer of a requirements-elicitation ontology. The ontology has three levels: aspects (fixed by domain experts), dimensions (coherent functional categories under one aspect), and slots (clarifiable details under one dimension). You only work on dimensions.
Be conservative. Merge a requirement point into an existing dimension whenever their meanings overlap, including when the existing dimension only needs its scope widened. Add a new dimension only when no existing dimension is a suitable abstraction. Never invent aspects; use only aspect names present in the tree.
Return strict JSON and nothing else:
{"proposals": [{"aspect": "<existing aspect name>", "action": "merge" or "add", "dimension": "<existing dimension name when merging, new name when adding>", "evidence": "<short quote from the requirements text>"}]}
Return {"proposals": []} when the text contains no requirement points."#;

const DIMENSION_USER: &str = "Current Ontology Tree:
{ontology}

New Requirements Text:
{requirements}

Task:
1) Extract requirement points from the requirements text into the aspect level.

2) Integrate them into the current tree using the policy (merge > expand > add). Prefer merging into existing

3) Output the strict JSON specified in the system instructions.
";

const SLOT_SYSTEM: &str = r#"You maintain the slot layer of a requirements-elicitation ontology. A slot pairs a normalized, clarifiable requirement item (the key) with one candidate clarification question. Attach slots only to dimensions that already exist in the tree.
If the text describes a dimension in detail, write an open clarifying question (starting with "What", "Which" or "How") and set form to "open". If the text only mentions it, write exactly "Do you need [X]?" with X replaced by the key and set form to "binary".
Keep keys short and general. When a new key overlaps in meaning with a slot key already under the same dimension, put that existing key in overlaps_with; otherwise set overlaps_with to null.
Return strict JSON and nothing else:
{"slots": [{"aspect": "<aspect name>", "dimension": "<dimension name>", "key": "<key>", "question": "<question>", "form": "binary" or "open", "overlaps_with": null}]}"#;

const SLOT_USER: &str = "Two-level Ontology:
{current_ontology}

New Requirements Text:
{instruction}

Task:
1) Identify which dimensions the requirements text touches.

2) If the text describes in detail, please output a clarifying question; If only mentions, please output \"Do you need [X]?\" question.

3) Return the strict JSON specified in the system instructions.

4) Omit topics the instruction does not mention.
";

const SCORE_SYSTEM: &str = r#"You are an experienced requirements analyst preparing an interview. Estimate how relevant each ontology node is to the stakeholder's initial description, as a priority score between 0 and 1, where 1 means clearly central to what the stakeholder wants. Score aspects, dimensions and slots.
Return strict JSON and nothing else:
{"scores": {"<node id>": <number>}}
Nodes you leave out count as 0."#;

const SCORE_USER: &str = "Initial description:
{description}

Ontology nodes (JSON):
{nodes}
";

const RERANK_SYSTEM: &str = r#"You are conducting a requirements elicitation interview. Given the dialogue so far, re-score the candidate slots by how likely asking about each one next uncovers a requirement the stakeholder has not stated yet, and choose the single best candidate. Prefer items that the stakeholder's latest answers point to.
Return strict JSON and nothing else:
{"choice": "<candidate id>", "scores": {"<candidate id>": <number between 0 and 1>}}"#;

const RERANK_USER: &str = "Dialogue so far:
{history}

Candidate slots (JSON):
{candidates}
";

const PARSE_SLOT_SYSTEM: &str = r#"You interpret a stakeholder's answer to one interview question about a requirement slot. Choose one verdict:
- "confirmed_slot": the stakeholder wants the item or gives substantive content about it, even if partial or hedged.
- "rejected_slot": the stakeholder explicitly declines this specific item.
- "rejected_dimension": the stakeholder explicitly says the whole dimension is unnecessary.
Return strict JSON and nothing else:
{"verdict": "confirmed_slot" or "rejected_slot" or "rejected_dimension", "excerpt": "<part of the answer supporting the verdict>"}"#;

const PARSE_SLOT_USER: &str = "Aspect: {aspect}
Dimension: {dimension}
Slot: {slot}
Question: {question}
Answer: {answer}
";

const PARSE_GATE_SYSTEM: &str = r#"You interpret a stakeholder's answer to a question asking whether further requirements remain under one aspect of the system. Choose one verdict:
- "aspect_done": the stakeholder explicitly indicates there are no further concerns under this aspect.
- "aspect_has_more": anything else.
Return strict JSON and nothing else:
{"verdict": "aspect_done" or "aspect_has_more", "excerpt": "<part of the answer supporting the verdict>"}"#;

const PARSE_GATE_USER: &str = "Aspect: {aspect}
Question: {question}
Answer: {answer}
";

const QUESTION_SYSTEM: &str = r#"You are an experienced requirements analyst interviewing a stakeholder. Write the next interview question about the given slot. Ask exactly one natural question grounded in the slot and in what the stakeholder has already said, and nothing else. For a binary slot ask a yes/no question; for an open slot ask a what, which or how question.
Return strict JSON and nothing else:
{"question": "<question>"}"#;

const QUESTION_USER: &str = "Dialogue so far:
{history}

Aspect: {aspect}
Dimension: {dimension}
Slot key: {key}
Slot form: {form}
Candidate question: {question}
";

const FREEFORM_SYSTEM: &str = r#"You are a requirements analyst interviewing a stakeholder about the software they want built. Based on the dialogue so far, directly ask one clarification or probing question.
Return strict JSON and nothing else:
{"question": "<question>"}"#;

const FREEFORM_USER: &str = "Dialogue so far:
{history}
";

const PERSONA_SYSTEM: &str = "You play a stakeholder who wants the software described in the specification below. Answer the interviewer's latest question truthfully and only from the specification.
If the question asks about something the specification contains, confirm it and add one sentence of detail taken from the specification. If it asks about something the specification does not contain, say clearly that you do not need it. If it asks whether more requirements remain under some area and the specification has nothing further there, say there is nothing else. Never volunteer requirements that were not asked about.
{persona}

Specification:
{specification}";

const PERSONA_USER: &str = "Dialogue so far:
{history}

Interviewer question: {question}

Your answer:";

const JUDGE_SYSTEM: &str = r#"You evaluate a requirements elicitation interview. Given one question and answer exchange and a list of implicit requirements not yet elicited, list the ids of the requirements this exchange clearly elicits.
Return strict JSON and nothing else:
{"matched": ["<requirement id>"]}"#;

const JUDGE_USER: &str = "Question: {question}
Answer: {answer}

Unelicited requirements (JSON):
{requirements}
";

const CATALOG: &[Template] = &[
    Template {
        name: "dimension_induction",
        system: DIMENSION_SYSTEM,
        user: DIMENSION_USER,
    },
    Template {
        name: "slot_induction",
        system: SLOT_SYSTEM,
        user: SLOT_USER,
    },
    Template {
        name: "score_onto",
        system: SCORE_SYSTEM,
        user: SCORE_USER,
    },
    Template {
        name: "rerank_onto",
        system: RERANK_SYSTEM,
        user: RERANK_USER,
    },
    Template {
        name: "parse_user_slot",
        system: PARSE_SLOT_SYSTEM,
        user: PARSE_SLOT_USER,
    },
    Template {
        name: "parse_user_gate",
        system: PARSE_GATE_SYSTEM,
        user: PARSE_GATE_USER,
    },
    Template {
        name: "question_gen",
        system: QUESTION_SYSTEM,
        user: QUESTION_USER,
    },
    Template {
        name: "freeform_question",
        system: FREEFORM_SYSTEM,
        user: FREEFORM_USER,
    },
    Template {
        name: "simulate_answer",
        system: PERSONA_SYSTEM,
        user: PERSONA_USER,
    },
    Template {
        name: "judge_hits",
        system: JUDGE_SYSTEM,
        user: JUDGE_USER,
    },
];

pub fn template_names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|t| t.name)
}

/// Placeholder names used by a template, in order of first appearance.
pub fn placeholders(template_name: &str) -> Result<Vec<String>, PromptError> {
    let t = lookup(template_name)?;
    let mut names = Vec::new();
    for text in [t.system, t.user] {
        let mut rest = text;
        while let Some((name, after)) = next_placeholder(rest) {
            if !names.iter().any(|n| n == name.1) {
                names.push(name.1.to_string());
            }
            rest = after;
        }
    }
    Ok(names)
}

fn lookup(template_name: &str) -> Result<&'static Template, PromptError> {
    CATALOG
        .iter()
        .find(|t| t.name == template_name)
        .ok_or_else(|| PromptError::UnknownTemplate(template_name.to_string()))
}

/// Finds the next `{name}` placeholder: returns (prefix before it, name) and
/// the remainder after it.
fn next_placeholder(text: &str) -> Option<((&str, &str), &str)> {
    let mut search_from = 0;
    while let Some(offset) = text[search_from..].find('{') {
        let open = search_from + offset;
        let after_open = &text[open + 1..];
        let len = after_open
            .bytes()
            .take_while(|b| b.is_ascii_lowercase() || *b == b'_')
            .count();
        if len > 0 && after_open.as_bytes().get(len) == Some(&b'}') {
            let name = &after_open[..len];
            return Some(((&text[..open], name), &after_open[len + 1..]));
        }
        search_from = open + 1;
    }
    None
}

fn substitute(text: &str, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(((prefix, name), after)) = next_placeholder(rest) {
        let value = bindings
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::MissingBinding(name.to_string()))?;
        out.push_str(prefix);
        out.push_str(value);
        rest = after;
    }
    out.push_str(rest);
    Ok(out)
}

/// Renders a catalog template with the given bindings.
pub fn render_prompt(
    template_name: &str,
    bindings: &[(&str, &str)],
) -> Result<RenderedPrompt, PromptError> {
    let t = lookup(template_name)?;
    Ok(RenderedPrompt {
        system: substitute(t.system, bindings)?,
        user: substitute(t.user, bindings)?,
    })
}
