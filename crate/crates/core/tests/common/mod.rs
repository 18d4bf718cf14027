//! Generators, reference implementations and a rule-driven backend shared by
//! the property tests. The service acceptance suite compiles this file too.
#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ontoagent_core::backend::{FnBackend, GenerationRequest};
use ontoagent_core::interview::{
    FinishReason, InterviewConfig, PendingQuestion, SessionState, StepOutcome,
};
use ontoagent_core::{ExperienceOntology, NodeId, QuestionForm, SlotState, TextBackend};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

/// TKQR computed straight from its definition: the ideal list is built
/// explicitly and both sums use natural logs.
pub fn tkqr_oracle(hits: &[u8], k: usize) -> f64 {
    let n = hits.len();
    if n == 0 {
        return 0.0;
    }
    let gain = |rank: usize| std::f64::consts::LN_2 / (rank as f64 + 1.0).ln();
    let dcg_of = |list: &[u8]| -> f64 {
        let mut total = 0.0;
        for (i, &h) in list.iter().enumerate() {
            total += h as f64 * gain(i + 1);
        }
        total
    };
    let ideal: Vec<u8> = (0..n).map(|i| u8::from(i < k)).collect();
    dcg_of(hits) / dcg_of(&ideal)
}

/// Eligible slots by repeated selection of the best remaining candidate.
pub fn eligible_oracle(onto: &ExperienceOntology) -> Vec<NodeId> {
    let mut pool: Vec<([f64; 3], NodeId)> = Vec::new();
    for a in &onto.aspects {
        for d in &a.dimensions {
            for s in &d.slots {
                if !a.pruned && !d.pruned && s.state == SlotState::Unexplored {
                    pool.push(([a.score, d.score, s.score], s.id.clone()));
                }
            }
        }
    }
    let mut out = Vec::new();
    while !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            if pool[i].0 > pool[best].0 {
                best = i;
            }
        }
        out.push(pool.remove(best).1);
    }
    out
}

const SCORE_GRID: &[f64] = &[0.0, 0.2, 0.5, 0.5, 0.8, 1.0, 1.4];

fn hash_of(parts: &[&str]) -> u64 {
    let mut h = DefaultHasher::new();
    parts.hash(&mut h);
    h.finish()
}

/// Score the rule backend assigns to a node; a coarse grid so ties occur,
/// with one out-of-range value to exercise clamping.
pub fn initial_score(seed: u64, id: &str) -> f64 {
    SCORE_GRID[(hash_of(&[&seed.to_string(), "init", id]) % SCORE_GRID.len() as u64) as usize]
}

pub fn rerank_score(seed: u64, id: &str) -> f64 {
    SCORE_GRID[(hash_of(&[&seed.to_string(), "rerank", id]) % SCORE_GRID.len() as u64) as usize]
}

pub fn random_ontology(
    rng: &mut impl Rng,
    max_aspects: usize,
    max_dims: usize,
    max_slots: usize,
) -> ExperienceOntology {
    const WORDS: &[&str] = &[
        "search", "login", "report", "theme", "export", "menu", "alert", "chart", "color", "layout",
    ];
    let mut onto = ExperienceOntology::new("random");
    for a in 0..rng.gen_range(1..=max_aspects) {
        let aspect = onto.add_aspect(&format!("Aspect {a}")).unwrap();
        for d in 0..rng.gen_range(0..=max_dims) {
            let dim = onto
                .add_dimension(&aspect, &format!("{} {d}", WORDS.choose(rng).unwrap()))
                .unwrap();
            for s in 0..rng.gen_range(0..=max_slots) {
                let key = format!("{} option {s}", WORDS.choose(rng).unwrap());
                if rng.gen_bool(0.7) {
                    onto.add_slot(
                        &dim,
                        &key,
                        &format!("Do you need {key}?"),
                        QuestionForm::Binary,
                    )
                    .unwrap();
                } else {
                    onto.add_slot(
                        &dim,
                        &key,
                        &format!("What {key} do you want?"),
                        QuestionForm::OpenEnded,
                    )
                    .unwrap();
                }
            }
        }
    }
    onto
}

/// Random scores, slot states and pruning, all through the public API.
pub fn scramble(rng: &mut impl Rng, onto: &mut ExperienceOntology) {
    let ids: Vec<(NodeId, u8)> = onto
        .aspects
        .iter()
        .flat_map(|a| {
            std::iter::once((a.id.clone(), 0)).chain(a.dimensions.iter().flat_map(|d| {
                std::iter::once((d.id.clone(), 1)).chain(d.slots.iter().map(|s| (s.id.clone(), 2)))
            }))
        })
        .collect();
    for (id, level) in ids {
        onto.set_score(&id, *SCORE_GRID.choose(rng).unwrap())
            .unwrap();
        match (level, rng.gen_range(0..10)) {
            (2, 0..=1) => drop(onto.confirm_slot(&id)),
            (2, 2..=3) => drop(onto.reject_slot(&id)),
            (1, 0) => drop(onto.prune_dimension(&id)),
            (0, 0) => drop(onto.prune_aspect(&id)),
            _ => {}
        }
    }
}

fn section<'a>(text: &'a str, label: &str) -> &'a str {
    text.find(label)
        .map(|i| &text[i + label.len()..])
        .unwrap_or("")
}

fn line_after<'a>(text: &'a str, label: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(label))
        .unwrap_or("")
        .trim()
}

/// Interviewer-side backend driven by simple rules: deterministic scores,
/// a prompt-hashed re-rank choice, and verdicts read off the answer text.
pub fn rule_backend(seed: u64) -> impl TextBackend {
    FnBackend::new(move |r: &GenerationRequest| {
        let user = r.user_text.as_str();
        let reply = match r.schema_name.as_str() {
            "score_map" => {
                let nodes: Value =
                    serde_json::from_str(section(user, "Ontology nodes (JSON):\n")).unwrap();
                let scores: serde_json::Map<String, Value> = nodes
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|n| {
                        let id = n["id"].as_str().unwrap();
                        (id.to_string(), json!(initial_score(seed, id)))
                    })
                    .collect();
                json!({ "scores": scores })
            }
            "rank_choice" => {
                let list: Value =
                    serde_json::from_str(section(user, "Candidate slots (JSON):\n")).unwrap();
                let ids: Vec<&str> = list
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|c| c["id"].as_str().unwrap())
                    .collect();
                let pick = ids[(hash_of(&[&seed.to_string(), user]) % ids.len() as u64) as usize];
                let scores: serde_json::Map<String, Value> = ids
                    .iter()
                    .map(|id| (id.to_string(), json!(rerank_score(seed, id))))
                    .collect();
                json!({ "choice": pick, "scores": scores })
            }
            "slot_judgment" => {
                let answer = line_after(user, "Answer:");
                let verdict = if answer.starts_with("yes") {
                    "confirmed_slot"
                } else if answer.contains("at all") {
                    "rejected_dimension"
                } else {
                    "rejected_slot"
                };
                json!({ "verdict": verdict, "excerpt": answer })
            }
            "gate_judgment" => {
                let done = line_after(user, "Answer:").contains("nothing else");
                json!({ "verdict": if done { "aspect_done" } else { "aspect_has_more" } })
            }
            "question" => json!({ "question": line_after(user, "Candidate question:") }),
            other => panic!("unexpected schema {other}"),
        };
        Ok(reply.to_string())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reply {
    Yes,
    No,
    NotAtAll,
    NothingElse,
    HasMore,
}

impl Reply {
    pub fn text(self) -> &'static str {
        match self {
            Reply::Yes => "yes, we need that",
            Reply::No => "no",
            Reply::NotAtAll => "no, nothing like that at all",
            Reply::NothingElse => "nothing else",
            Reply::HasMore => "there is more",
        }
    }

    pub fn random_for(pending: &PendingQuestion, rng: &mut impl Rng) -> Self {
        match pending {
            PendingQuestion::Slot { .. } => match rng.gen_range(0..20) {
                0..=7 => Reply::Yes,
                8..=16 => Reply::No,
                _ => Reply::NotAtAll,
            },
            PendingQuestion::Gate { .. } => {
                if rng.gen_bool(0.5) {
                    Reply::NothingElse
                } else {
                    Reply::HasMore
                }
            }
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SessionStats {
    pub slot_questions: u32,
    pub gate_questions: u32,
    pub max_turns_finishes: u32,
}

/// Independent model of the selection loop, advanced in lockstep with a
/// real session.
struct Reference {
    onto: ExperienceOntology,
    turn: u32,
    count: u32,
    current: Option<NodeId>,
    config: InterviewConfig,
    seed: u64,
}

impl Reference {
    fn aspect_of(&self, slot: &NodeId) -> NodeId {
        self.onto.slot_parents(slot).unwrap().0.id.clone()
    }

    /// Checks the session's next move against what the model allows, then
    /// mirrors it.
    fn expect(
        &mut self,
        outcome: &StepOutcome,
        session: &SessionState,
        stats: &mut SessionStats,
    ) -> Result<(), String> {
        if self.turn >= self.config.max_turns {
            stats.max_turns_finishes += 1;
            return match outcome {
                StepOutcome::Finished(FinishReason::MaxTurns) => Ok(()),
                other => Err(format!("turn budget spent but got {other:?}")),
            };
        }
        if self.count >= self.config.gate_threshold {
            let current = self
                .current
                .clone()
                .ok_or("rejections without a current aspect")?;
            return match outcome {
                StepOutcome::Question(PendingQuestion::Gate { aspect_id, .. })
                    if *aspect_id == current =>
                {
                    stats.gate_questions += 1;
                    Ok(())
                }
                other => Err(format!(
                    "{} rejections under {current} but got {other:?}",
                    self.count
                )),
            };
        }
        let eligible = eligible_oracle(&self.onto);
        if eligible.is_empty() {
            return match outcome {
                StepOutcome::Finished(FinishReason::NoEligibleSlots) => Ok(()),
                other => Err(format!("nothing eligible but got {other:?}")),
            };
        }
        let window: Vec<NodeId> = eligible
            .into_iter()
            .take(self.config.rerank_window)
            .collect();
        let StepOutcome::Question(PendingQuestion::Slot { slot_id, .. }) = outcome else {
            return Err(format!("expected a slot question, got {outcome:?}"));
        };
        if !window.contains(slot_id) {
            return Err(format!(
                "{slot_id} is outside the re-rank window {window:?}"
            ));
        }
        let state = session.onto.slot(slot_id).map(|s| s.state);
        if state != Some(SlotState::Unexplored) {
            return Err(format!("{slot_id} asked in state {state:?}"));
        }
        if window.len() > 1 {
            for id in &window {
                self.onto
                    .set_score(id, rerank_score(self.seed, &id.0))
                    .unwrap();
            }
        }
        let aspect = self.aspect_of(slot_id);
        if self.current.as_ref() != Some(&aspect) {
            self.current = Some(aspect);
            self.count = 0;
        }
        stats.slot_questions += 1;
        Ok(())
    }

    fn answer(&mut self, pending: &PendingQuestion, reply: Reply) {
        match pending {
            PendingQuestion::Slot { slot_id, .. } => {
                match reply {
                    Reply::Yes => self.onto.confirm_slot(slot_id).unwrap(),
                    Reply::No => {
                        self.onto.reject_slot(slot_id).unwrap();
                        self.count += 1;
                    }
                    _ => {
                        self.onto.reject_slot(slot_id).unwrap();
                        self.count += 1;
                        let dim = self.onto.slot_parents(slot_id).unwrap().1.id.clone();
                        self.onto.prune_dimension(&dim).unwrap();
                    }
                }
                self.turn += 1;
            }
            PendingQuestion::Gate { aspect_id, .. } => {
                if reply == Reply::NothingElse {
                    self.onto.prune_aspect(aspect_id).unwrap();
                }
                self.count = 0;
            }
        }
    }

    fn compare(&self, session: &SessionState) -> Result<(), String> {
        if session.turn != self.turn {
            return Err(format!("turn {} but model has {}", session.turn, self.turn));
        }
        if session.aspect_no_need_count != self.count {
            return Err(format!(
                "counter {} but model has {}",
                session.aspect_no_need_count, self.count
            ));
        }
        if session.current_aspect != self.current {
            return Err(format!(
                "current aspect {:?} but model has {:?}",
                session.current_aspect, self.current
            ));
        }
        if session.onto != self.onto {
            return Err("ontology state diverged from the model".into());
        }
        Ok(())
    }
}

/// Runs one session with random answers, checking every move against the
/// reference model. Returns what happened, or the first violation.
pub fn check_random_session(
    onto: &ExperienceOntology,
    config: InterviewConfig,
    seed: u64,
    rng: &mut impl Rng,
) -> Result<SessionStats, String> {
    let backend = rule_backend(seed);
    let mut reference = Reference {
        onto: onto.fresh_copy(),
        turn: 0,
        count: 0,
        current: None,
        config,
        seed,
    };
    let ids: Vec<NodeId> = reference
        .onto
        .aspects
        .iter()
        .flat_map(|a| {
            std::iter::once(a.id.clone()).chain(a.dimensions.iter().flat_map(|d| {
                std::iter::once(d.id.clone()).chain(d.slots.iter().map(|s| s.id.clone()))
            }))
        })
        .collect();
    for id in ids {
        reference
            .onto
            .set_score(&id, initial_score(seed, &id.0))
            .unwrap();
    }

    let mut stats = SessionStats::default();
    let mut asked = std::collections::HashSet::new();
    let (mut session, mut outcome) = SessionState::start(
        format!("s{seed}"),
        onto,
        "a stakeholder wants a website",
        config,
        &backend,
    )
    .map_err(|e| e.to_string())?;
    loop {
        reference.expect(&outcome, &session, &mut stats)?;
        reference.compare(&session)?;
        if stats.slot_questions > config.max_turns {
            return Err("more slot questions than the turn budget".into());
        }
        let pending = match &outcome {
            StepOutcome::Finished(_) => break,
            StepOutcome::Question(p) => p.clone(),
        };
        if let PendingQuestion::Slot { slot_id, .. } = &pending {
            if !asked.insert(slot_id.clone()) {
                return Err(format!("{slot_id} asked twice"));
            }
        }
        let reply = Reply::random_for(&pending, rng);
        reference.answer(&pending, reply);
        outcome = session
            .step(reply.text(), &backend)
            .map_err(|e| e.to_string())?;
    }
    let gate_bound = config.max_turns.div_ceil(config.gate_threshold);
    if stats.gate_questions > gate_bound {
        return Err(format!(
            "{} gate questions exceed the bound {gate_bound}",
            stats.gate_questions
        ));
    }
    let confirmed = session
        .onto
        .slots()
        .filter(|s| s.state == SlotState::Confirmed)
        .count();
    if session.elicited_requirements().len() != confirmed {
        return Err("elicited list does not match confirmed slots".into());
    }
    Ok(stats)
}

/// A random scenario whose requirements reuse the ontology's vocabulary so
/// some of them can actually be elicited.
pub fn random_scenario(rng: &mut impl Rng, id: &str) -> ontoagent_core::gym::Scenario {
    use ontoagent_core::gym::{GymAspect, ImplicitRequirement, Scenario};
    const WORDS: &[&str] = &[
        "search", "login", "report", "theme", "export", "menu", "alert", "chart", "color", "layout",
    ];
    const ASPECTS: &[GymAspect] = &[GymAspect::Interaction, GymAspect::Content, GymAspect::Style];
    let implicit_requirements = (0..rng.gen_range(1..=8))
        .map(|i| ImplicitRequirement {
            req_id: format!("r{i}"),
            text: format!(
                "{} option {} for everyone",
                WORDS.choose(rng).unwrap(),
                rng.gen_range(0..5)
            ),
            aspect: *ASPECTS.choose(rng).unwrap(),
        })
        .collect();
    Scenario {
        id: id.to_string(),
        app_type: "website".into(),
        initial_description: "a stakeholder wants a website".into(),
        full_specification: format!("specification of {id}"),
        implicit_requirements,
    }
}

/// `rule_backend` plus a stakeholder that affirms questions sharing a key
/// with a requirement and otherwise answers by coin flip.
pub fn episode_backend(seed: u64, scenario: ontoagent_core::gym::Scenario) -> impl TextBackend {
    let interviewer = rule_backend(seed);
    FnBackend::new(move |r: &GenerationRequest| {
        if r.schema_name != "text" {
            return interviewer.complete(r);
        }
        let question = line_after(&r.user_text, "Interviewer question:").to_lowercase();
        let coin = hash_of(&[&seed.to_string(), &r.user_text]) % 3;
        if question.starts_with("are there any other requirements") {
            return Ok(if coin == 0 {
                "there is more"
            } else {
                "nothing else"
            }
            .to_string());
        }
        let hit = scenario
            .implicit_requirements
            .iter()
            .find(|req| question.contains(&req.text[..req.text.find(" for").unwrap()]));
        Ok(match (hit, coin) {
            (Some(req), _) => format!("yes, {}", req.text),
            (None, 0) => "yes, we need that".to_string(),
            (None, 1) => "no, nothing like that at all".to_string(),
            (None, _) => "no".to_string(),
        })
    })
}

#[derive(Debug, Default)]
pub struct InductionCheck {
    pub dimensions: usize,
    pub slots: usize,
    pub rekeys: usize,
    pub kept_on_overlap: usize,
}

fn node_paths(onto: &ExperienceOntology) -> Vec<(NodeId, Vec<NodeId>)> {
    let mut out = Vec::new();
    for a in &onto.aspects {
        out.push((a.id.clone(), vec![]));
        for d in &a.dimensions {
            out.push((d.id.clone(), vec![a.id.clone()]));
            for s in &d.slots {
                out.push((s.id.clone(), vec![a.id.clone(), d.id.clone()]));
            }
        }
    }
    out
}

/// Every node of `before` survives in `after` under the same parents, and a
/// surviving slot's key only ever gets shorter.
fn check_growth(
    before: &ExperienceOntology,
    after: &ExperienceOntology,
    doc: &str,
) -> Result<(), String> {
    let later = node_paths(after);
    for (id, parents) in node_paths(before) {
        if !later.iter().any(|(i, p)| *i == id && *p == parents) {
            return Err(format!("{doc}: node {id} lost or moved"));
        }
        if let (Some(old), Some(new)) = (before.slot(&id), after.slot(&id)) {
            if new.key.chars().count() > old.key.chars().count() {
                return Err(format!("{doc}: slot {id} rekeyed to a longer key"));
            }
        }
    }
    if after.version < before.version {
        return Err(format!("{doc}: version went backwards"));
    }
    Ok(())
}

/// Runs induction document by document, checking growth after every step,
/// then checks provenance and the conflict rule on the log, and finally
/// that the one-call pipeline reproduces the same bytes.
pub fn check_induction(
    corpus: &[ontoagent_core::induction::RequirementDoc],
    aspects: &[String],
    backend: &dyn TextBackend,
) -> Result<InductionCheck, String> {
    use ontoagent_core::induction::{
        induce_ontology, log_to_jsonl, Inducer, InductionAction, LoggedProposal,
    };

    let mut onto = ExperienceOntology::with_aspects("web", aspects).map_err(|e| e.to_string())?;
    let mut inducer = Inducer::new(backend);
    for doc in corpus {
        let before = onto.clone();
        inducer
            .induce_dimensions(doc, &mut onto)
            .map_err(|e| e.to_string())?;
        check_growth(&before, &onto, &doc.id)?;
        if onto.slot_count() != before.slot_count() {
            return Err(format!("{}: dimension pass changed slots", doc.id));
        }
    }
    for doc in corpus {
        let before = onto.clone();
        inducer
            .induce_slots(doc, &mut onto)
            .map_err(|e| e.to_string())?;
        check_growth(&before, &onto, &doc.id)?;
        if onto.dimension_count() != before.dimension_count() {
            return Err(format!("{}: slot pass changed dimensions", doc.id));
        }
    }
    let log = inducer.into_log();

    let mut check = InductionCheck {
        dimensions: onto.dimension_count(),
        slots: onto.slot_count(),
        ..Default::default()
    };
    for (id, parents) in node_paths(&onto) {
        if parents.is_empty() {
            continue;
        }
        let wanted = if parents.len() == 1 {
            InductionAction::AddDimension
        } else {
            InductionAction::AddSlot
        };
        let origin = log
            .iter()
            .find(|e| e.action == wanted && e.node_id.as_ref() == Some(&id));
        match origin {
            Some(e) if corpus.iter().any(|d| d.id == e.doc_id) => {}
            _ => return Err(format!("{id} has no originating log entry")),
        }
    }
    for entry in &log {
        if let Some(id) = &entry.node_id {
            if !node_paths(&onto).iter().any(|(i, _)| i == id) {
                return Err(format!("log names missing node {id}"));
            }
        }
        let LoggedProposal::Slot(p) = &entry.proposal else {
            continue;
        };
        let Some(other) = &p.overlaps_with else {
            continue;
        };
        let (new_len, old_len) = (p.key.chars().count(), other.chars().count());
        match entry.action {
            InductionAction::RekeySlot if new_len < old_len => check.rekeys += 1,
            InductionAction::KeepExistingSlot if new_len >= old_len => check.kept_on_overlap += 1,
            InductionAction::RekeySlot | InductionAction::KeepExistingSlot => {
                return Err(format!(
                    "conflict between `{other}` and `{}` kept the longer key",
                    p.key
                ))
            }
            _ => {}
        }
        if entry.action == InductionAction::RekeySlot {
            let kept = entry
                .node_id
                .as_ref()
                .and_then(|id| onto.slot(id))
                .map(|s| s.key.as_str());
            if kept.is_none_or(|k| k.chars().count() > new_len) {
                return Err(format!("rekeyed slot does not carry `{}`", p.key));
            }
        }
    }

    let again = induce_ontology("web", corpus, aspects, backend).map_err(|e| e.to_string())?;
    let twice = induce_ontology("web", corpus, aspects, backend).map_err(|e| e.to_string())?;
    if again.ontology != onto || log_to_jsonl(&again.log) != log_to_jsonl(&log) {
        return Err("pipeline result differs from the stepwise run".into());
    }
    if again.ontology.to_json() != twice.ontology.to_json()
        || again.log_jsonl() != twice.log_jsonl()
    {
        return Err("re-running induction changed the output bytes".into());
    }
    Ok(check)
}
