//! Evaluation harness: scenarios, a simulated stakeholder, hit judging,
//! elicitation metrics, and episode/benchmark runners.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::backend::schema::HitJudgmentReply;
use crate::backend::{
    generate, generate_structured, GenerationError, GenerationRequest, TextBackend,
};
use crate::interview::{
    freeform_step, render_turns, DialogueHistory, InterviewConfig, InterviewError, QuestionKind,
    SessionState, StepOutcome, TurnKind,
};
use crate::ontology::ExperienceOntology;
use crate::prompts::render_prompt;
use crate::text::{content_tokens, normalize_key, reference_coverage};

pub const DEFAULT_LEXICAL_THRESHOLD: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GymError {
    #[error("scenario `{0}` has no implicit requirements")]
    EmptyGroundTruth(String),
    #[error("line {line}: {message}")]
    ScenarioLine { line: usize, message: String },
    #[error("scenario corpus is empty")]
    NoScenarios,
    #[error("invalid scenario `{id}`: {message}")]
    InvalidScenario { id: String, message: String },
    #[error("invalid hit sequence: {0}")]
    InvalidHitSequence(String),
    #[error("`{0}` is not a ground-truth requirement of the scenario")]
    UnknownRequirement(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GymAspect {
    Interaction,
    Content,
    Style,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImplicitRequirement {
    pub req_id: String,
    pub text: String,
    pub aspect: GymAspect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub app_type: String,
    pub initial_description: String,
    pub full_specification: String,
    pub implicit_requirements: Vec<ImplicitRequirement>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), GymError> {
        let invalid = |message: &str| GymError::InvalidScenario {
            id: self.id.clone(),
            message: message.to_string(),
        };
        if self.id.trim().is_empty() {
            return Err(invalid("id is empty"));
        }
        if self.initial_description.trim().is_empty() {
            return Err(invalid("initial description is empty"));
        }
        if self.implicit_requirements.is_empty() {
            return Err(GymError::EmptyGroundTruth(self.id.clone()));
        }
        let mut seen = BTreeSet::new();
        for r in &self.implicit_requirements {
            if r.req_id.trim().is_empty() || r.text.trim().is_empty() {
                return Err(invalid("requirement with empty id or text"));
            }
            if !seen.insert(r.req_id.as_str()) {
                return Err(invalid(&format!("duplicate requirement id `{}`", r.req_id)));
            }
        }
        Ok(())
    }

    pub fn requirement(&self, req_id: &str) -> Option<&ImplicitRequirement> {
        self.implicit_requirements
            .iter()
            .find(|r| r.req_id == req_id)
    }
}

/// Parses a JSONL scenario corpus; blank lines are skipped.
pub fn parse_scenarios(jsonl: &str) -> Result<Vec<Scenario>, GymError> {
    let mut out = Vec::new();
    for (i, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let scenario: Scenario =
            serde_json::from_str(line).map_err(|e| GymError::ScenarioLine {
                line: i + 1,
                message: e.to_string(),
            })?;
        scenario.validate().map_err(|e| GymError::ScenarioLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(scenario);
    }
    if out.is_empty() {
        return Err(GymError::NoScenarios);
    }
    Ok(out)
}

/// Per-question hit indicators plus the size of the ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawHitSequence")]
pub struct HitSequence {
    hits: Vec<u8>,
    k: usize,
}

#[derive(Deserialize)]
struct RawHitSequence {
    hits: Vec<u8>,
    k: usize,
}

impl TryFrom<RawHitSequence> for HitSequence {
    type Error = GymError;

    fn try_from(raw: RawHitSequence) -> Result<Self, GymError> {
        HitSequence::new(raw.hits, raw.k)
    }
}

impl HitSequence {
    pub fn new(hits: Vec<u8>, k: usize) -> Result<Self, GymError> {
        if k == 0 {
            return Err(GymError::InvalidHitSequence("K must be positive".into()));
        }
        if hits.iter().any(|&h| h > 1) {
            return Err(GymError::InvalidHitSequence("hits must be 0 or 1".into()));
        }
        let total: usize = hits.iter().map(|&h| h as usize).sum();
        if total > k {
            return Err(GymError::InvalidHitSequence(format!(
                "{total} hits exceed K = {k}"
            )));
        }
        Ok(Self { hits, k })
    }

    pub fn from_flags(flags: &[bool], k: usize) -> Result<Self, GymError> {
        Self::new(flags.iter().map(|&f| f as u8).collect(), k)
    }

    pub fn hits(&self) -> &[u8] {
        &self.hits
    }

    pub fn n(&self) -> usize {
        self.hits.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TkqrScore {
    pub dcg: f64,
    pub idcg: f64,
    pub tkqr: f64,
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

/// Discounted gain of the hit sequence against an ideal run that hits on
/// each of its first `min(n, K)` questions. Zero questions score 0.
pub fn compute_tkqr(hits: &HitSequence) -> TkqrScore {
    let dcg: f64 = hits
        .hits
        .iter()
        .enumerate()
        .filter(|(_, &h)| h == 1)
        .map(|(i, _)| discount(i + 1))
        .fold(0.0, |a, b| a + b);
    // Folding from +0.0: an empty f64 `sum` is -0.0.
    let idcg: f64 = (1..=hits.n().min(hits.k))
        .map(discount)
        .fold(0.0, |a, b| a + b);
    let tkqr = if idcg > 0.0 {
        (dcg / idcg).clamp(0.0, 1.0)
    } else {
        0.0
    };
    TkqrScore { dcg, idcg, tkqr }
}

fn elicited_set<'a>(
    elicited: &'a [String],
    scenario: &Scenario,
) -> Result<BTreeSet<&'a str>, GymError> {
    let mut set = BTreeSet::new();
    for id in elicited {
        if scenario.requirement(id).is_none() {
            return Err(GymError::UnknownRequirement(id.clone()));
        }
        set.insert(id.as_str());
    }
    Ok(set)
}

/// Fraction of the scenario's implicit requirements that were elicited.
pub fn compute_ire(elicited: &[String], scenario: &Scenario) -> Result<f64, GymError> {
    if scenario.implicit_requirements.is_empty() {
        return Err(GymError::EmptyGroundTruth(scenario.id.clone()));
    }
    let set = elicited_set(elicited, scenario)?;
    Ok(set.len() as f64 / scenario.implicit_requirements.len() as f64)
}

/// Elicited and total counts per aspect; aspects absent from the ground
/// truth are omitted.
pub fn aspect_counts(
    elicited: &[String],
    scenario: &Scenario,
) -> Result<BTreeMap<GymAspect, (usize, usize)>, GymError> {
    let set = elicited_set(elicited, scenario)?;
    let mut counts: BTreeMap<GymAspect, (usize, usize)> = BTreeMap::new();
    for r in &scenario.implicit_requirements {
        let entry = counts.entry(r.aspect).or_default();
        entry.1 += 1;
        if set.contains(r.req_id.as_str()) {
            entry.0 += 1;
        }
    }
    Ok(counts)
}

pub fn compute_aspect_ire(
    elicited: &[String],
    scenario: &Scenario,
) -> Result<BTreeMap<GymAspect, f64>, GymError> {
    Ok(aspect_counts(elicited, scenario)?
        .into_iter()
        .map(|(aspect, (hit, total))| (aspect, hit as f64 / total as f64))
        .collect())
}

pub struct SimulatedStakeholder<'a> {
    pub scenario: &'a Scenario,
    pub backend: &'a dyn TextBackend,
    pub persona: String,
}

impl<'a> SimulatedStakeholder<'a> {
    pub fn new(scenario: &'a Scenario, backend: &'a dyn TextBackend) -> Self {
        Self {
            scenario,
            backend,
            persona: String::new(),
        }
    }

    /// Answers `question` from the scenario's full specification. `history`
    /// is the dialogue before the question.
    pub fn simulate_answer(
        &self,
        question: &str,
        history: &[crate::interview::Turn],
    ) -> Result<String, GenerationError> {
        if question.trim().is_empty() {
            return Err(GenerationError::EmptyPrompt);
        }
        let rendered = render_turns(history);
        let prompt = render_prompt(
            "simulate_answer",
            &[
                ("persona", &self.persona),
                ("specification", &self.scenario.full_specification),
                ("history", &rendered),
                ("question", question.trim()),
            ],
        )?;
        let response = generate(&GenerationRequest::text(prompt), self.backend)?;
        let answer = response.raw_text.trim().to_string();
        if answer.is_empty() {
            return Err(GenerationError::MalformedOutput {
                schema: crate::backend::PLAIN_TEXT.to_string(),
                attempts: 1,
                detail: "stakeholder answer is empty".into(),
            });
        }
        Ok(answer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatcherKind {
    Lexical,
    Judge,
}

impl std::str::FromStr for MatcherKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lexical" => Ok(MatcherKind::Lexical),
            "judge" => Ok(MatcherKind::Judge),
            other => Err(format!(
                "unknown matcher `{other}` (expected lexical or judge)"
            )),
        }
    }
}

#[derive(Clone, Copy)]
pub enum Matcher<'a> {
    /// Token coverage of the requirement text by the exchange.
    Lexical { threshold: f64 },
    /// Backend judgment, falling back to lexical matching on failure.
    Judge {
        backend: &'a dyn TextBackend,
        threshold: f64,
    },
}

const DENIAL_PHRASES: &[&str] = &[
    "do not need",
    "don't need",
    "dont need",
    "not needed",
    "no need",
    "nothing else",
    "not required",
];

/// True when the answer turns the question down.
pub fn is_denial(answer: &str) -> bool {
    let lower = normalize_key(answer);
    let first = lower
        .split(|c: char| !c.is_alphanumeric())
        .find(|w| !w.is_empty())
        .unwrap_or("");
    matches!(first, "no" | "nope") || DENIAL_PHRASES.iter().any(|p| lower.contains(p))
}

fn lexical_hits(
    question: &str,
    answer: &str,
    scenario: &Scenario,
    already_hit: &BTreeSet<String>,
    threshold: f64,
) -> Vec<String> {
    if is_denial(answer) {
        return Vec::new();
    }
    let exchange = content_tokens(&format!("{question} {answer}"));
    scenario
        .implicit_requirements
        .iter()
        .filter(|r| !already_hit.contains(&r.req_id))
        .filter(|r| reference_coverage(&exchange, &content_tokens(&r.text)) >= threshold)
        .map(|r| r.req_id.clone())
        .collect()
}

/// Ground-truth requirements newly evidenced by one question/answer
/// exchange, in scenario order. Ids in `already_hit` are never returned.
pub fn judge_hits(
    question: &str,
    answer: &str,
    scenario: &Scenario,
    already_hit: &BTreeSet<String>,
    matcher: Matcher<'_>,
) -> Vec<String> {
    match matcher {
        Matcher::Lexical { threshold } => {
            lexical_hits(question, answer, scenario, already_hit, threshold)
        }
        Matcher::Judge { backend, threshold } => {
            let open: Vec<_> = scenario
                .implicit_requirements
                .iter()
                .filter(|r| !already_hit.contains(&r.req_id))
                .collect();
            if open.is_empty() {
                return Vec::new();
            }
            let listing: Vec<_> = open
                .iter()
                .map(|r| json!({"id": r.req_id, "text": r.text}))
                .collect();
            let listing = serde_json::to_string_pretty(&listing).expect("requirements serialize");
            let judged = render_prompt(
                "judge_hits",
                &[
                    ("question", question.trim()),
                    ("answer", answer.trim()),
                    ("requirements", &listing),
                ],
            )
            .map_err(GenerationError::from)
            .and_then(|prompt| {
                generate_structured::<HitJudgmentReply>(prompt, backend, &|_| Ok(()))
            });
            match judged {
                Ok((reply, _)) => {
                    let matched: BTreeSet<&str> =
                        reply.matched.iter().map(String::as_str).collect();
                    open.iter()
                        .filter(|r| matched.contains(r.req_id.as_str()))
                        .map(|r| r.req_id.clone())
                        .collect()
                }
                Err(e) => {
                    tracing::warn!(error = %e, "hit judge failed; using lexical matching");
                    lexical_hits(question, answer, scenario, already_hit, threshold)
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
pub enum Interviewer<'a> {
    OntoAgent(&'a ExperienceOntology),
    Freeform,
}

impl Interviewer<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Interviewer::OntoAgent(_) => "ontoagent",
            Interviewer::Freeform => "freeform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub interview: InterviewConfig,
    pub matcher: MatcherKind,
    pub lexical_threshold: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            interview: InterviewConfig::default(),
            matcher: MatcherKind::Lexical,
            lexical_threshold: DEFAULT_LEXICAL_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario_id: String,
    pub interviewer: String,
    pub ire: f64,
    pub ire_by_aspect: BTreeMap<GymAspect, f64>,
    pub tkqr: f64,
    pub dcg: f64,
    pub idcg: f64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub hits: Vec<u8>,
    pub elicited: Vec<String>,
    pub finish_reason: String,
    /// Transcript file, relative to the report.
    pub transcript: String,
}

impl MetricsReport {
    pub fn hit_sequence(&self) -> Result<HitSequence, GymError> {
        HitSequence::new(self.hits.clone(), self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub index: usize,
    pub question_kind: String,
    pub question: String,
    pub answer: String,
    pub matched: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub scenario_id: String,
    pub interviewer: String,
    pub initial_description: String,
    pub finish_reason: String,
    pub elicited: Vec<String>,
    pub final_ontology_state_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeTranscript {
    pub exchanges: Vec<ExchangeRecord>,
    pub summary: EpisodeSummary,
}

impl EpisodeTranscript {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.exchanges {
            out.push_str(&serde_json::to_string(e).expect("exchange serializes"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary).expect("summary serializes"));
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub report: MetricsReport,
    #[serde(skip)]
    pub transcript: Option<EpisodeTranscript>,
}

/// An aborted episode, with the exchanges completed before the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("scenario `{scenario_id}` failed after {} exchanges: {message}", transcript_prefix.len())]
pub struct EpisodeError {
    pub scenario_id: String,
    pub message: String,
    pub transcript_prefix: Vec<ExchangeRecord>,
}

pub fn transcript_path(scenario_id: &str, interviewer: &str) -> String {
    format!(
        "transcripts/{}.{}.jsonl",
        crate::text::slugify(scenario_id),
        interviewer
    )
}

struct EpisodeRecorder<'s> {
    scenario: &'s Scenario,
    exchanges: Vec<ExchangeRecord>,
    hits: Vec<u8>,
    elicited: Vec<String>,
    already_hit: BTreeSet<String>,
}

impl<'s> EpisodeRecorder<'s> {
    fn record(&mut self, kind: &str, question: &str, answer: &str, matcher: Matcher<'_>) {
        let matched = judge_hits(question, answer, self.scenario, &self.already_hit, matcher);
        self.hits.push(u8::from(!matched.is_empty()));
        for id in &matched {
            self.already_hit.insert(id.clone());
            self.elicited.push(id.clone());
        }
        self.exchanges.push(ExchangeRecord {
            index: self.exchanges.len() + 1,
            question_kind: kind.to_string(),
            question: question.to_string(),
            answer: answer.to_string(),
            matched,
        });
    }

    fn fail(&self, message: impl std::fmt::Display) -> EpisodeError {
        EpisodeError {
            scenario_id: self.scenario.id.clone(),
            message: message.to_string(),
            transcript_prefix: self.exchanges.clone(),
        }
    }
}

/// Drives one interview against the simulated stakeholder until the
/// interviewer stops, judging hits after every exchange. The same backend
/// serves the interviewer, the stakeholder, and the judge.
pub fn run_episode(
    interviewer: Interviewer<'_>,
    scenario: &Scenario,
    config: &EpisodeConfig,
    backend: &dyn TextBackend,
) -> Result<EpisodeOutcome, EpisodeError> {
    let mut rec = EpisodeRecorder {
        scenario,
        exchanges: Vec::new(),
        hits: Vec::new(),
        elicited: Vec::new(),
        already_hit: BTreeSet::new(),
    };
    scenario.validate().map_err(|e| rec.fail(e))?;
    let stakeholder = SimulatedStakeholder::new(scenario, backend);
    let matcher = match config.matcher {
        MatcherKind::Lexical => Matcher::Lexical {
            threshold: config.lexical_threshold,
        },
        MatcherKind::Judge => Matcher::Judge {
            backend,
            threshold: config.lexical_threshold,
        },
    };

    let (finish_reason, digest) = match interviewer {
        Interviewer::OntoAgent(onto) => {
            let started = SessionState::start(
                scenario.id.clone(),
                onto,
                &scenario.initial_description,
                config.interview,
                backend,
            );
            let (mut session, mut outcome) = started.map_err(|e| rec.fail(e))?;
            loop {
                let pending = match outcome {
                    StepOutcome::Finished(reason) => {
                        break (reason.to_string(), Some(session.onto.digest()))
                    }
                    StepOutcome::Question(pending) => pending,
                };
                let turns = session.history.turns();
                let answer = stakeholder
                    .simulate_answer(pending.text(), &turns[..turns.len() - 1])
                    .map_err(|e| rec.fail(e))?;
                let kind = match pending.kind() {
                    QuestionKind::Slot => "slot",
                    QuestionKind::Gate => "gate",
                };
                rec.record(kind, pending.text(), &answer, matcher);
                outcome = session
                    .step(&answer, backend)
                    .map_err(|e: InterviewError| rec.fail(e))?;
            }
        }
        Interviewer::Freeform => {
            let mut history = DialogueHistory::new(&scenario.initial_description);
            for _ in 0..config.interview.max_turns {
                let question = freeform_step(&history, backend).map_err(|e| rec.fail(e))?;
                let answer = stakeholder
                    .simulate_answer(&question, history.turns())
                    .map_err(|e| rec.fail(e))?;
                rec.record("freeform", &question, &answer, matcher);
                history.push_question(&question, TurnKind::FreeQuestion);
                history.push_answer(&answer);
            }
            ("max_turns".to_string(), None)
        }
    };

    let k = scenario.implicit_requirements.len();
    let hits = HitSequence::new(rec.hits.clone(), k).map_err(|e| rec.fail(e))?;
    let score = compute_tkqr(&hits);
    let ire = compute_ire(&rec.elicited, scenario).map_err(|e| rec.fail(e))?;
    let ire_by_aspect = compute_aspect_ire(&rec.elicited, scenario).map_err(|e| rec.fail(e))?;
    let name = interviewer.name();
    let report = MetricsReport {
        scenario_id: scenario.id.clone(),
        interviewer: name.to_string(),
        ire,
        ire_by_aspect,
        tkqr: score.tkqr,
        dcg: score.dcg,
        idcg: score.idcg,
        n: hits.n(),
        k,
        hits: rec.hits.clone(),
        elicited: rec.elicited.clone(),
        finish_reason: finish_reason.clone(),
        transcript: transcript_path(&scenario.id, name),
    };
    let transcript = EpisodeTranscript {
        exchanges: rec.exchanges,
        summary: EpisodeSummary {
            scenario_id: scenario.id.clone(),
            interviewer: name.to_string(),
            initial_description: scenario.initial_description.clone(),
            finish_reason,
            elicited: rec.elicited,
            final_ontology_state_digest: digest,
        },
    };
    Ok(EpisodeOutcome {
        report,
        transcript: Some(transcript),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub ire: f64,
    pub ire_by_aspect: BTreeMap<GymAspect, f64>,
    pub tkqr: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioFailure {
    pub scenario_id: String,
    pub error: String,
    pub completed_exchanges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub per_scenario: Vec<MetricsReport>,
    pub aggregate: AggregateMetrics,
    pub failures: Vec<ScenarioFailure>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Unweighted means over the given reports. Each aspect mean only covers
/// the reports whose scenario has that aspect.
pub fn aggregate(reports: &[MetricsReport]) -> AggregateMetrics {
    let mean = |values: &[f64]| {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    };
    let mut by_aspect: BTreeMap<GymAspect, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (aspect, value) in &r.ire_by_aspect {
            by_aspect.entry(*aspect).or_default().push(*value);
        }
    }
    AggregateMetrics {
        ire: mean(&reports.iter().map(|r| r.ire).collect::<Vec<_>>()),
        ire_by_aspect: by_aspect.iter().map(|(a, v)| (*a, mean(v))).collect(),
        tkqr: mean(&reports.iter().map(|r| r.tkqr).collect::<Vec<_>>()),
        episodes: reports.len(),
    }
}

pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    /// Transcript path (as referenced by the report) and its JSONL text.
    pub transcripts: Vec<(String, String)>,
}

/// Runs every scenario in order. A failing scenario is recorded and the
/// batch carries on.
pub fn run_benchmark(
    scenarios: &[Scenario],
    interviewer: Interviewer<'_>,
    config: &EpisodeConfig,
    backend: &dyn TextBackend,
) -> Result<BenchmarkRun, GymError> {
    if scenarios.is_empty() {
        return Err(GymError::NoScenarios);
    }
    let mut per_scenario = Vec::new();
    let mut failures = Vec::new();
    let mut transcripts = Vec::new();
    for scenario in scenarios {
        match run_episode(interviewer, scenario, config, backend) {
            Ok(outcome) => {
                if let Some(t) = outcome.transcript {
                    transcripts.push((outcome.report.transcript.clone(), t.to_jsonl()));
                }
                per_scenario.push(outcome.report);
            }
            Err(e) => {
                tracing::warn!(scenario = %e.scenario_id, error = %e.message, "episode failed");
                failures.push(ScenarioFailure {
                    scenario_id: e.scenario_id.clone(),
                    error: e.message.clone(),
                    completed_exchanges: e.transcript_prefix.len(),
                });
            }
        }
    }
    let aggregate = aggregate(&per_scenario);
    Ok(BenchmarkRun {
        report: BenchmarkReport {
            per_scenario,
            aggregate,
            failures,
        },
        transcripts,
    })
}
