use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ontoagent_core::gym::{parse_scenarios, run_benchmark, Interviewer, MatcherKind};
use ontoagent_core::induction::{induce_ontology, parse_corpus, InductionError};
use ontoagent_core::interview::{SessionState, StepOutcome};
use ontoagent_core::{ExperienceOntology, TextBackend};
use serde::Deserialize;

use crate::api::{serve, AppState};
use crate::config::{AppConfig, BackendKind, ConfigError, DEFAULT_API_BASE};
use crate::store::{new_session_id, write_atomic, write_report_bundle, FileStore, SessionRecord};
use crate::views::requirements_view;

#[derive(Debug, Parser)]
#[command(
    name = "ontoagent",
    version,
    about = "Ontology-guided requirements interviews"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Generation backend: scripted or http.
    #[arg(
        long,
        global = true,
        env = "ONTOAGENT_BACKEND",
        default_value = "scripted"
    )]
    pub backend: BackendKind,
    #[arg(long, global = true, env = "ONTOAGENT_MODEL")]
    pub model: Option<String>,
    #[arg(long, global = true, env = "ONTOAGENT_API_BASE", default_value = DEFAULT_API_BASE)]
    pub api_base: String,
    #[arg(long, global = true, env = "ONTOAGENT_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    /// Script file for the scripted backend; repeatable, merged in order.
    #[arg(
        long = "script",
        global = true,
        env = "ONTOAGENT_SCRIPT",
        value_delimiter = ','
    )]
    pub scripts: Vec<PathBuf>,
    /// Budget of slot questions per interview.
    #[arg(long, global = true, default_value_t = 20)]
    pub max_turns: u32,
    /// Rejections under one aspect before the aspect gate question.
    #[arg(long, global = true, default_value_t = 3)]
    pub gate_threshold: u32,
    /// Hit matcher for evaluations: lexical or judge.
    #[arg(long, global = true, default_value = "lexical")]
    pub matcher: MatcherKind,
    #[arg(
        long,
        global = true,
        env = "ONTOAGENT_DATA_DIR",
        default_value = "ontoagent-data"
    )]
    pub data_dir: PathBuf,
}

impl GlobalArgs {
    pub fn to_config(&self) -> AppConfig {
        AppConfig {
            backend: self.backend,
            model: self.model.clone(),
            api_base: self.api_base.clone(),
            api_key: self.api_key.clone(),
            scripts: self.scripts.clone(),
            max_turns: self.max_turns,
            gate_threshold: self.gate_threshold,
            matcher: self.matcher,
            data_dir: self.data_dir.clone(),
            ..AppConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterviewerFlag {
    Ontoagent,
    Freeform,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Induce an ontology from a requirements corpus.
    Induce {
        /// JSONL corpus, one {id, app_type, body} per line.
        #[arg(long)]
        corpus: PathBuf,
        /// JSON list of aspect names, or {domain_name, aspects}.
        #[arg(long)]
        aspects: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Induction log path; defaults to the output with `.induction.jsonl`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        domain: Option<String>,
    },
    /// Run an interview on the terminal.
    Interview {
        #[arg(long, required_unless_present = "resume")]
        ontology: Option<PathBuf>,
        /// Continue a persisted session.
        #[arg(long, conflicts_with = "ontology")]
        resume: Option<String>,
        /// Initial description; read from standard input when omitted.
        #[arg(long)]
        description: Option<String>,
    },
    /// Run a benchmark over a scenario corpus and write a report.
    Evaluate {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        ontology: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = InterviewerFlag::Ontoagent)]
        interviewer: InterviewerFlag,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP session API.
    Serve {
        #[arg(long, env = "ONTOAGENT_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input or configuration; exit code 2.
    Input(String),
    /// Failure while running; exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Runs a parsed command line, returning the process exit code.
pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cli, input, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let config = cli.global.to_config();
    config.validate()?;
    match cli.command {
        Command::Induce {
            corpus,
            aspects,
            out: out_path,
            log,
            domain,
        } => induce(&config, &corpus, &aspects, &out_path, log, domain, out),
        Command::Interview {
            ontology,
            resume,
            description,
        } => interview(&config, ontology, resume, description, input, out),
        Command::Evaluate {
            scenarios,
            ontology,
            interviewer,
            out: out_path,
        } => evaluate(
            &config,
            &scenarios,
            ontology.as_deref(),
            interviewer,
            &out_path,
            out,
        ),
        Command::Serve { listen } => {
            let backend = config.build_backend()?;
            let store =
                FileStore::open(&config.data_dir).map_err(|e| CliError::Input(e.to_string()))?;
            let state = Arc::new(AppState::new(
                store,
                backend,
                AppConfig {
                    listen: listen.clone(),
                    ..config
                },
            ));
            let runtime_handle = tokio::runtime::Runtime::new().map_err(runtime)?;
            runtime_handle
                .block_on(serve(state, &listen))
                .map_err(runtime)
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AspectsFile {
    List(Vec<String>),
    Named {
        domain_name: String,
        aspects: Vec<String>,
    },
}

/// Reads an aspects file: either a JSON list of names or
/// `{"domain_name": ..., "aspects": [...]}`.
pub fn parse_aspects(text: &str) -> Result<(Option<String>, Vec<String>), String> {
    let parsed: AspectsFile = serde_json::from_str(text).map_err(|_| {
        "expected a JSON list of aspect names or {\"domain_name\", \"aspects\"}".to_string()
    })?;
    Ok(match parsed {
        AspectsFile::List(list) => (None, list),
        AspectsFile::Named {
            domain_name,
            aspects,
        } => (Some(domain_name), aspects),
    })
}

fn induce(
    config: &AppConfig,
    corpus_path: &Path,
    aspects_path: &Path,
    out_path: &Path,
    log_path: Option<PathBuf>,
    domain: Option<String>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let (file_domain, aspects) = parse_aspects(&read_input(aspects_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", aspects_path.display())))?;
    if aspects.is_empty() {
        return Err(CliError::Input(format!(
            "{}: {}",
            aspects_path.display(),
            InductionError::EmptyAspectList
        )));
    }
    let corpus = parse_corpus(&read_input(corpus_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", corpus_path.display())))?;
    let backend = config.build_backend()?;
    let domain = domain
        .or(file_domain)
        .unwrap_or_else(|| "default".to_string());
    let outcome =
        induce_ontology(&domain, &corpus, &aspects, backend.as_ref()).map_err(|e| match e {
            InductionError::Generation(_) => runtime(e),
            other => CliError::Input(other.to_string()),
        })?;
    let log_path = log_path.unwrap_or_else(|| out_path.with_extension("induction.jsonl"));
    write_atomic(out_path, &outcome.ontology.to_json()).map_err(runtime)?;
    write_atomic(&log_path, &outcome.log_jsonl()).map_err(runtime)?;
    let onto = &outcome.ontology;
    writeln!(
        out,
        "wrote {} ({} aspects, {} dimensions, {} slots) and {}",
        out_path.display(),
        onto.aspects.len(),
        onto.dimension_count(),
        onto.slot_count(),
        log_path.display()
    )
    .map_err(runtime)
}

fn load_ontology(path: &Path) -> Result<ExperienceOntology, CliError> {
    ExperienceOntology::from_json(&read_input(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn print_question(session: &SessionState, out: &mut dyn Write) -> std::io::Result<()> {
    if let Some(p) = session.pending() {
        let tag = match p.kind() {
            ontoagent_core::interview::QuestionKind::Slot => "slot",
            ontoagent_core::interview::QuestionKind::Gate => "gate",
        };
        writeln!(out, "[{tag}] {}", p.text())?;
        write!(out, "> ")?;
        out.flush()?;
    }
    Ok(())
}

fn read_answer(input: &mut dyn BufRead) -> Result<Option<String>, CliError> {
    let mut line = String::new();
    let n = input.read_line(&mut line).map_err(runtime)?;
    Ok((n > 0).then(|| line.trim().to_string()))
}

fn interview(
    config: &AppConfig,
    ontology: Option<PathBuf>,
    resume: Option<String>,
    description: Option<String>,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let store = FileStore::open(&config.data_dir).map_err(|e| CliError::Input(e.to_string()))?;
    let backend: Arc<dyn TextBackend> = config.build_backend()?;
    let mut record = match (resume, ontology) {
        (Some(id), _) => {
            let record = store.get_session(&id).map_err(runtime)?.ok_or_else(|| {
                CliError::Input(format!(
                    "no session `{id}` in {}",
                    config.data_dir.display()
                ))
            })?;
            if record.snapshot.is_finished() {
                return Err(CliError::Input(format!(
                    "session `{id}` is already finished"
                )));
            }
            writeln!(out, "resuming session {id}").map_err(runtime)?;
            record
        }
        (None, Some(path)) => {
            let onto = load_ontology(&path)?;
            let description = match description {
                Some(d) => d,
                None => {
                    writeln!(out, "Describe the software you want:").map_err(runtime)?;
                    write!(out, "> ").map_err(runtime)?;
                    out.flush().map_err(runtime)?;
                    read_answer(input)?
                        .ok_or_else(|| CliError::Input("no initial description given".into()))?
                }
            };
            let ontology_id = store.put_ontology(&onto).map_err(runtime)?;
            let (session, _) = SessionState::start(
                new_session_id(),
                &onto,
                &description,
                config.interview(),
                backend.as_ref(),
            )
            .map_err(|e| match e {
                ontoagent_core::interview::InterviewError::Generation(_) => runtime(e),
                other => CliError::Input(other.to_string()),
            })?;
            let mut record = SessionRecord::new(Some(ontology_id), session);
            store.save_session(&mut record).map_err(runtime)?;
            writeln!(out, "session {}", record.session_id).map_err(runtime)?;
            record
        }
        (None, None) => return Err(CliError::Input("--ontology or --resume is required".into())),
    };

    while !record.snapshot.is_finished() {
        print_question(&record.snapshot, out).map_err(runtime)?;
        let Some(answer) = read_answer(input)? else {
            writeln!(
                out,
                "\ninterrupted; resume with: ontoagent interview --resume {}",
                record.session_id
            )
            .map_err(runtime)?;
            return Ok(());
        };
        if answer.is_empty() {
            continue;
        }
        let mut next = record.snapshot.clone();
        if answer == ":stop" {
            next.stop();
        } else {
            match next.step(&answer, backend.as_ref()) {
                Ok(StepOutcome::Question(_)) | Ok(StepOutcome::Finished(_)) => {}
                Err(e) => {
                    return Err(CliError::Runtime(format!(
                        "{e}; the session was saved before this answer, resume with --resume {}",
                        record.session_id
                    )))
                }
            }
        }
        record.snapshot = next;
        store.save_session(&mut record).map_err(runtime)?;
    }

    let reason = record.snapshot.finish_reason().expect("finished");
    writeln!(out, "finished: {reason}").map_err(runtime)?;
    let view = requirements_view(&record.snapshot);
    writeln!(out, "elicited {} requirement(s):", view.count).map_err(runtime)?;
    for r in &view.requirements {
        writeln!(
            out,
            "  {}. {} / {} / {}: {}",
            r.turn, r.aspect, r.dimension, r.key, r.excerpt
        )
        .map_err(runtime)?;
    }
    if let Some(t) = &record.transcript_path {
        writeln!(out, "transcript: {}", store.root().join(t).display()).map_err(runtime)?;
    }
    Ok(())
}

fn evaluate(
    config: &AppConfig,
    scenarios_path: &Path,
    ontology_path: Option<&Path>,
    interviewer: InterviewerFlag,
    out_path: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let scenarios = parse_scenarios(&read_input(scenarios_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", scenarios_path.display())))?;
    let onto = match (interviewer, ontology_path) {
        (InterviewerFlag::Ontoagent, None) => {
            return Err(CliError::Input(
                "--ontology is required for the ontoagent interviewer".into(),
            ))
        }
        (InterviewerFlag::Ontoagent, Some(path)) => Some(load_ontology(path)?),
        (InterviewerFlag::Freeform, _) => None,
    };
    let backend = config.build_backend()?;
    let who = match &onto {
        Some(o) => Interviewer::OntoAgent(o),
        None => Interviewer::Freeform,
    };
    let run = run_benchmark(&scenarios, who, &config.episode(), backend.as_ref())
        .map_err(|e| CliError::Input(e.to_string()))?;
    write_report_bundle(out_path, &run.report.to_json(), &run.transcripts).map_err(runtime)?;

    let agg = &run.report.aggregate;
    writeln!(
        out,
        "{} episodes, {} failed: IRE {:.4}, TKQR {:.4}; report {}",
        agg.episodes,
        run.report.failures.len(),
        agg.ire,
        agg.tkqr,
        out_path.display()
    )
    .map_err(runtime)?;
    for f in &run.report.failures {
        writeln!(out, "  failed {}: {}", f.scenario_id, f.error).map_err(runtime)?;
    }
    if agg.episodes == 0 {
        return Err(CliError::Runtime("every scenario failed".into()));
    }
    Ok(())
}
