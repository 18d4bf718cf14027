//! Regenerates the bundled data pack under `data/`.
//!
//! A small rule-based responder stands in for the model, the simulated
//! stakeholder and the interviewer. Its replies are captured with a
//! recording backend so the scripts can later be replayed strictly.
//!
//! Run with `cargo run -p ontoagent --example build_fixtures`.

use std::path::{Path, PathBuf};

use ontoagent_core::backend::{GenerationError, GenerationRequest, RecordingBackend, ScriptEntry};
use ontoagent_core::gym::{
    run_benchmark, EpisodeConfig, GymAspect, ImplicitRequirement, Interviewer, Scenario,
};
use ontoagent_core::induction::{induce_ontology, RequirementDoc};
use ontoagent_core::TextBackend;
use serde_json::{json, Value};

const ASPECTS: &[&str] = &["Interaction", "Content", "Style"];

struct SlotSpec {
    aspect: &'static str,
    dimension: &'static str,
    /// Open question, or `None` for a binary slot.
    open: Option<&'static str>,
    /// Trigger phrase and the key a mention of it produces.
    triggers: &'static [(&'static str, &'static str)],
}

const CATALOG: &[SlotSpec] = &[
    SlotSpec {
        aspect: "Interaction",
        dimension: "Search",
        open: None,
        triggers: &[("search", "keyword search")],
    },
    SlotSpec {
        aspect: "Interaction",
        dimension: "Search",
        open: None,
        triggers: &[
            ("sorted by date", "sorting of results by date"),
            ("sort", "result sorting"),
        ],
    },
    SlotSpec {
        aspect: "Interaction",
        dimension: "Search",
        open: None,
        triggers: &[("filter", "result filtering")],
    },
    SlotSpec {
        aspect: "Interaction",
        dimension: "Login",
        open: None,
        triggers: &[("log in with email", "email login")],
    },
    SlotSpec {
        aspect: "Interaction",
        dimension: "Login",
        open: None,
        triggers: &[("reset their password", "password reset")],
    },
    SlotSpec {
        aspect: "Interaction",
        dimension: "Notification",
        open: None,
        triggers: &[("alert", "email alerts")],
    },
    SlotSpec {
        aspect: "Content",
        dimension: "Display",
        open: Some("What format should the generated reports use?"),
        triggers: &[("report", "report format")],
    },
    SlotSpec {
        aspect: "Content",
        dimension: "Display",
        open: None,
        triggers: &[("chart", "data charts")],
    },
    SlotSpec {
        aspect: "Content",
        dimension: "Export",
        open: None,
        triggers: &[
            ("pdf report export", "pdf report export"),
            ("export to pdf", "pdf export"),
        ],
    },
    SlotSpec {
        aspect: "Content",
        dimension: "Export",
        open: None,
        triggers: &[("csv", "csv download")],
    },
    SlotSpec {
        aspect: "Content",
        dimension: "Media",
        open: None,
        triggers: &[("photo", "image gallery")],
    },
    SlotSpec {
        aspect: "Style",
        dimension: "Theme",
        open: None,
        triggers: &[("dark", "dark mode")],
    },
    SlotSpec {
        aspect: "Style",
        dimension: "Theme",
        open: Some("Which brand colors should the site use?"),
        triggers: &[("colour", "brand colors"), ("color", "brand colors")],
    },
    SlotSpec {
        aspect: "Style",
        dimension: "Layout",
        open: None,
        triggers: &[("phone", "mobile layout"), ("mobile", "mobile layout")],
    },
    SlotSpec {
        aspect: "Style",
        dimension: "Layout",
        open: None,
        triggers: &[("menu", "navigation menu")],
    },
];

/// Words an analyst associates with each dimension.
const RELATED: &[(&str, &[&str])] = &[
    (
        "Login",
        &["account", "login", "log in", "sign in", "member"],
    ),
    ("Search", &["search", "find", "look up"]),
    ("Notification", &["alert", "notif", "remind"]),
    ("Display", &["report", "dashboard", "chart"]),
    ("Export", &["report", "download", "export"]),
    ("Media", &["photo", "image", "picture"]),
    ("Theme", &["night", "dark", "colour", "color"]),
    ("Layout", &["phone", "mobile", "tablet"]),
];

const CORPUS: &[(&str, &str, &str)] = &[
    ("fin-01", "finance website", "Investors search listed companies by name and sort the result list by market value. Each company page shows a price chart."),
    ("fin-02", "finance website", "Members log in with email to keep a watchlist. Analysts need a pdf report export of every watchlist."),
    ("fin-03", "finance website", "The dashboard sends an alert when a stock moves more than five percent. Users can filter alerts by sector."),
    ("fin-04", "finance website", "Quarterly results are sorted by date and users can download them as csv files. The site offers a dark theme for evening trading."),
    ("fin-05", "finance website", "Users can reset their password from the login page. Weekly reports summarise portfolio performance."),
    ("rec-01", "recipe website", "Home cooks search recipes by ingredient and filter them by diet. Every recipe has a photo of the dish."),
    ("rec-02", "recipe website", "Readers can export to pdf any recipe card for printing. The site should work well on a phone in the kitchen."),
    ("rec-03", "recipe website", "A top menu lists recipe categories. The pages use warm brand colours throughout."),
    ("rec-04", "recipe website", "Subscribers get an alert when a new seasonal recipe is published. Nutrition facts appear as a small chart."),
    ("rec-05", "recipe website", "Visitors browse a photo stream of reader submissions. The layout adapts to mobile screens."),
];

/// Spurious slot proposals the responder adds for some documents, to
/// exercise the rules that drop them.
fn noise(doc_id: &str) -> Vec<Value> {
    match doc_id {
        "rec-03" => vec![
            json!({"aspect": "Content", "dimension": "Media", "key": "video clips", "question": "Do you need video clips?", "form": "binary", "overlaps_with": null}),
            json!({"aspect": "Interaction", "dimension": "Payments", "key": "card payments", "question": "Do you need card payments?", "form": "binary", "overlaps_with": null}),
        ],
        _ => Vec::new(),
    }
}

struct PersonaSheet {
    scenario: Scenario,
    /// Keywords that identify each ground-truth requirement in a question.
    keywords: Vec<(&'static str, &'static [&'static str])>,
    /// Features of the initial description the stakeholder affirms.
    explicit: &'static [&'static str],
    /// Topics the stakeholder rejects as a whole.
    forbidden: &'static [&'static str],
}

fn req(id: &str, text: &str, aspect: GymAspect) -> ImplicitRequirement {
    ImplicitRequirement {
        req_id: id.to_string(),
        text: text.to_string(),
        aspect,
    }
}

fn personas() -> Vec<PersonaSheet> {
    use GymAspect::*;
    vec![
        PersonaSheet {
            scenario: Scenario {
                id: "stock-research".into(),
                app_type: "finance website".into(),
                initial_description: "I want a website that allows users to search stocks and generate reports. I mostly check it on my phone late at night.".into(),
                full_specification: "A stock research website. Users search stocks by ticker or name. Search results can be sorted by date and filtered by sector. Users generate reports in a format with summary tables, and reports can be exported to pdf. The site has a dark mode theme for night use and a mobile layout for phones. The site has no user accounts.".into(),
                implicit_requirements: vec![
                    req("r1", "sorting of search results by date", Interaction),
                    req("r2", "filtering of search results by sector", Interaction),
                    req("r3", "report format with summary tables", Content),
                    req("r4", "export of reports to pdf", Content),
                    req("r5", "dark mode theme for night use", Style),
                    req("r6", "mobile layout for phones", Style),
                ],
            },
            keywords: vec![
                ("r1", &["sort"]),
                ("r2", &["filter"]),
                ("r3", &["format"]),
                ("r4", &["pdf"]),
                ("r5", &["dark"]),
                ("r6", &["mobile"]),
            ],
            explicit: &["search", "report"],
            forbidden: &["login", "password", "account"],
        },
        PersonaSheet {
            scenario: Scenario {
                id: "recipe-blog".into(),
                app_type: "recipe website".into(),
                initial_description: "A blog where I post my recipes for home cooks.".into(),
                full_specification: "A recipe blog. Readers get email alerts for new recipes. Each recipe has an image gallery. The blog uses brand colors in warm tones and a navigation menu with recipe categories. Nothing is exported or printed.".into(),
                implicit_requirements: vec![
                    req("b1", "email alerts for new recipes", Interaction),
                    req("b2", "image gallery for each recipe", Content),
                    req("b3", "brand colors in warm tones", Style),
                    req("b4", "navigation menu with recipe categories", Style),
                ],
            },
            keywords: vec![
                ("b1", &["alert"]),
                ("b2", &["gallery", "photo", "image"]),
                ("b3", &["color"]),
                ("b4", &["menu"]),
            ],
            explicit: &["recipe", "blog"],
            forbidden: &["pdf"],
        },
        PersonaSheet {
            scenario: Scenario {
                id: "online-bookshop".into(),
                app_type: "online shop".into(),
                initial_description: "An online shop for second-hand books.".into(),
                full_specification: "An online shop for second-hand books. Customers use email login and can request a password reset by email. Keyword search over titles and authors finds books. Customers can get a csv download of their order history.".into(),
                implicit_requirements: vec![
                    req("k1", "email login for customers", Interaction),
                    req("k2", "password reset by email", Interaction),
                    req("k3", "keyword search over titles and authors", Interaction),
                    req("k4", "csv download of order history", Content),
                ],
            },
            keywords: vec![
                ("k1", &["login"]),
                ("k2", &["password"]),
                ("k3", &["keyword"]),
                ("k4", &["csv"]),
            ],
            explicit: &["book", "shop"],
            forbidden: &[],
        },
    ]
}

const FREEFORM_QUESTIONS: &[&str] = &[
    "What is the main goal of the website?",
    "Who are the main users of the site?",
    "Should users be able to sort the search results?",
    "What pages do you expect the site to have?",
    "How many visitors do you expect each day?",
    "Is there a launch deadline?",
    "What budget do you have for the project?",
    "Which existing sites do you admire?",
    "How will you measure success?",
    "Who will maintain the content?",
    "What languages should the site support?",
    "How often will the content change?",
    "What should happen when something goes wrong?",
    "Which browsers must the site support?",
    "How should the site be hosted?",
    "What legal constraints apply?",
    "Who approves new features?",
    "What is the most important feature?",
    "What would make you stop using the site?",
    "Is there anything else you want to tell me?",
];

fn between<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let from = text.find(start).map(|i| i + start.len()).unwrap_or(0);
    let rest = &text[from..];
    let to = if end.is_empty() {
        rest.len()
    } else {
        rest.find(end).unwrap_or(rest.len())
    };
    rest[..to].trim()
}

fn line_value<'a>(text: &'a str, label: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(label))
        .map(str::trim)
        .unwrap_or("")
}

fn related(dimension: &str, text: &str) -> bool {
    RELATED
        .iter()
        .find(|(d, _)| d.eq_ignore_ascii_case(dimension))
        .is_some_and(|(_, words)| words.iter().any(|w| text.contains(w)))
}

struct FixtureModel {
    personas: Vec<PersonaSheet>,
}

impl FixtureModel {
    fn triggered(body: &str) -> Vec<(&'static SlotSpec, &'static str)> {
        let lower = body.to_lowercase();
        CATALOG
            .iter()
            .filter_map(|slot_spec| {
                slot_spec.triggers
                    .iter()
                    .find(|(phrase, _)| lower.contains(phrase))
                    .map(|(_, key)| (slot_spec, *key))
            })
            .collect()
    }

    fn doc_id(body: &str) -> &'static str {
        CORPUS
            .iter()
            .find(|(_, _, b)| *b == body)
            .map(|(id, _, _)| *id)
            .unwrap_or("")
    }

    fn dimension_induction(&self, user: &str) -> Value {
        let tree: Value = serde_json::from_str(between(
            user,
            "Current Ontology Tree:\n",
            "\n\nNew Requirements Text:",
        ))
        .unwrap();
        let body = between(user, "New Requirements Text:\n", "\n\nTask:");
        let mut proposals = Vec::new();
        let mut seen = Vec::new();
        for (slot_spec, _) in Self::triggered(body) {
            if seen.contains(&(slot_spec.aspect, slot_spec.dimension)) {
                continue;
            }
            seen.push((slot_spec.aspect, slot_spec.dimension));
            let exists = tree.as_array().unwrap().iter().any(|a| {
                a["aspect"] == slot_spec.aspect
                    && a["dimensions"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .any(|d| d == slot_spec.dimension)
            });
            let evidence = slot_spec
                .triggers
                .iter()
                .find(|(p, _)| body.to_lowercase().contains(p))
                .unwrap()
                .0;
            proposals.push(json!({
                "aspect": slot_spec.aspect,
                "action": if exists { "merge" } else { "add" },
                "dimension": slot_spec.dimension,
                "evidence": evidence,
            }));
        }
        json!({ "proposals": proposals })
    }

    fn slot_induction(&self, user: &str) -> Value {
        let tree: Value = serde_json::from_str(between(
            user,
            "Two-level Ontology:\n",
            "\n\nNew Requirements Text:",
        ))
        .unwrap();
        let body = between(user, "New Requirements Text:\n", "\n\nTask:");
        let existing_keys = |aspect: &str, dimension: &str| -> Vec<String> {
            tree.as_array()
                .unwrap()
                .iter()
                .filter(|a| a["aspect"] == aspect)
                .flat_map(|a| a["dimensions"].as_array().unwrap().iter())
                .filter(|d| d["dimension"] == dimension)
                .flat_map(|d| d["slots"].as_array().unwrap().iter())
                .map(|k| k.as_str().unwrap().to_string())
                .collect()
        };
        let mut slots: Vec<Value> = Self::triggered(body)
            .into_iter()
            .map(|(slot_spec, key)| {
                let keys = existing_keys(slot_spec.aspect, slot_spec.dimension);
                let overlaps = slot_spec
                    .triggers
                    .iter()
                    .map(|(_, k)| *k)
                    .find(|k| *k != key && keys.iter().any(|e| e == k));
                let (question, form) = match slot_spec.open {
                    Some(q) => (q.to_string(), "open"),
                    None => (format!("Do you need {key}?"), "binary"),
                };
                json!({
                    "aspect": slot_spec.aspect,
                    "dimension": slot_spec.dimension,
                    "key": key,
                    "question": question,
                    "form": form,
                    "overlaps_with": overlaps,
                })
            })
            .collect();
        slots.extend(noise(Self::doc_id(body)));
        json!({ "slots": slots })
    }

    fn score_map(&self, user: &str) -> Value {
        let description =
            between(user, "Initial description:\n", "\n\nOntology nodes").to_lowercase();
        let nodes: Value =
            serde_json::from_str(between(user, "Ontology nodes (JSON):\n", "")).unwrap();
        let nodes = nodes.as_array().unwrap();
        let mut scores = serde_json::Map::new();
        let mut dim_scores = std::collections::HashMap::new();
        for n in nodes.iter().filter(|n| n["level"] == "dimension") {
            let s = if related(n["name"].as_str().unwrap(), &description) {
                0.9
            } else {
                0.3
            };
            dim_scores.insert(
                n["id"].as_str().unwrap().to_string(),
                (n["parent"].as_str().unwrap().to_string(), s),
            );
            scores.insert(n["id"].as_str().unwrap().to_string(), json!(s));
        }
        for n in nodes.iter().filter(|n| n["level"] == "slot") {
            let s = dim_scores[n["parent"].as_str().unwrap()].1;
            scores.insert(n["id"].as_str().unwrap().to_string(), json!(s));
        }
        for n in nodes.iter().filter(|n| n["level"] == "aspect") {
            let id = n["id"].as_str().unwrap();
            let s = dim_scores
                .values()
                .filter(|(p, _)| p == id)
                .map(|(_, s)| *s)
                .fold(0.3, f64::max);
            scores.insert(id.to_string(), json!(s));
        }
        json!({ "scores": scores })
    }

    fn rank_choice(&self, user: &str) -> Value {
        let history = between(user, "Dialogue so far:\n", "\n\nCandidate slots (JSON):");
        let said: String = history
            .lines()
            .filter_map(|l| l.strip_prefix("Stakeholder: "))
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        let candidates: Value =
            serde_json::from_str(between(user, "Candidate slots (JSON):\n", "")).unwrap();
        let mut best: Option<(&str, f64)> = None;
        let mut scores = serde_json::Map::new();
        for c in candidates.as_array().unwrap() {
            let id = c["id"].as_str().unwrap();
            let key = c["key"].as_str().unwrap();
            let hit = related(c["dimension"].as_str().unwrap(), &said)
                || key.split(' ').any(|w| said.contains(w));
            let s = if hit { 0.9 } else { 0.1 };
            scores.insert(id.to_string(), json!(s));
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((id, s));
            }
        }
        json!({ "choice": best.unwrap().0, "scores": scores })
    }

    fn slot_judgment(&self, user: &str) -> Value {
        let answer = line_value(user, "Answer:");
        let lower = answer.to_lowercase();
        let verdict = if lower.starts_with("yes") {
            "confirmed_slot"
        } else if lower.starts_with("no") && lower.contains("at all") {
            "rejected_dimension"
        } else {
            "rejected_slot"
        };
        json!({ "verdict": verdict, "excerpt": answer })
    }

    fn gate_judgment(&self, user: &str) -> Value {
        let answer = line_value(user, "Answer:");
        let verdict = if answer.to_lowercase().contains("nothing else") {
            "aspect_done"
        } else {
            "aspect_has_more"
        };
        json!({ "verdict": verdict, "excerpt": answer })
    }

    fn question(&self, user: &str) -> Value {
        if user.contains("Candidate question:") {
            return json!({ "question": line_value(user, "Candidate question:") });
        }
        let asked = between(user, "Dialogue so far:\n", "")
            .lines()
            .filter(|l| l.starts_with("Interviewer: "))
            .count();
        json!({ "question": FREEFORM_QUESTIONS[asked % FREEFORM_QUESTIONS.len()] })
    }

    fn answer(&self, system: &str, user: &str) -> String {
        let sheet = self
            .personas
            .iter()
            .find(|p| system.contains(&p.scenario.full_specification))
            .expect("persona for specification");
        let history = between(user, "Dialogue so far:\n", "\n\nInterviewer question:");
        let question = line_value(user, "Interviewer question:");
        let q = question.to_lowercase();
        let affirmed =
            |r: &ImplicitRequirement| history.contains(&format!("Yes. {}.", capitalize(&r.text)));

        if let Some(aspect) = q.strip_prefix("are there any other requirements related to ") {
            let aspect = aspect.trim_end_matches('?');
            let open = sheet
                .scenario
                .implicit_requirements
                .iter()
                .filter(|r| serde_json::to_value(r.aspect).unwrap() == aspect)
                .any(|r| !affirmed(r));
            return if open {
                format!("Yes, there is more about {aspect}.")
            } else {
                format!("Nothing else for {aspect}.")
            };
        }
        for (id, words) in &sheet.keywords {
            if words.iter().any(|w| q.contains(w)) {
                let r = sheet.scenario.requirement(id).unwrap();
                return format!("Yes. {}.", capitalize(&r.text));
            }
        }
        if sheet.forbidden.iter().any(|w| q.contains(w)) {
            return "No, I do not need anything like that at all.".into();
        }
        if sheet.explicit.iter().any(|w| q.contains(w)) {
            return "Yes, that is part of what I described.".into();
        }
        let yes_no = ["do ", "does ", "should ", "would ", "is ", "are ", "can "]
            .iter()
            .any(|p| q.starts_with(p));
        if yes_no {
            "No, I do not need that.".into()
        } else {
            "I have no preference on that.".into()
        }
    }
}

fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

impl TextBackend for FixtureModel {
    fn complete(&self, r: &GenerationRequest) -> Result<String, GenerationError> {
        let user = r.user_text.as_str();
        let reply = match r.schema_name.as_str() {
            "dimension_induction" => self.dimension_induction(user),
            "slot_induction" => self.slot_induction(user),
            "score_map" => self.score_map(user),
            "rank_choice" => self.rank_choice(user),
            "slot_judgment" => self.slot_judgment(user),
            "gate_judgment" => self.gate_judgment(user),
            "question" => self.question(user),
            "text" => return Ok(self.answer(&r.system_text, user)),
            other => return Err(GenerationError::UnknownSchema(other.to_string())),
        };
        Ok(reply.to_string())
    }
}

fn write(path: &Path, text: &str) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, text).unwrap();
    println!("wrote {}", path.display());
}

fn write_script(path: &Path, entries: &[ScriptEntry]) {
    write(
        path,
        &(serde_json::to_string_pretty(entries).unwrap() + "\n"),
    );
}

fn main() {
    let data = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"));
    let model = FixtureModel {
        personas: personas(),
    };

    write(
        &data.join("aspects.json"),
        &(serde_json::to_string_pretty(&json!({"domain_name": "web", "aspects": ASPECTS}))
            .unwrap()
            + "\n"),
    );
    let corpus: Vec<RequirementDoc> = CORPUS
        .iter()
        .map(|(id, app, body)| RequirementDoc {
            id: id.to_string(),
            app_type: app.to_string(),
            body: body.to_string(),
        })
        .collect();
    let corpus_text: String = corpus
        .iter()
        .map(|d| serde_json::to_string(d).unwrap() + "\n")
        .collect();
    write(&data.join("corpus.jsonl"), &corpus_text);

    let recorder = RecordingBackend::new(&model);
    let outcome = induce_ontology("web", &corpus, ASPECTS, &recorder).expect("induction");
    write(&data.join("ontology.json"), &outcome.ontology.to_json());
    write(&data.join("ontology.induction.jsonl"), &outcome.log_jsonl());
    write_script(&data.join("scripts/induction.json"), &recorder.entries());

    let scenarios: Vec<Scenario> = model.personas.iter().map(|p| p.scenario.clone()).collect();
    let scenario_text: String = scenarios
        .iter()
        .map(|s| serde_json::to_string(s).unwrap() + "\n")
        .collect();
    write(&data.join("scenarios.jsonl"), &scenario_text);

    let config = EpisodeConfig::default();
    for (name, interviewer) in [
        ("ontoagent", Interviewer::OntoAgent(&outcome.ontology)),
        ("freeform", Interviewer::Freeform),
    ] {
        let recorder = RecordingBackend::new(&model);
        let run = run_benchmark(&scenarios, interviewer, &config, &recorder).expect("benchmark");
        assert!(run.report.failures.is_empty(), "{:?}", run.report.failures);
        for r in &run.report.per_scenario {
            println!(
                "{name} {}: IRE {:.3} TKQR {:.3} hits {:?}",
                r.scenario_id, r.ire, r.tkqr, r.hits
            );
        }
        write_script(
            &data.join(format!("scripts/{name}.json")),
            &recorder.entries(),
        );
    }
}
