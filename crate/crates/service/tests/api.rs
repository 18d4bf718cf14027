use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ontoagent::{router, AppConfig, AppState, FileStore};
use ontoagent_core::backend::{FnBackend, GenerationRequest, ScriptedBackend};
use ontoagent_core::TextBackend;
use proptest::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

fn data(name: &str) -> String {
    std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../data")
            .join(name),
    )
    .unwrap()
}

fn line_after<'a>(text: &'a str, label: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(label))
        .unwrap_or("")
        .trim()
}

/// Flat scores, head-of-list choice, verdicts read from the answer text.
/// `delay` slows every answer judgment down.
fn head_first(delay: Duration) -> Arc<dyn TextBackend> {
    Arc::new(FnBackend::new(move |r: &GenerationRequest| {
        let user = r.user_text.as_str();
        let reply = match r.schema_name.as_str() {
            "score_map" => json!({ "scores": {} }),
            "rank_choice" => {
                let list = &user[user.find("Candidate slots (JSON):\n").unwrap() + 24..];
                let list: Value = serde_json::from_str(list).unwrap();
                json!({ "choice": list[0]["id"] })
            }
            "slot_judgment" => {
                std::thread::sleep(delay);
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
    }))
}

fn fixture_backend() -> Arc<dyn TextBackend> {
    let mut entries = Vec::new();
    for name in ["induction", "ontoagent", "freeform"] {
        entries
            .extend(ScriptedBackend::parse_script(&data(&format!("scripts/{name}.json"))).unwrap());
    }
    Arc::new(ScriptedBackend::strict(entries).unwrap())
}

fn app(dir: &Path, backend: Arc<dyn TextBackend>) -> Router {
    let store = FileStore::open(dir).unwrap();
    router(Arc::new(AppState::new(
        store,
        backend,
        AppConfig::default(),
    )))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(
            body.map(|b| Body::from(b.to_string()))
                .unwrap_or_else(Body::empty),
        )
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(&body.to_string())).await
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

async fn bundled_ontology(app: &Router) -> String {
    let onto: Value = serde_json::from_str(&data("ontology.json")).unwrap();
    let (status, body) = post(app, "/ontologies", json!({ "ontology": onto })).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["ontology_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn ontologies_are_stored_by_content() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), head_first(Duration::ZERO));
    let id = bundled_ontology(&app).await;
    assert!(id.starts_with("onto-"));
    assert_eq!(bundled_ontology(&app).await, id);

    let (status, body) = get(&app, &format!("/ontologies/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        body,
        serde_json::from_str::<Value>(&data("ontology.json")).unwrap()
    );

    let (status, body) = get(&app, "/ontologies/onto-0000000000000000").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "not_found");
}

#[tokio::test]
async fn a_session_runs_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), head_first(Duration::ZERO));
    let ontology_id = bundled_ontology(&app).await;
    let (status, created) = post(
        &app,
        "/sessions",
        json!({"ontology_id": ontology_id, "initial_description": "A site to search stocks."}),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let sid = created["session_id"].as_str().unwrap().to_string();
    assert_eq!(created["question_kind"], "slot");
    assert_eq!(created["done"], false);

    // confirm, reject a whole dimension, then decline until the gate opens
    let answers_uri = format!("/sessions/{sid}/answers");
    let (_, step) = post(&app, &answers_uri, json!({"text": "yes, we need that"})).await;
    assert_eq!(step["elicited_count"], 1);
    let (_, mut step) = post(
        &app,
        &answers_uri,
        json!({"text": "no, nothing like that at all"}),
    )
    .await;
    while step["question_kind"] == "slot" {
        step = post(&app, &answers_uri, json!({"text": "no"})).await.1;
    }
    assert_eq!(step["question_kind"], "gate", "{step}");
    let (status, _) = post(&app, &answers_uri, json!({"text": "nothing else"})).await;
    assert_eq!(status, StatusCode::OK);

    let (_, onto) = get(&app, &format!("/sessions/{sid}/ontology")).await;
    let aspects = onto["aspects"].as_array().unwrap();
    assert_eq!(aspects.iter().filter(|a| a["pruned"] == true).count(), 1);
    let dims: Vec<&Value> = aspects
        .iter()
        .flat_map(|a| a["dimensions"].as_array().unwrap())
        .collect();
    assert!(dims.iter().any(|d| d["pruned"] == true));
    let confirmed = dims
        .iter()
        .flat_map(|d| d["slots"].as_array().unwrap())
        .filter(|s| s["state"] == "confirmed")
        .count();
    assert_eq!(confirmed, 1);

    let (status, view) = get(&app, &format!("/sessions/{sid}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["status"], "active");
    assert_eq!(view["transcript"][0]["kind"]["type"], "initial");

    loop {
        let (status, step) = post(&app, &answers_uri, json!({"text": "no"})).await;
        assert_eq!(status, StatusCode::OK, "{step}");
        if step["done"] == true {
            assert!(step["finish_reason"].is_string());
            break;
        }
    }
    let (status, body) = post(&app, &answers_uri, json!({"text": "yes"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"]["code"], "conflict");

    let (_, view) = get(&app, &format!("/sessions/{sid}")).await;
    assert_eq!(view["status"], "finished");
    let (_, requirements) = get(&app, &format!("/sessions/{sid}/requirements")).await;
    assert_eq!(requirements["count"], 1);
    let exported =
        std::fs::read_to_string(dir.path().join(format!("sessions/{sid}.requirements.json")))
            .unwrap();
    assert_eq!(
        serde_json::from_str::<Value>(&exported).unwrap(),
        requirements
    );
    assert!(dir.path().join(format!("transcripts/{sid}.jsonl")).exists());
}

#[tokio::test]
async fn unknown_things_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), head_first(Duration::ZERO));
    for uri in [
        "/sessions/nope",
        "/sessions/nope/requirements",
        "/sessions/nope/ontology",
        "/evaluations/nope",
        "/nowhere",
    ] {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"]["code"], "not_found");
    }
    let (status, _) = post(&app, "/sessions/nope/answers", json!({"text": "yes"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = post(
        &app,
        "/sessions",
        json!({"ontology_id": "onto-missing", "initial_description": "x"}),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_bodies_report_the_offending_path() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), head_first(Duration::ZERO));

    let (status, body) = post(
        &app,
        "/sessions",
        json!({"ontology_id": 5, "initial_description": "x"}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["path"], "ontology_id");

    let mut onto: Value = serde_json::from_str(&data("ontology.json")).unwrap();
    onto["aspects"][1]["dimensions"][0]["slots"][0]["score"] = json!(3.5);
    let (status, body) = post(&app, "/ontologies", json!({ "ontology": onto })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "schema_violation");
    assert_eq!(
        body["error"]["path"],
        "ontology.aspects[1].dimensions[0].slots[0].score"
    );

    let (status, body) = post(
        &app,
        "/ontologies",
        json!({"induce": {"domain_name": "web", "aspects": [], "corpus": []}}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["path"], "induce.aspects");

    let (status, _) = call(&app, Method::POST, "/sessions", Some("")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&app, Method::POST, "/sessions", Some("{\"ontology_id\": ")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "schema_violation");

    let (status, body) = post(
        &app,
        "/evaluations",
        json!({"interviewer": "ontoagent", "scenarios": []}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["path"], "scenarios");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_answers_to_one_session_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), head_first(Duration::from_millis(300)));
    let ontology_id = bundled_ontology(&app).await;
    let (_, created) = post(
        &app,
        "/sessions",
        json!({"ontology_id": ontology_id, "initial_description": "A site."}),
    )
    .await;
    let uri = format!(
        "/sessions/{}/answers",
        created["session_id"].as_str().unwrap()
    );
    let first = post(&app, &uri, json!({"text": "yes"}));
    let second = async {
        tokio::time::sleep(Duration::from_millis(50)).await;
        post(&app, &uri, json!({"text": "no"})).await
    };
    let ((a, _), (b, body)) = tokio::join!(first, second);
    assert_eq!(a, StatusCode::OK);
    assert_eq!(b, StatusCode::CONFLICT, "{body}");

    let (_, view) = get(&app, &uri.replace("/answers", "")).await;
    assert_eq!(view["turn"], 1);
    assert_eq!(view["elicited_count"], 1);
}

#[tokio::test]
async fn evaluations_replay_the_bundled_scripts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), fixture_backend());
    let aspects: Value = serde_json::from_str(&data("aspects.json")).unwrap();
    let corpus: Vec<Value> = data("corpus.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let (status, induced) = post(
        &app,
        "/ontologies",
        json!({"induce": {"domain_name": "web", "aspects": aspects["aspects"], "corpus": corpus}}),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{induced}");
    assert_eq!(induced["slot_count"], 15);
    assert!(!induced["induction_log"].as_array().unwrap().is_empty());

    let scenarios: Vec<Value> = data("scenarios.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let (status, created) = post(
        &app,
        "/evaluations",
        json!({"interviewer": "ontoagent", "ontology_id": induced["ontology_id"], "scenarios": scenarios}),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    assert_eq!(created["report"]["aggregate"]["ire"], 1.0);
    let eval_id = created["evaluation_id"].as_str().unwrap();
    let (status, stored) = get(&app, &format!("/evaluations/{eval_id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stored, created["report"]);
    assert!(dir
        .path()
        .join(format!(
            "reports/{eval_id}/transcripts/stock-research.ontoagent.jsonl"
        ))
        .exists());

    let (status, body) = post(
        &app,
        "/evaluations",
        json!({"interviewer": "ontoagent", "scenarios": scenarios}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["path"], "ontology_id");
}

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i64>().prop_map(Value::from),
        "[a-z ]{0,8}".prop_map(Value::from),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 0..4).prop_map(Value::from),
            proptest::collection::btree_map(
                prop_oneof![
                    Just("ontology_id".to_string()),
                    Just("initial_description".to_string()),
                    Just("ontology".to_string()),
                    Just("induce".to_string()),
                    Just("interviewer".to_string()),
                    Just("scenarios".to_string()),
                    Just("text".to_string()),
                    "[a-z]{1,6}",
                ],
                inner,
                0..4,
            )
            .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn malformed_requests_are_client_errors(body in json_value(), endpoint in 0usize..4) {
        let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let app = app(dir.path(), head_first(Duration::ZERO));
        let uri = ["/ontologies", "/sessions", "/evaluations", "/sessions/abc/answers"][endpoint];
        let (status, reply) = runtime.block_on(post(&app, uri, body));
        prop_assert!(status.is_client_error(), "{} -> {}", status, reply);
        prop_assert!(reply["error"]["code"].is_string());
    }
}
