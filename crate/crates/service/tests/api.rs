use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use screenwise_core::model::{Label, Schema, Test};
use screenwise_core::policy::{build_policy, to_json, PartitionedPolicy, PolicyConfig, Session};
use screenwise_core::risk::RiskParameters;
use screenwise_core::synth::{generate, GeneratorConfig};
use screenwise_core::tree::{DecisionTree, Node, NodeCounts};
use screenwise_core::model::TrainingRecord;
use screenwise_service::{router, AppState, SessionView};

fn data() -> &'static (PartitionedPolicy, Vec<TrainingRecord>) {
    static DATA: OnceLock<(PartitionedPolicy, Vec<TrainingRecord>)> = OnceLock::new();
    DATA.get_or_init(|| {
        let cfg = GeneratorConfig { size: 3000, ..GeneratorConfig::default() };
        let records = generate(&cfg, 11).unwrap();
        let policy = build_policy(&records, &Schema::default(), &RiskParameters::default(), &PolicyConfig::default()).unwrap();
        (policy, records)
    })
}

/// One partition whose tree starts with a mammogram: B1 ends in followup,
/// B2 asks for an MRI, B3 recommends biopsy.
fn walkthrough_policy() -> PartitionedPolicy {
    let mut policy = data().0.clone();
    policy.partitions.truncate(1);
    let c = |p, n| NodeCounts { positives: p, negatives: n };
    let mri = Node::internal(
        Test::Mri,
        c(20, 80),
        [Node::leaf(Label::Negative, c(1, 70)), Node::leaf(Label::Positive, c(4, 8)), Node::leaf(Label::Positive, c(15, 2))],
    );
    policy.partitions[0].tree = DecisionTree::new(Node::internal(
        Test::Mammogram,
        c(60, 900),
        [Node::leaf(Label::Negative, c(2, 780)), mri, Node::leaf(Label::Positive, c(38, 40))],
    ));
    policy
}

fn features_of(r: &TrainingRecord) -> Value {
    let schema = Schema::default();
    let map: serde_json::Map<String, Value> = schema
        .names()
        .iter()
        .zip(&r.raw)
        .map(|(n, v)| (n.to_string(), Value::String(v.clone())))
        .collect();
    json!({ "features": map })
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn app_with(policy: Option<PartitionedPolicy>) -> axum::Router {
    router(Arc::new(AppState::new(policy, screenwise_service::DEFAULT_TTL)))
}

#[tokio::test]
async fn walkthrough_score_one_ends_in_followup() {
    let app = app_with(Some(walkthrough_policy()));
    let (status, body) = call(&app, "POST", "/api/v1/sessions", Some(features_of(&data().1[0]))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["recommendation"], "MG");
    assert_eq!(body["status"]["state"], "awaiting_outcome");
    let id = body["session_id"].as_str().unwrap().to_string();

    let (status, body) = call(&app, "POST", &format!("/api/v1/sessions/{id}/outcomes"), Some(json!({"test": "MG", "birads": "1"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], json!({"state": "final", "label": 0}));
    assert_eq!(body["recommendation"], "regular followup");
    assert!((body["cost"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    let interval = body["diagnosis"]["interval"].as_array().unwrap();
    assert!(interval[0].as_f64().unwrap() <= 2.0 / 782.0 && 2.0 / 782.0 <= interval[1].as_f64().unwrap());

    let (status, body) = call(&app, "POST", &format!("/api/v1/sessions/{id}/outcomes"), Some(json!({"test": "US", "birads": 2}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "session_final");
}

#[tokio::test]
async fn score_4a_asks_for_mri_and_wrong_test_conflicts() {
    let app = app_with(Some(walkthrough_policy()));
    let (_, body) = call(&app, "POST", "/api/v1/sessions", Some(features_of(&data().1[1]))).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    let uri = format!("/api/v1/sessions/{id}/outcomes");

    let (status, body) = call(&app, "POST", &uri, Some(json!({"test": "US", "birads": "2"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "wrong_test");
    assert_eq!(body["detail"]["expected"], "MG");

    let (status, body) = call(&app, "POST", &uri, Some(json!({"test": "MG", "birads": "4A"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["recommendation"], "MRI");
    assert!((body["cost"].as_f64().unwrap() - 0.1).abs() < 1e-12);

    let (status, body) = call(&app, "POST", &uri, Some(json!({"test": "MRI", "birads": "4D"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "invalid_birads");

    let (status, body) = call(&app, "GET", &format!("/api/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["history"], json!([{"test": "MG", "birads": "4A"}]));
}

#[tokio::test]
async fn errors_have_codes() {
    let app = app_with(Some(walkthrough_policy()));
    let (status, body) = call(&app, "GET", "/api/v1/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "session_not_found");
    assert!(body["message"].is_string());

    let (status, _) = call(&app, "POST", "/api/v1/sessions/nope/outcomes", Some(json!({"test": "MG", "birads": "1"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, body) = call(&app, "POST", "/api/v1/sessions", Some(json!({"features": {"shoe_size": "9"}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "schema_violation");

    let (status, body) = call(&app, "POST", "/api/v1/sessions", Some(json!({"features": {"age": "old"}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "schema_violation");

    let (status, body) = call(&app, "POST", "/api/v1/sessions", Some(json!([1, 2]))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "malformed_body");

    let (_, metrics) = call(&app, "GET", "/api/v1/metrics", None).await;
    assert_eq!(metrics["client_errors"], 5);
}

#[tokio::test]
async fn no_policy_is_a_conflict() {
    let app = app_with(None);
    let (status, body) = call(&app, "POST", "/api/v1/sessions", Some(features_of(&data().1[0]))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "no_policy");
    let (status, _) = call(&app, "GET", "/api/v1/policy", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body) = call(&app, "GET", "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["policy_loaded"], false);
}

#[tokio::test]
async fn policy_view_is_stable_and_round_trips() {
    let policy = data().0.clone();
    let app = app_with(Some(policy.clone()));
    let raw = |app: axum::Router| async move {
        let req = Request::builder().uri("/api/v1/policy").body(Body::empty()).unwrap();
        let resp = app.oneshot(req).await.unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap()
    };
    let a = raw(app.clone()).await;
    let b = raw(app.clone()).await;
    assert_eq!(a, b);
    let back = screenwise_core::policy::from_json(&a).unwrap();
    assert_eq!(back.len(), policy.len());
    assert_eq!(to_json(&back), to_json(&policy));
}

#[tokio::test]
async fn replayed_records_match_batch_evaluation() {
    let (policy, records) = data();
    let app = app_with(Some(policy.clone()));
    for r in records.iter().take(150) {
        let (status, mut body) = call(&app, "POST", "/api/v1/sessions", Some(features_of(r))).await;
        assert_eq!(status, StatusCode::CREATED);
        let id = body["session_id"].as_str().unwrap().to_string();
        let partition = screenwise_core::policy::match_partition(&r.personal, policy).unwrap();
        assert_eq!(body["partition"], partition);
        while body["status"]["state"] == "awaiting_outcome" {
            let test: Test = body["status"]["test"].as_str().unwrap().parse().unwrap();
            let score = r.screening.get(test).unwrap();
            let (status, next) = call(
                &app,
                "POST",
                &format!("/api/v1/sessions/{id}/outcomes"),
                Some(json!({"test": test.code(), "birads": score.as_str()})),
            )
            .await;
            assert_eq!(status, StatusCode::OK);
            body = next;
        }
        let view: SessionView = serde_json::from_value(body).unwrap();
        let batch = policy.partitions[partition].tree.classify(&r.screening, &policy.config.costs).unwrap();
        assert_eq!(view.status, screenwise_core::policy::SessionStatus::Final { label: batch.label });
        assert_eq!(view.cost, batch.cost);
    }
}

#[tokio::test]
async fn concurrent_posts_to_one_session_serialize() {
    let policy = walkthrough_policy();
    let state = Arc::new(AppState::with_policy(policy.clone()));
    let app = router(Arc::clone(&state));
    let session = Session::start(&policy, "fixed", data().1[0].personal.clone()).unwrap();
    assert!(state.store().insert(session));
    let mut handles = Vec::new();
    for _ in 0..16 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            call(&app, "POST", "/api/v1/sessions/fixed/outcomes", Some(json!({"test": "MG", "birads": "1"}))).await.0
        }));
    }
    let mut ok = 0;
    for h in handles {
        match h.await.unwrap() {
            StatusCode::OK => ok += 1,
            StatusCode::CONFLICT => {}
            other => panic!("unexpected {other}"),
        }
    }
    assert_eq!(ok, 1);
}

mod state_machine {
    use super::*;
    use proptest::prelude::*;

    #[derive(Debug, Clone)]
    enum Step {
        Outcome(usize, u8),
        Get,
    }

    fn step() -> impl Strategy<Value = Step> {
        prop_oneof![(0usize..4, 0u8..9).prop_map(|(t, s)| Step::Outcome(t, s)), Just(Step::Get)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn random_requests_keep_sessions_valid(steps in proptest::collection::vec(step(), 1..12)) {
            let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
            rt.block_on(async {
                let policy = walkthrough_policy();
                let app = app_with(Some(policy.clone()));
                let (_, body) = call(&app, "POST", "/api/v1/sessions", Some(features_of(&data().1[2]))).await;
                let id = body["session_id"].as_str().unwrap().to_string();
                let tests = ["MG", "US", "MRI", "XR"];
                let scores = ["0", "1", "2", "3", "4A", "4B", "4C", "5", "6"];
                for s in steps {
                    let (status, body) = match s {
                        Step::Outcome(t, sc) => call(&app, "POST", &format!("/api/v1/sessions/{id}/outcomes"), Some(json!({"test": tests[t], "birads": scores[sc as usize]}))).await,
                        Step::Get => call(&app, "GET", &format!("/api/v1/sessions/{id}"), None).await,
                    };
                    assert!(matches!(status.as_u16(), 200 | 400 | 409), "{status}");
                    let (_, view) = call(&app, "GET", &format!("/api/v1/sessions/{id}"), None).await;
                    let view: SessionView = serde_json::from_value(view).unwrap();
                    let mut seen = std::collections::BTreeSet::new();
                    assert!(view.history.iter().all(|h| seen.insert(h.test)));
                    let expected: f64 = view.history.iter().map(|h| policy.config.costs.cost(h.test)).sum();
                    assert!((view.cost - expected).abs() < 1e-12);
                    let _ = body;
                }
            });
        }
    }
}
