use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use vqg_cli::server::{router, AppState};
use vqg_core::kb::{KbRecord, KnowledgeBase};
use vqg_core::proposal::Region;
use vqg_core::qgen::QuestionRecord;
use vqg_core::synth::toy_taxonomy;
use vqg_core::Image;

fn record(id: &str, image_path: Option<String>) -> KbRecord {
    let mut q = QuestionRecord::new(
        "img",
        Region::new(2, 3, 10, 12),
        "animal",
        vec!["what".into(), "animal".into(), "is".into(), "this".into(), "?".into()],
        "template",
        "template-1",
    );
    q.id = id.to_string();
    KbRecord::new(q, vec![0.5, 0.5], image_path)
}

fn kb_with(records: Vec<KbRecord>) -> KnowledgeBase {
    let mut kb = KnowledgeBase::new(vec!["dog".into(), "car".into()]);
    for r in records {
        assert!(kb.enqueue(r));
    }
    kb
}

fn app(kb: KnowledgeBase, kb_path: &Path) -> Router {
    router(AppState::new(kb, kb_path.to_path_buf(), Some(toy_taxonomy())), None)
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, bytes) = send(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn post(body: &str) -> Request<Body> {
    Request::post("/api/answer")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

async fn post_json(app: &Router, body: Value) -> (StatusCode, Value) {
    let (status, bytes) = send(app, post(&body.to_string())).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn assert_error(body: &Value, code: &str) {
    assert_eq!(body["error"]["code"], code, "body: {body}");
    assert!(body["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn next_on_empty_kb_is_no_content() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(kb_with(vec![]), &dir.path().join("kb.json"));
    let (status, body) = get_json(&app, "/api/next").await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert_eq!(body, Value::Null);
}

#[tokio::test]
async fn next_returns_oldest_pending_question() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.png");
    Image::filled(20, 16, [10, 200, 30]).unwrap().save(&img).unwrap();
    let kb = kb_with(vec![
        record("aaaa", Some(img.display().to_string())),
        record("bbbb", None),
    ]);
    let app = app(kb, &dir.path().join("kb.json"));
    let (status, body) = get_json(&app, "/api/next").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["record_id"], "aaaa");
    assert_eq!(body["image_url"], "/api/image/aaaa");
    assert_eq!(body["image_width"], 20);
    assert_eq!(body["image_height"], 16);
    assert_eq!(body["question"], "what animal is this ?");
    assert_eq!(body["target_word"], "animal");
    assert_eq!(body["region"]["x_tl"], 2);
    assert_eq!(body["region"]["y_br"], 12);
    assert_eq!(body["record"]["question"]["id"], "aaaa");
}

#[tokio::test]
async fn record_without_image_has_null_url() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(kb_with(vec![record("bbbb", None)]), &dir.path().join("kb.json"));
    let (_, body) = get_json(&app, "/api/next").await;
    assert_eq!(body["image_url"], Value::Null);
    assert_eq!(body["image_width"], Value::Null);
}

#[tokio::test]
async fn answer_updates_stats_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let kb_path = dir.path().join("kb.json");
    let app = app(kb_with(vec![record("aaaa", None), record("bbbb", None)]), &kb_path);

    let (status, stats) = get_json(&app, "/api/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats, json!({"total": 2, "answered": 0, "no_answer": 0, "successful": 0}));

    let (status, body) = post_json(&app, json!({"record_id": "aaaa", "answer": "  Tulip ", "rating": 5})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["answer"], json!({"kind": "text", "text": "Tulip"}));
    assert_eq!(body["rating"], 5);

    let (_, stats) = get_json(&app, "/api/stats").await;
    assert_eq!(stats, json!({"total": 2, "answered": 1, "no_answer": 0, "successful": 1}));

    let (_, next) = get_json(&app, "/api/next").await;
    assert_eq!(next["record_id"], "bbbb");

    let saved = KnowledgeBase::load(&kb_path).unwrap();
    assert_eq!(saved.get("aaaa").unwrap().answer_text(), Some("Tulip"));
    assert!(!saved.get("bbbb").unwrap().is_answered());
}

#[tokio::test]
async fn known_word_answers_do_not_count_as_acquired() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(kb_with(vec![record("aaaa", None), record("bbbb", None)]), &dir.path().join("kb.json"));
    // "mammal" is a hypernym of the known label "dog".
    let (status, _) = post_json(&app, json!({"record_id": "aaaa", "answer": "Mammal", "rating": 5})).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = post_json(&app, json!({"record_id": "bbbb", "no_answer": true})).await;
    assert_eq!(status, StatusCode::OK);
    let (_, stats) = get_json(&app, "/api/stats").await;
    assert_eq!(stats, json!({"total": 2, "answered": 1, "no_answer": 1, "successful": 0}));
}

#[tokio::test]
async fn duplicate_answer_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(kb_with(vec![record("aaaa", None)]), &dir.path().join("kb.json"));
    let body = json!({"record_id": "aaaa", "answer": "tulip", "rating": 4});
    assert_eq!(post_json(&app, body.clone()).await.0, StatusCode::OK);
    let (status, err) = post_json(&app, body).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&err, "conflict");
}

#[tokio::test]
async fn unknown_record_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(kb_with(vec![record("aaaa", None)]), &dir.path().join("kb.json"));
    let (status, err) = post_json(&app, json!({"record_id": "zzzz", "answer": "x"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&err, "not_found");
}

#[tokio::test]
async fn invalid_submissions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let kb_path = dir.path().join("kb.json");
    let app = app(kb_with(vec![record("aaaa", None)]), &kb_path);
    let bad = [
        "{not json".to_string(),
        json!({"record_id": "aaaa"}).to_string(),
        json!({"record_id": "aaaa", "answer": "   "}).to_string(),
        json!({"record_id": "aaaa", "answer": "x", "no_answer": true}).to_string(),
        json!({"record_id": "aaaa", "answer": "x", "rating": 7}).to_string(),
        json!({"record_id": "aaaa", "answer": "x", "rating": 0}).to_string(),
        json!({"record_id": "aaaa", "answer": "x", "extra": 1}).to_string(),
    ];
    for body in bad {
        let (status, bytes) = send(&app, post(&body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_error(&serde_json::from_slice(&bytes).unwrap(), "invalid_input");
    }
    let (_, stats) = get_json(&app, "/api/stats").await;
    assert_eq!(stats["answered"], 0);
    assert!(!kb_path.exists());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_answers_to_one_record_admit_exactly_one() {
    let dir = tempfile::tempdir().unwrap();
    let kb_path = dir.path().join("kb.json");
    let app = app(kb_with(vec![record("aaaa", None)]), &kb_path);
    let tasks: Vec<_> = ["tulip", "rose", "lily", "iris"]
        .into_iter()
        .map(|word| {
            let app = app.clone();
            tokio::spawn(async move {
                let body = json!({"record_id": "aaaa", "answer": word, "rating": 5});
                (word, send(&app, post(&body.to_string())).await.0)
            })
        })
        .collect();
    let mut winners = Vec::new();
    for t in tasks {
        let (word, status) = t.await.unwrap();
        match status {
            StatusCode::OK => winners.push(word),
            StatusCode::CONFLICT => {}
            other => panic!("unexpected status {other}"),
        }
    }
    assert_eq!(winners.len(), 1);
    let saved = KnowledgeBase::load(&kb_path).unwrap();
    assert_eq!(saved.get("aaaa").unwrap().answer_text(), Some(winners[0]));
}

#[tokio::test]
async fn failed_save_leaves_kb_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let kb_path = dir.path().join("missing-dir").join("kb.json");
    let app = app(kb_with(vec![record("aaaa", None)]), &kb_path);
    let (status, err) = post_json(&app, json!({"record_id": "aaaa", "answer": "tulip", "rating": 5})).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_error(&err, "io");
    let (_, stats) = get_json(&app, "/api/stats").await;
    assert_eq!(stats["answered"], 0);
    let (_, next) = get_json(&app, "/api/next").await;
    assert_eq!(next["record_id"], "aaaa");
}

#[tokio::test]
async fn image_endpoint_serves_png() {
    let dir = tempfile::tempdir().unwrap();
    let img_path = dir.path().join("img.ppm");
    let img = Image::filled(7, 5, [1, 2, 3]).unwrap();
    img.save(&img_path).unwrap();
    let kb = kb_with(vec![
        record("aaaa", Some(img_path.display().to_string())),
        record("bbbb", None),
        record("cccc", Some(dir.path().join("gone.png").display().to_string())),
    ]);
    let app = app(kb, &dir.path().join("kb.json"));

    let resp = app
        .clone()
        .oneshot(Request::get("/api/image/aaaa").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "image/png");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    assert_eq!(Image::decode(&bytes).unwrap(), img);

    for id in ["bbbb", "cccc", "zzzz"] {
        let (status, body) = get_json(&app, &format!("/api/image/{id}")).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{id}");
        assert_error(&body, "not_found");
    }
}

#[tokio::test]
async fn static_files_are_served_next_to_the_api() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<h1>hi</h1>").unwrap();
    let state = AppState::new(kb_with(vec![]), dir.path().join("kb.json"), None);
    let app = router(state, Some(ui));
    let (status, bytes) = send(&app, Request::get("/index.html").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, b"<h1>hi</h1>");
    let (status, stats) = get_json(&app, "/api/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["total"], 0);
}
