mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tec_core::corpus::Triple;
use tec_core::edits::apply_edits;
use tec_core::model::{Model, Variant};
use tec_core::service::{get_suggestion, router, ModelSuggester, Service, Store, Suggester};
use tec_core::stats::{parse_records, study_summary, Condition, ReviewRecord};
use tec_core::textnorm::normalize_punctuation;
use tower::ServiceExt;

/// Fixes "sits" to "sat"; everything else is left alone.
struct Rule;

impl Suggester for Rule {
    fn checkpoint_id(&self) -> &str {
        "rule-v1"
    }

    fn propose(&self, _source: &str, original: &str) -> tec_core::Result<String> {
        Ok(original.split_whitespace().map(|w| if w == "sits" { "sat" } else { w }).collect::<Vec<_>>().join(" "))
    }
}

fn corpus(n: usize) -> Vec<Triple> {
    (0..n)
        .map(|i| {
            let draft = if i % 2 == 0 { "the cat sits" } else { "the cat sat" };
            Triple::new(format!("s{i}"), "d", format!("src {i}"), draft, "the cat sat")
        })
        .collect()
}

fn app(dir: &std::path::Path, n: usize) -> axum::Router {
    let svc = Service::new(corpus(n), Arc::new(Rule), Store::open(dir).unwrap());
    router(Arc::new(svc))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let value = serde_json::from_str(&text).unwrap_or(Value::Null);
    (status, value, text)
}

async fn new_session(app: &axum::Router, n: usize, seed: u64) -> Value {
    let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let (status, body, _) = call(app, "POST", "/sessions", Some(json!({"reviewer_id": "r1", "sentence_ids": ids, "seed": seed}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body
}

fn record_for(session: &Value, k: usize, item: &Value) -> Value {
    let condition = item["condition"].as_str().unwrap();
    let shown = condition == "assisted" && item["suggestion_available"].as_bool().unwrap();
    json!({
        "session_id": session["session_id"],
        "reviewer_id": "r1",
        "sentence_id": item["sentence_id"],
        "condition": condition,
        "suggestion_available": item["suggestion_available"],
        "suggestion_shown": shown,
        "accepted": if shown { json!(k % 2 == 0) } else { Value::Null },
        "review_time_ms": 1000 + k as u64,
        "insert_count": 1,
        "delete_count": 2,
        "levenshtein_orig_to_final": 3,
        "final_text": "the cat sat",
    })
}

#[tokio::test]
async fn study_sized_session_is_split_in_half() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 74);
    let s = new_session(&app, 74, 1).await;
    let items = s["items"].as_array().unwrap();
    assert_eq!(items.len(), 74);
    let assisted = items.iter().filter(|i| i["condition"] == "assisted").count();
    assert_eq!(assisted, 37);
    let odd = new_session(&app, 5, 1).await;
    let n = odd["items"].as_array().unwrap().iter().filter(|i| i["condition"] == "assisted").count();
    assert_eq!(n, 3);
    assert!(chrono::DateTime::parse_from_rfc3339(s["created_at"].as_str().unwrap()).is_ok());
}

#[tokio::test]
async fn same_seed_same_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 10);
    let a = new_session(&app, 10, 42).await;
    let b = new_session(&app, 10, 42).await;
    assert_ne!(a["session_id"], b["session_id"]);
    assert_eq!(a["items"], b["items"]);
}

#[tokio::test]
async fn session_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 4);
    let (status, body, _) =
        call(&app, "POST", "/sessions", Some(json!({"reviewer_id": "r", "sentence_ids": ["s0", "s0"], "seed": 1}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "sentence_ids");
    assert_eq!(body["code"], "invalid");
    let (status, body, _) =
        call(&app, "POST", "/sessions", Some(json!({"reviewer_id": "r", "sentence_ids": ["s0"], "seed": 1}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    let (status, body, _) =
        call(&app, "POST", "/sessions", Some(json!({"reviewer_id": "r", "sentence_ids": ["s0", "zz"], "seed": 1}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["message"].as_str().unwrap().contains("zz"));
    let (status, body, _) = call(&app, "POST", "/sessions", Some(json!({"sentence_ids": ["s0", "s1"], "seed": 1}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "reviewer_id");
    let (status, body, _) = call(&app, "GET", "/sessions/nope/items/0", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["field"], "session_id");
}

#[tokio::test]
async fn items_hide_suggestions_when_unassisted() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 8);
    let s = new_session(&app, 8, 3).await;
    let sid = s["session_id"].as_str().unwrap();
    for k in 0..8 {
        let (status, item, _) = call(&app, "GET", &format!("/sessions/{sid}/items/{k}"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(item["sentence_id"], s["items"][k]["sentence_id"]);
        let n: usize = item["sentence_id"].as_str().unwrap()[1..].parse().unwrap();
        assert_eq!(item["suggestion_available"], json!(n % 2 == 0));
        let has = item.get("suggestion").is_some();
        assert_eq!(has, n % 2 == 0 && item["condition"] == "assisted");
        if has {
            assert_eq!(item["suggestion"]["suggested_text"], "the cat sat");
            assert_eq!(item["suggestion"]["edits"], json!([[2, 3, "sits", "sat"]]));
            assert_eq!(item["suggestion"]["checkpoint"], "rule-v1");
        }
    }
    let (status, body, _) = call(&app, "GET", &format!("/sessions/{sid}/items/8"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["field"], "index");
}

#[tokio::test]
async fn events_are_validated_logged_and_deduplicated() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 6);
    let s = new_session(&app, 6, 9).await;
    let sid = s["session_id"].as_str().unwrap().to_owned();
    let (_, item, _) = call(&app, "GET", &format!("/sessions/{sid}/items/0"), None).await;
    let rec = record_for(&s, 0, &item);

    let (status, ack, _) = call(&app, "POST", "/events", Some(rec.clone())).await;
    assert_eq!(status, StatusCode::CREATED, "{ack}");
    assert_eq!(ack["status"], "recorded");
    for _ in 0..2 {
        let (status, body, _) = call(&app, "POST", "/events", Some(rec.clone())).await;
        assert_eq!(status, StatusCode::CONFLICT);
        assert_eq!(body["code"], "duplicate");
    }
    let (_, _, export) = call(&app, "GET", &format!("/export?session={sid}"), None).await;
    let records = parse_records(&export).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].original_length, item["original"].as_str().unwrap().chars().count() as u64);
    assert!(records[0].submitted_at.is_some());
}

#[tokio::test]
async fn invalid_records_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), 6);
    let s = new_session(&app, 6, 9).await;
    let sid = s["session_id"].as_str().unwrap().to_owned();
    let mut unassisted = None;
    for k in 0..6 {
        let (_, item, _) = call(&app, "GET", &format!("/sessions/{sid}/items/{k}"), None).await;
        if item["condition"] == "unassisted" {
            unassisted = Some(record_for(&s, k, &item));
            break;
        }
    }
    let base = unassisted.unwrap();
    let cases = [
        ("suggestion_shown", json!({"suggestion_shown": true, "accepted": true})),
        ("accepted", json!({"accepted": false})),
        ("insert_count", json!({"insert_count": -1})),
        ("review_time_ms", json!({"review_time_ms": -5})),
        ("condition", json!({"condition": "assisted"})),
        ("reviewer_id", json!({"reviewer_id": "someone-else"})),
        ("sentence_id", json!({"sentence_id": "not-in-session"})),
        ("suggestion_available", json!({"suggestion_available": !base["suggestion_available"].as_bool().unwrap()})),
    ];
    for (field, patch) in cases {
        let mut r = base.clone();
        for (k, v) in patch.as_object().unwrap() {
            r[k] = v.clone();
        }
        let (status, body, _) = call(&app, "POST", "/events", Some(r)).await;
        assert!(status.is_client_error(), "{field}: {status}");
        assert_eq!(body["field"], field, "{body}");
    }
    let mut missing = base.clone();
    missing.as_object_mut().unwrap().remove("final_text");
    let (status, body, _) = call(&app, "POST", "/events", Some(missing)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "final_text");
    let (status, body, _) = call(&app, "POST", "/events", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "bad_json");
    // Nothing above was logged.
    let (_, _, export) = call(&app, "GET", "/export", None).await;
    assert_eq!(export, "");
}

#[tokio::test]
async fn export_filters_grows_and_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let a = app(dir.path(), 6);
    let (_, _, empty) = call(&a, "GET", "/export", None).await;
    assert_eq!(empty, "");

    let s1 = new_session(&a, 6, 1).await;
    let s2 = new_session(&a, 6, 2).await;
    let mut previous = String::new();
    for (s, k) in [(&s1, 0), (&s2, 0), (&s1, 1)] {
        let sid = s["session_id"].as_str().unwrap();
        let (_, item, _) = call(&a, "GET", &format!("/sessions/{sid}/items/{k}"), None).await;
        let (status, _, _) = call(&a, "POST", "/events", Some(record_for(s, k, &item))).await;
        assert_eq!(status, StatusCode::CREATED);
        let (_, _, all) = call(&a, "GET", "/export", None).await;
        assert!(all.starts_with(&previous));
        previous = all;
    }
    let records = parse_records(&previous).unwrap();
    assert_eq!(records.len(), 3);
    let report = study_summary(&records, None);
    assert_eq!(report.n_records, 3);

    let sid1 = s1["session_id"].as_str().unwrap();
    let (_, _, only) = call(&a, "GET", &format!("/export?session={sid1}"), None).await;
    let subset = parse_records(&only).unwrap();
    assert_eq!(subset.len(), 2);
    assert!(subset.iter().all(|r| r.session_id == sid1));

    drop(a);
    let b = app(dir.path(), 6);
    let (_, _, replayed) = call(&b, "GET", "/export", None).await;
    assert_eq!(replayed, previous);
    let (_, item, _) = call(&b, "GET", &format!("/sessions/{sid1}/items/0"), None).await;
    let (status, _, _) = call(&b, "POST", "/events", Some(record_for(&s1, 0, &item))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let export = tec_core::service::read_records(dir.path(), None).unwrap();
    assert_eq!(export, records);
}

#[tokio::test]
async fn concurrent_submissions_are_all_logged_once() {
    let dir = tempfile::tempdir().unwrap();
    let a = app(dir.path(), 20);
    let s = new_session(&a, 20, 5).await;
    let sid = s["session_id"].as_str().unwrap().to_owned();
    let mut handles = Vec::new();
    for k in 0..20 {
        for _ in 0..2 {
            let (a, s, sid) = (a.clone(), s.clone(), sid.clone());
            handles.push(tokio::spawn(async move {
                let (_, item, _) = call(&a, "GET", &format!("/sessions/{sid}/items/{k}"), None).await;
                call(&a, "POST", "/events", Some(record_for(&s, k, &item))).await.0
            }));
        }
    }
    let mut created = 0;
    for h in handles {
        match h.await.unwrap() {
            StatusCode::CREATED => created += 1,
            StatusCode::CONFLICT => {}
            other => panic!("unexpected {other}"),
        }
    }
    assert_eq!(created, 20);
    let (_, _, export) = call(&a, "GET", "/export", None).await;
    assert_eq!(parse_records(&export).unwrap().len(), 20);
}

#[test]
fn model_suggestion_matches_direct_decode() {
    let triples = common::toy_triples(6, 21);
    let vocab = common::toy_vocab(&triples);
    let model = Model::new(common::tiny_config(Variant::Dual, vocab.len()), 4).unwrap();
    let suggester = ModelSuggester { model: model.clone(), vocab: vocab.clone(), checkpoint_id: "toy".into() };
    for t in &triples {
        let s = get_suggestion(&suggester, &t.id, &t.source, &t.original).unwrap();
        let again = get_suggestion(&suggester, &t.id, &t.source, &t.original).unwrap();
        assert_eq!(s, again);
        let direct = vocab.decode(
            &model.greedy_decode(vocab.encode(&t.source).ids(), vocab.encode(&t.original).ids()).unwrap(),
        );
        let direct: Vec<&str> = direct.split_whitespace().collect();
        let orig = normalize_punctuation(&t.original);
        let orig: Vec<&str> = orig.split_whitespace().collect();
        match s {
            None => assert_eq!(direct, orig),
            Some(s) => {
                assert_eq!(s.suggested_text, direct.join(" "));
                assert_eq!(apply_edits(&orig, &s.edits).unwrap().join(" "), s.suggested_text);
                assert_eq!(s.checkpoint, "toy");
            }
        }
    }
}

#[test]
fn record_schema_round_trips() {
    let r = ReviewRecord {
        session_id: "a".into(),
        reviewer_id: "b".into(),
        sentence_id: "c".into(),
        condition: Condition::Assisted,
        suggestion_available: true,
        suggestion_shown: true,
        accepted: Some(false),
        review_time_ms: 12,
        insert_count: 1,
        delete_count: 0,
        levenshtein_orig_to_final: 1,
        final_text: "x y".into(),
        original_length: 3,
        submitted_at: Some("2026-01-01T00:00:00.000Z".into()),
    };
    let line = serde_json::to_string(&r).unwrap();
    assert_eq!(parse_records(&line).unwrap(), vec![r]);
}
