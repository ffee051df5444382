use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use stepwise::annotate::server::{router, AppState, CampaignEntry};
use stepwise::annotate::{build_campaign, quality_items, Campaign, CampaignKind, ConsensusRule, LabelStore, Pool};
use stepwise::corpus;
use stepwise::stepgen::read_instructions;

fn campaign() -> Campaign {
    let f = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let tasks = corpus::load_tasks_dir(&f.join("tasks"), None).unwrap();
    let instructions = read_instructions(&f.join("instructions.jsonl")).unwrap();
    let items = quality_items("test", &instructions, &tasks).unwrap();
    let annotators = vec!["ann1".to_string(), "ann2".to_string()];
    build_campaign("q", CampaignKind::Quality, vec![Pool { name: "test".into(), items, shared: 2 }], &annotators, 3)
        .unwrap()
}

fn app(dir: &Path) -> (axum::Router, Campaign) {
    let c = campaign();
    let store = LabelStore::open(&dir.join("labels.jsonl")).unwrap();
    let state = AppState::new(vec![CampaignEntry { campaign: c.clone(), store }], ConsensusRule::Majority);
    (router(state, None), c)
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn label(item: &str, ann: &str) -> Value {
    json!({
        "item_id": item,
        "annotator_id": ann,
        "label": {"kind": "quality", "correct": true, "complete": false},
        "timestamp": "2025-03-01T12:00:00Z"
    })
}

#[tokio::test]
async fn annotator_flow_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let (app, c) = app(dir.path());
    for ann in ["ann1", "ann2"] {
        let mut served = Vec::new();
        loop {
            let (status, next) = call(&app, "GET", &format!("/campaigns/q/next?annotator={ann}"), None).await;
            assert_eq!(status, StatusCode::OK);
            if next["done"] == true {
                assert_eq!(next["remaining"], 0);
                break;
            }
            let item = next["item"]["item_id"].as_str().unwrap().to_string();
            assert!(next["item"]["steps"].is_array());
            let (status, rec) = call(&app, "POST", "/campaigns/q/labels", Some(label(&item, ann))).await;
            assert_eq!(status, StatusCode::CREATED, "{rec}");
            served.push(item);
        }
        let expected: Vec<String> = c.assigned(ann).into_iter().map(String::from).collect();
        assert_eq!(served, expected);
    }
    let (_, progress) = call(&app, "GET", "/campaigns/q/progress", None).await;
    assert_eq!(progress["complete"], true);
    let (status, report) = call(&app, "GET", "/campaigns/q/report", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["overall"]["correct_incomplete"]["percent"], 100.0);

    let stored = std::fs::read_to_string(dir.path().join("labels.jsonl")).unwrap();
    assert_eq!(stored.lines().count(), 12);
}

#[tokio::test]
async fn error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (app, c) = app(dir.path());
    let shared = c.shared_item_ids[0].clone();
    let theirs = c.independent["ann2"][0].clone();

    let (status, _) = call(&app, "POST", "/campaigns/q/labels", Some(label(&shared, "ann1"))).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, err) = call(&app, "POST", "/campaigns/q/labels", Some(label(&shared, "ann1"))).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::CONFLICT, Some("DUPLICATE_LABEL")));
    let (status, err) = call(&app, "POST", "/campaigns/q/labels", Some(label(&theirs, "ann1"))).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::FORBIDDEN, Some("UNASSIGNED_ITEM")));
    let (status, err) = call(&app, "POST", "/campaigns/q/labels", Some(label("nope", "ann1"))).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_ITEM")));
    let mut wrong = label(&theirs, "ann2");
    wrong["label"] = json!({"kind": "pairwise", "choice": "A"});
    let (status, err) = call(&app, "POST", "/campaigns/q/labels", Some(wrong)).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("LABEL_KIND_MISMATCH")));
    let (status, err) = call(&app, "GET", "/campaigns/zzz/progress", None).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_CAMPAIGN")));
    let (status, err) = call(&app, "GET", "/campaigns/q/next?annotator=eve", None).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::NOT_FOUND, Some("UNKNOWN_ANNOTATOR")));

    let (status, report) = call(&app, "GET", "/campaigns/q/report", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["complete"], false);
}

#[tokio::test]
async fn concurrent_duplicate_submissions_store_one_label() {
    let dir = tempfile::tempdir().unwrap();
    let (app, c) = app(dir.path());
    let item = c.shared_item_ids[1].clone();
    let calls = (0..8).map(|_| {
        let app = app.clone();
        let body = label(&item, "ann2");
        tokio::spawn(async move { call(&app, "POST", "/campaigns/q/labels", Some(body)).await.0 })
    });
    let mut statuses = Vec::new();
    for h in calls {
        statuses.push(h.await.unwrap());
    }
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::CREATED).count(), 1);
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::CONFLICT).count(), 7);
    let reopened = LabelStore::open(&dir.path().join("labels.jsonl")).unwrap();
    assert_eq!(reopened.records().len(), 1);
}
