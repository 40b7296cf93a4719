mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use common::{fixture, three_rule_db};
use http_body_util::BodyExt;
use pubsuggest_cli::server::{load_clusters, load_rules, router};
use pubsuggest_cli::Suggester;
use pubsuggest_core::rules::RuleDatabase;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(db: RuleDatabase) -> Router {
    router(Arc::new(Suggester::new(db, Vec::new())), Some("http://localhost:8000")).unwrap()
}

fn reference_app() -> Router {
    app(load_rules(&fixture("reference_rules.csv")).unwrap())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    let response = app.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = response.status();
    (status, response.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = get(app, uri).await;
    (status, serde_json::from_slice(&body).unwrap())
}

#[tokio::test]
async fn healthz_says_ok() {
    assert_eq!(get(&reference_app(), "/healthz").await, (StatusCode::OK, b"ok".to_vec()));
}

#[tokio::test]
async fn reference_row_is_returned_verbatim() {
    let (status, body) = get_json(&reference_app(), "/suggest?items=American%20Library%20Association").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["items"], json!(["American Library Association"]));
    assert_eq!(body["suggestions"], json!([{"value": "Chicago", "confidence": 0.954449986873195, "lift": 111.876299789079}]));
    assert_eq!(body["suggestions"][0]["confidence"].as_f64(), Some(0.954449986873195));
    assert_eq!(body["suggestions"][0]["lift"].as_f64(), Some(111.876299789079));
}

#[tokio::test]
async fn two_item_query_uses_unit_separator() {
    let uri = "/suggest?items=Chicago%1FLaw%20Student%20Division%20American%20Bar%20Association";
    let (status, body) = get_json(&reference_app(), uri).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["suggestions"], json!([{"value": "University of Chicago Press", "confidence": 1.0, "lift": 2.0}]));
}

#[tokio::test]
async fn unknown_items_give_empty_suggestions() {
    let (status, body) = get_json(&reference_app(), "/suggest?items=zzz-unknown").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["suggestions"], json!([]));
}

#[tokio::test]
async fn limit_truncates_ranked_suggestions() {
    let app = app(three_rule_db());
    let (_, body) = get_json(&app, "/suggest?items=b&limit=1").await;
    assert_eq!(body["suggestions"], json!([{"value": "a", "confidence": 0.75, "lift": 1.0}]));
    let (_, body) = get_json(&app, "/suggest?items=a%1Fc").await;
    assert_eq!(body["suggestions"], json!([{"value": "b", "confidence": 1.0, "lift": 1.0}]));
}

#[tokio::test]
async fn bad_requests_are_rejected_with_json_errors() {
    let app = reference_app();
    for uri in [
        "/suggest",
        "/suggest?limit=3",
        "/suggest?items=",
        "/suggest?items=%1F%20",
        "/suggest?items=x&limit=0",
        "/suggest?items=x&limit=101",
        "/suggest?items=x&limit=ten",
    ] {
        let (status, body) = get_json(&app, uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert!(body["error"].as_str().is_some_and(|e| !e.is_empty()), "{uri}");
    }
    assert_eq!(get(&app, "/suggest?items=x&limit=100").await.0, StatusCode::OK);
}

#[tokio::test]
async fn stats_summarize_the_database() {
    let (_, body) = get_json(&reference_app(), "/stats").await;
    assert_eq!(body["rules"], 2);
    assert_eq!(body["consequents"], 2);

    let single = RuleDatabase::new(vec![load_rules(&fixture("reference_rules.csv")).unwrap().rules()[0].clone()]).unwrap();
    let (_, body) = get_json(&app(single), "/stats").await;
    assert_eq!(body, json!({"rules": 1, "consequents": 1, "top_consequents": [["Chicago", 1]]}));

    let (_, body) = get_json(&app(three_rule_db()), "/stats").await;
    assert_eq!(body, json!({"rules": 3, "consequents": 2, "top_consequents": [["b", 2], ["a", 1]]}));
}

#[tokio::test]
async fn empty_rule_file_still_serves() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "antecedent,consequent,confidence,lift,support\n").unwrap();
    let app = app(load_rules(&path).unwrap());
    assert_eq!(get(&app, "/healthz").await.0, StatusCode::OK);
    let (_, body) = get_json(&app, "/stats").await;
    assert_eq!(body, json!({"rules": 0, "consequents": 0, "top_consequents": []}));
    let (status, body) = get_json(&app, "/suggest?items=Chicago").await;
    assert_eq!((status, &body["suggestions"]), (StatusCode::OK, &json!([])));
}

#[tokio::test]
async fn query_variants_are_canonicalized_through_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let config = pubsuggest_cli::RunConfig { params: pubsuggest_core::fpm::MiningParams::new(0.1, 0.6).unwrap(), ..Default::default() };
    pubsuggest_cli::pipeline::run(&[fixture("provision_records.jsonl")], dir.path(), config, Default::default()).unwrap();
    let clusters = ["clusters_place.csv", "clusters_name.csv"].map(|n| load_clusters(&dir.path().join(n)).unwrap());
    let suggester = Suggester::new(load_rules(&dir.path().join("rules.csv")).unwrap(), clusters.to_vec());
    let app = router(Arc::new(suggester), None).unwrap();
    let (_, body) = get_json(&app, "/suggest?items=CHICAGO%20%3A%1Flaw%20student%20division%2C%20american%20bar%20association").await;
    assert_eq!(body["items"], json!(["Chicago", "Law Student Division American Bar Association"]));
    assert_eq!(body["suggestions"][0]["value"], "University of Chicago Press");
    // bracketed values are dropped by cleaning
    let (_, body) = get_json(&app, "/suggest?items=%5BS.l.%5D%1FLondon").await;
    assert_eq!(body["items"], json!(["London"]));
    assert_eq!(body["suggestions"][0]["value"], "Macmillan");
}

#[tokio::test]
async fn responses_are_stable_apart_from_elapsed() {
    let app = reference_app();
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("elapsed_ms").expect("elapsed present");
        v
    };
    let (_, a) = get_json(&app, "/suggest?items=American%20Library%20Association").await;
    let (_, b) = get_json(&app, "/suggest?items=American%20Library%20Association").await;
    assert_eq!(strip(a), strip(b));
}

#[tokio::test]
async fn cors_allows_the_configured_origin() {
    let app = reference_app();
    let request = Request::get("/healthz").header(header::ORIGIN, "http://localhost:8000").body(Body::empty()).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:8000");

    let preflight = Request::builder()
        .method(Method::OPTIONS)
        .uri("/suggest?items=x")
        .header(header::ORIGIN, "http://localhost:8000")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "GET")
        .body(Body::empty())
        .unwrap();
    let response = app.clone().oneshot(preflight).await.unwrap();
    assert!(response.status().is_success());
    assert!(response.headers()[header::ACCESS_CONTROL_ALLOW_METHODS].to_str().unwrap().contains("GET"));

    let other = Request::get("/healthz").header(header::ORIGIN, "http://evil.example").body(Body::empty()).unwrap();
    let response = app.oneshot(other).await.unwrap();
    let allowed = response.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN);
    assert!(allowed.is_none_or(|v| v == "http://localhost:8000"));
}
