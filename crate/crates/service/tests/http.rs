use std::path::Path;
use std::sync::Arc;

use csp_core::cluster::{build_index, corpus_vectors, save_index};
use csp_core::fixture::{self, EMBEDDINGS_FILE};
use csp_core::ingest::{scan_corpus, Corpus};
use csp_service::{load_engine, serve, AppState, ArtifactPaths};
use serde_json::{json, Value};
use tempfile::TempDir;

fn artifacts() -> (TempDir, ArtifactPaths) {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("corpus");
    fixture::generate(4, 40).write(&corpus_dir).unwrap();
    let manifest = scan_corpus(&corpus_dir).unwrap();
    let corpus = Corpus::load(&manifest, None).unwrap();
    let (spec, cats) = corpus_vectors(&corpus, None).unwrap();
    let index = build_index(cats, 10, 1, spec, None).unwrap();
    let index_path = dir.path().join("fixture.idx");
    save_index(&index, &index_path).unwrap();
    let paths = ArtifactPaths {
        index: index_path,
        embeddings: corpus_dir.join(EMBEDDINGS_FILE),
        corpus: corpus_dir,
    };
    (dir, paths)
}

async fn start(state: Arc<AppState>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, state));
    format!("http://{addr}")
}

fn chair_request(novelty: &str) -> Value {
    json!({
        "label": "chair",
        "novelty": novelty,
        "strokes": [[[40, 200, 200, 40, 40], [40, 40, 200, 200, 40]], [[60, 180], [120, 120]]],
    })
}

async fn post(client: &reqwest::Client, base: &str, body: &Value) -> (u16, Value) {
    let r = client
        .post(format!("{base}/v1/shift"))
        .json(body)
        .send()
        .await
        .unwrap();
    (r.status().as_u16(), r.json().await.unwrap())
}

#[tokio::test]
async fn shift_contract() {
    let (_dir, paths) = artifacts();
    let base = start(AppState::with_engine(load_engine(&paths).unwrap())).await;
    let client = reqwest::Client::new();

    let (status, body) = post(&client, &base, &chair_request("high")).await;
    assert_eq!(status, 200, "{body}");
    assert_ne!(body["target_label"], "chair");
    assert_eq!(body["novelty"], "high");
    for key in ["visual_similarity", "conceptual_similarity", "composite"] {
        let v = body[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert!(body["sketch"].as_array().is_some_and(|s| !s.is_empty()));
    assert_eq!(body["request_id"].as_str().unwrap().len(), 16);

    let (status, body) = post(&client, &base, &chair_request("extreme")).await;
    assert_eq!(
        (status, body["error_code"].as_str()),
        (400, Some("bad_novelty"))
    );

    let mut unknown = chair_request("low");
    unknown["label"] = json!("zzz_unknown");
    let (status, body) = post(&client, &base, &unknown).await;
    assert_eq!(
        (status, body["error_code"].as_str()),
        (404, Some("unknown_category"))
    );

    let mut degenerate = chair_request("low");
    degenerate["strokes"] = json!([[[9, 9, 9], [4, 4, 4]]]);
    let (status, body) = post(&client, &base, &degenerate).await;
    assert_eq!(
        (status, body["error_code"].as_str()),
        (422, Some("degenerate_sketch"))
    );

    let mut empty = chair_request("low");
    empty["strokes"] = json!([]);
    let (status, body) = post(&client, &base, &empty).await;
    assert_eq!(
        (status, body["error_code"].as_str()),
        (422, Some("invalid_strokes"))
    );

    let r = client
        .post(format!("{base}/v1/shift"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 400);
    assert_eq!(r.json::<Value>().await.unwrap()["error_code"], "bad_json");

    let (status, body) = post(&client, &base, &json!({ "label": "chair" })).await;
    assert_eq!(
        (status, body["error_code"].as_str()),
        (400, Some("bad_request"))
    );
}

#[tokio::test]
async fn identical_requests_identical_replies() {
    let (_dir, paths) = artifacts();
    let base = start(AppState::with_engine(load_engine(&paths).unwrap())).await;
    let client = reqwest::Client::new();
    let req = chair_request("intermediate");
    let calls = (0..8).map(|_| {
        let client = client.clone();
        let base = base.clone();
        let req = req.clone();
        async move {
            let r = client
                .post(format!("{base}/v1/shift"))
                .json(&req)
                .send()
                .await
                .unwrap();
            assert_eq!(r.status().as_u16(), 200);
            r.bytes().await.unwrap()
        }
    });
    let bodies: Vec<_> = futures_join(calls).await;
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

async fn futures_join<F: std::future::Future<Output = T> + Send + 'static, T: Send + 'static>(
    futures: impl Iterator<Item = F>,
) -> Vec<T> {
    let handles: Vec<_> = futures.map(tokio::spawn).collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}

#[tokio::test]
async fn categories_and_health() {
    let (_dir, paths) = artifacts();
    let state = AppState::empty();
    let base = start(state.clone()).await;
    let client = reqwest::Client::new();

    let r = client
        .get(format!("{base}/v1/categories"))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 503);
    let r = client
        .post(format!("{base}/v1/shift"))
        .json(&chair_request("low"))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 503);
    let health: Value = client
        .get(format!("{base}/healthz"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(health["status"], "ok");
    assert!(health["index_version"].is_null());

    state.install(load_engine(&paths).unwrap());

    let first = client
        .get(format!("{base}/v1/categories"))
        .send()
        .await
        .unwrap();
    assert_eq!(first.status().as_u16(), 200);
    let first = first.bytes().await.unwrap();
    let second = client
        .get(format!("{base}/v1/categories"))
        .send()
        .await
        .unwrap()
        .bytes()
        .await
        .unwrap();
    assert_eq!(first, second);
    let body: Value = serde_json::from_slice(&first).unwrap();
    let labels: Vec<&str> = body["categories"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(labels.len(), 12);
    assert!(labels.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(body["k"], 10);
    assert_eq!(body["extractor"]["kind"], "builtin");

    let header_version = index_header_version(&paths.index);
    let mut last = -1.0;
    for _ in 0..3 {
        let r = client.get(format!("{base}/healthz")).send().await.unwrap();
        assert_eq!(r.status().as_u16(), 200);
        let h: Value = r.json().await.unwrap();
        assert_eq!(h["status"], "ok");
        assert_eq!(h["index_version"], header_version);
        let up = h["uptime_seconds"].as_f64().unwrap();
        assert!(up >= last);
        last = up;
    }
}

fn index_header_version(path: &Path) -> u32 {
    let bytes = std::fs::read(path).unwrap();
    u32::from_le_bytes(bytes[8..12].try_into().unwrap())
}
