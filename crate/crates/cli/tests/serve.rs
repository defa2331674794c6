use std::path::Path;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

use flowextract_cli::serve::{list_documents, router, AppState};

const GRAPH: &str = r#"{
  "nodes": [
    {"id": "n001", "type": "terminator", "bbox": [10, 10, 40, 20], "text": "start"},
    {"id": "n002", "type": "process", "bbox": [10, 60, 40, 20], "text": "doe"}
  ],
  "edges": [{"source": "n001", "target": "n002", "type": "flow"}],
  "diagnostics": []
}
"#;

fn fixture(dir: &Path) {
    std::fs::write(dir.join("a.png"), b"\x89PNG fake").unwrap();
    std::fs::write(dir.join("a.graph.json"), GRAPH).unwrap();
    std::fs::write(dir.join("b.png"), b"\x89PNG fake").unwrap();
    std::fs::write(dir.join("b.json"), GRAPH).unwrap();
    // No graph next to it, so not a document.
    std::fs::write(dir.join("orphan.png"), b"x").unwrap();
}

async fn call(state: &AppState, method: Method, uri: &str, body: &str) -> (StatusCode, Option<String>, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body.to_string())).unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let ct = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, ct, bytes)
}

#[tokio::test]
async fn lists_and_serves_documents() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let st = AppState::new(tmp.path(), None);

    let (status, _, body) = call(&st, Method::GET, "/api/documents", "").await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let ids: Vec<_> = v.as_array().unwrap().iter().map(|d| d["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["a", "b"]);
    assert_eq!(v[1]["graph"], "b.json");
    assert_eq!(v[0]["corrected"], false);

    let (status, ct, body) = call(&st, Method::GET, "/api/documents/a/image", "").await;
    assert_eq!((status, ct.as_deref()), (StatusCode::OK, Some("image/png")));
    assert_eq!(body, b"\x89PNG fake");

    let (status, _, body) = call(&st, Method::GET, "/api/documents/a/graph", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, GRAPH.as_bytes());

    for uri in ["/api/documents/orphan/graph", "/api/documents/zzz/image", "/api/documents/a/corrected"] {
        let (status, _, body) = call(&st, Method::GET, uri, "").await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn corrected_graph_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let st = AppState::new(tmp.path(), None);
    let corrected = GRAPH.replace("\"doe\"", "\"doe iets\"");

    let (status, _, body) = call(&st, Method::PUT, "/api/documents/a/corrected", &corrected).await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["stored"], "a.corrected.json");

    let (status, _, body) = call(&st, Method::GET, "/api/documents/a/corrected", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, corrected.as_bytes());
    assert_eq!(std::fs::read_to_string(tmp.path().join("a.graph.json")).unwrap(), GRAPH);
    assert!(list_documents(tmp.path()).unwrap()[0].corrected);

    let leftovers: Vec<_> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[tokio::test]
async fn invalid_corrections_are_rejected_without_writing() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let st = AppState::new(tmp.path(), None);
    let dangling = GRAPH.replace("\"target\": \"n002\"", "\"target\": \"n009\"");
    for body in [dangling.as_str(), "not json", "{}", r#"{"nodes": [], "edges": [], "diagnostics": [], "extra": 1}"#] {
        let (status, _, resp) = call(&st, Method::PUT, "/api/documents/b/corrected", body).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        let v: serde_json::Value = serde_json::from_slice(&resp).unwrap();
        assert!(!v["error"].as_str().unwrap().is_empty());
    }
    assert!(!tmp.path().join("b.corrected.json").exists());

    let (status, _, _) = call(&st, Method::PUT, "/api/documents/nope/corrected", GRAPH).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(!tmp.path().join("nope.corrected.json").exists());
}

#[tokio::test]
async fn static_assets_stay_inside_their_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let docs = tmp.path().join("docs");
    let web = tmp.path().join("web");
    std::fs::create_dir_all(web.join("assets")).unwrap();
    std::fs::create_dir_all(&docs).unwrap();
    std::fs::write(web.join("index.html"), "<html></html>").unwrap();
    std::fs::write(web.join("assets/app.js"), "let x;").unwrap();
    std::fs::write(tmp.path().join("secret.txt"), "s").unwrap();
    let st = AppState::new(&docs, Some(web));

    let (status, ct, body) = call(&st, Method::GET, "/", "").await;
    assert_eq!(status, StatusCode::OK);
    assert!(ct.unwrap().starts_with("text/html"));
    assert_eq!(body, b"<html></html>");

    let (status, ct, _) = call(&st, Method::GET, "/assets/app.js", "").await;
    assert_eq!((status, ct.as_deref()), (StatusCode::OK, Some("text/javascript")));

    for uri in ["/../secret.txt", "/assets/../../secret.txt", "/%2e%2e/secret.txt", "/missing.css"] {
        let (status, _, _) = call(&st, Method::GET, uri, "").await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }

    let bare = AppState::new(&docs, None);
    let (status, _, _) = call(&bare, Method::GET, "/", "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
