//! HTTP backend for the review UI.
//!
//! * `GET /api/documents` lists documents found in the bundle directory.
//! * `GET /api/documents/{id}/image` returns the PNG.
//! * `GET /api/documents/{id}/graph` returns the extraction JSON.
//! * `PUT /api/documents/{id}/corrected` validates a corrected graph and
//!   stores it as `<id>.corrected.json`; `GET` on the same path reads it back.
//!
//! Everything else is looked up in the static asset directory, if any.

use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;

use flowextract::graph::FlowGraph;

use crate::{Failure, ServeArgs};

#[derive(Debug, Clone)]
pub struct AppState {
    pub dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    tmp_counter: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(dir: impl Into<PathBuf>, static_dir: Option<PathBuf>) -> Self {
        AppState { dir: dir.into(), static_dir, tmp_counter: Arc::new(AtomicU64::new(0)) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DocumentEntry {
    pub id: String,
    pub image: String,
    pub graph: String,
    pub corrected: bool,
}

/// Documents are `<id>.png` files with a `<id>.graph.json` (preferred) or
/// `<id>.json` next to them.
pub fn list_documents(dir: &Path) -> std::io::Result<Vec<DocumentEntry>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir)? {
        let p = e?.path();
        if !p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")) {
            continue;
        }
        let Some(id) = p.file_stem().and_then(|s| s.to_str()) else { continue };
        let Some(graph) = [format!("{id}.graph.json"), format!("{id}.json")].into_iter().find(|g| dir.join(g).is_file()) else {
            continue;
        };
        let image = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let corrected = dir.join(format!("{id}.corrected.json")).is_file();
        out.push(DocumentEntry { id: id.to_string(), image, graph, corrected });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

fn find(state: &AppState, id: &str) -> Result<DocumentEntry, Response> {
    let docs = list_documents(&state.dir).map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    docs.into_iter().find(|d| d.id == id).ok_or_else(|| error(StatusCode::NOT_FOUND, format!("unknown document `{id}`")))
}

fn file_response(path: &Path, content_type: &str) -> Response {
    match std::fs::read(path) {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type.to_string())], bytes).into_response(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => error(StatusCode::NOT_FOUND, "not found"),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn documents(State(s): State<AppState>) -> Response {
    match list_documents(&s.dir) {
        Ok(d) => Json(d).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn image(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match find(&s, &id) {
        Ok(d) => file_response(&s.dir.join(d.image), "image/png"),
        Err(r) => r,
    }
}

async fn graph(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match find(&s, &id) {
        Ok(d) => file_response(&s.dir.join(d.graph), "application/json"),
        Err(r) => r,
    }
}

async fn get_corrected(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match find(&s, &id) {
        Ok(d) => file_response(&s.dir.join(format!("{}.corrected.json", d.id)), "application/json"),
        Err(r) => r,
    }
}

/// Validation shared with the review UI: the graph schema plus referential
/// integrity.
pub fn validate_corrected(bytes: &[u8]) -> Result<FlowGraph, String> {
    FlowGraph::parse(bytes).map_err(|e| e.to_string())
}

async fn put_corrected(State(s): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> Response {
    let d = match find(&s, &id) {
        Ok(d) => d,
        Err(r) => return r,
    };
    if let Err(m) = validate_corrected(&body) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, m);
    }
    let target = s.dir.join(format!("{}.corrected.json", d.id));
    let n = s.tmp_counter.fetch_add(1, Ordering::Relaxed);
    let tmp = s.dir.join(format!(".{}.corrected.{}.{n}.tmp", d.id, std::process::id()));
    let written = std::fs::write(&tmp, &body).and_then(|_| std::fs::rename(&tmp, &target));
    match written {
        Ok(()) => (StatusCode::OK, Json(serde_json::json!({ "stored": format!("{}.corrected.json", d.id) }))).into_response(),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
        }
    }
}

fn content_type(p: &Path) -> &'static str {
    match p.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" => "application/json",
        "png" => "image/png",
        "svg" => "image/svg+xml",
        "ico" => "image/x-icon",
        "map" => "application/json",
        _ => "application/octet-stream",
    }
}

async fn static_asset(State(s): State<AppState>, uri: Uri) -> Response {
    let Some(root) = &s.static_dir else { return error(StatusCode::NOT_FOUND, "not found") };
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return error(StatusCode::NOT_FOUND, "not found");
    }
    let p = root.join(rel);
    file_response(&p, content_type(&p))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/documents", get(documents))
        .route("/api/documents/{id}/image", get(image))
        .route("/api/documents/{id}/graph", get(graph))
        .route("/api/documents/{id}/corrected", get(get_corrected).put(put_corrected))
        .fallback(static_asset)
        .with_state(state)
}

pub fn cmd_serve(a: &ServeArgs) -> Result<(), Failure> {
    if !a.dir.is_dir() {
        return Err(Failure::input("serve", format!("{} is not a directory", a.dir.display())));
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::internal("serve", e.to_string()))?;
    rt.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener =
            tokio::net::TcpListener::bind(&addr).await.map_err(|e| Failure::input("serve", format!("cannot bind {addr}: {e}")))?;
        eprintln!("serving {} on http://{addr}", a.dir.display());
        axum::serve(listener, router(AppState::new(&a.dir, a.static_dir.clone())))
            .await
            .map_err(|e| Failure::internal("serve", e.to_string()))
    })
}
