use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use seatrack_core::io::AnnotatedBox;

use crate::session::frame_png;
use crate::{Error, Result, Session};

pub type SharedSession = Arc<Mutex<Session>>;

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        let status = match &self {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            Error::BadRequest(_) => StatusCode::BAD_REQUEST,
            Error::Core(e) if e.is_input_error() => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Core(_) | Error::Server(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

fn lock(s: &SharedSession) -> MutexGuard<'_, Session> {
    // a panic inside a handler cannot leave the session half-edited: every
    // edit validates before it mutates
    s.lock().unwrap_or_else(|p| p.into_inner())
}

fn frame_json(i: usize, boxes: &[AnnotatedBox]) -> Json<serde_json::Value> {
    Json(json!({ "frame_id": i, "boxes": boxes }))
}

async fn sequence(State(s): State<SharedSession>) -> impl IntoResponse {
    Json(lock(&s).summary())
}

async fn get_frame(State(s): State<SharedSession>, Path(i): Path<usize>) -> Result<impl IntoResponse> {
    let s = lock(&s);
    Ok(frame_json(i, s.frame(i)?))
}

#[derive(Deserialize)]
struct FrameBody {
    boxes: Vec<AnnotatedBox>,
}

async fn put_frame(
    State(s): State<SharedSession>,
    Path(i): Path<usize>,
    Json(body): Json<FrameBody>,
) -> Result<impl IntoResponse> {
    let mut s = lock(&s);
    Ok(frame_json(i, s.put_frame(i, body.boxes)?))
}

async fn preassign(State(s): State<SharedSession>, Path(i): Path<usize>) -> Result<impl IntoResponse> {
    let proposal = lock(&s).preassign(i)?;
    Ok(frame_json(i, &proposal))
}

#[derive(Deserialize)]
struct NewId {
    new_id: u64,
}

async fn patch_box(
    State(s): State<SharedSession>,
    Path((i, id)): Path<(usize, u64)>,
    Json(body): Json<NewId>,
) -> Result<impl IntoResponse> {
    let b = lock(&s).set_box_id(i, id, body.new_id)?;
    Ok(Json(b))
}

async fn delete_box(State(s): State<SharedSession>, Path((i, id)): Path<(usize, u64)>) -> Result<impl IntoResponse> {
    let mut s = lock(&s);
    s.delete_box(i, id)?;
    Ok(frame_json(i, s.frame(i)?))
}

async fn save(State(s): State<SharedSession>) -> Result<impl IntoResponse> {
    let mut s = lock(&s);
    let path = s.save()?.to_path_buf();
    Ok(Json(json!({ "saved": path })))
}

async fn image(State(s): State<SharedSession>, Path(i): Path<usize>) -> Result<impl IntoResponse> {
    // decode outside the lock; frames on disk are read-only
    let sequence = lock(&s).sequence().clone();
    let png = tokio::task::spawn_blocking(move || frame_png(&sequence, i))
        .await
        .map_err(|e| Error::Server(std::io::Error::other(e)))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

/// The API routes, plus static files from `static_dir` for anything else.
pub fn router(session: SharedSession, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/sequence", get(sequence))
        .route("/api/frames/{i}", get(get_frame).put(put_frame))
        .route("/api/frames/{i}/image", get(image))
        .route("/api/frames/{i}/preassign", post(preassign))
        .route("/api/frames/{i}/boxes/{id}", patch(patch_box).delete(delete_box))
        .route("/api/save", post(save))
        .with_state(session);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub static_dir: Option<PathBuf>,
}

/// Bind and serve until the process is interrupted.
pub async fn serve(session: Session, cfg: ServeConfig) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(cfg.addr).await.map_err(|e| {
        Error::Server(std::io::Error::new(e.kind(), format!("cannot bind {}: {e}", cfg.addr)))
    })?;
    let app = router(Arc::new(Mutex::new(session)), cfg.static_dir);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
