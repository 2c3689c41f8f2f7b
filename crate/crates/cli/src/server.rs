//! HTTP render service.
//!
//! `GET /meta`, `GET /render` and `GET /masks` over plain HTTP/1.1. Renders run on
//! blocking threads behind a semaphore sized to the machine's hardware threads.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use dylin::checkpoint::AnyModel;
use dylin::image::Image;
use dylin::model::{check_alpha, render_view, RayModel};
use dylin::ray::TimeStamp;
use dylin::scene::OracleScene;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

use crate::camera::{parse_alpha, parse_camera};

/// Largest accepted width or height.
pub const MAX_SIDE: usize = 1024;

const MASK_BOUNDARY: &str = "dylin-mask-part";

pub struct Entry {
    pub id: String,
    pub model: AnyModel,
    pub scene: OracleScene,
}

struct AppState {
    entries: Vec<Entry>,
    workers: Semaphore,
}

impl AppState {
    fn find(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }
}

pub fn router(entries: Vec<Entry>) -> Router {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let state = Arc::new(AppState { entries, workers: Semaphore::new(threads) });
    Router::new()
        .route("/meta", get(meta))
        .route("/render", get(render))
        .route("/masks", get(masks))
        .with_state(state)
}

pub async fn serve(listener: TcpListener, entries: Vec<Entry>) -> std::io::Result<()> {
    axum::serve(listener, router(entries)).await
}

#[derive(Debug)]
enum ApiError {
    BadRequest(String),
    NotFound(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

async fn meta(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let list: Vec<_> = state
        .entries
        .iter()
        .map(|e| {
            let mut item = json!({
                "id": e.id,
                "variant": e.model.base_config().variant.name(),
                "model": e.model.label(),
                "scene": e.scene.name,
                "config": e.model.config_json(),
            });
            if e.model.n_attr() > 0 {
                item["n_attr"] = json!(e.model.n_attr());
            }
            item
        })
        .collect();
    Json(json!({ "checkpoints": list }))
}

struct Job {
    entry: usize,
    t: f64,
    clamped: bool,
    width: usize,
    height: usize,
    cam: String,
    alpha: Vec<f64>,
}

fn bad(msg: impl Into<String>) -> ApiError {
    ApiError::BadRequest(msg.into())
}

fn parse_number<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str, default: T) -> Result<T, ApiError> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v.trim().parse().map_err(|_| bad(format!("query parameter {key}={v:?} is not a number"))),
    }
}

fn parse_job(state: &AppState, q: &HashMap<String, String>) -> Result<Job, ApiError> {
    let id = match q.get("ckpt") {
        Some(id) => id.as_str(),
        None if state.entries.len() == 1 => state.entries[0].id.as_str(),
        None => return Err(bad("missing query parameter ckpt")),
    };
    let entry = state.find(id).ok_or_else(|| ApiError::NotFound(format!("unknown checkpoint {id:?}")))?;
    let raw_t: f64 = parse_number(q, "t", 0.5)?;
    if !raw_t.is_finite() {
        return Err(bad("t must be finite"));
    }
    let (t, clamped) = TimeStamp::clamped(raw_t);
    let width: usize = parse_number(q, "w", 64)?;
    let height: usize = parse_number(q, "h", 64)?;
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        return Err(bad(format!("w and h must be in 1..={MAX_SIDE}")));
    }
    let n_attr = state.entries[entry].model.n_attr();
    let alpha = match q.get("alpha").map(String::as_str) {
        None | Some("") => vec![0.0; n_attr],
        Some(s) => parse_alpha(s).map_err(bad)?,
    };
    check_alpha(n_attr, &alpha).map_err(|e| bad(e.to_string()))?;
    let cam = q.get("cam").cloned().unwrap_or_else(|| "front".into());
    Ok(Job { entry, t: t.get(), clamped, width, height, cam, alpha })
}

struct Rendered {
    frame: Image,
    masks: Vec<Image>,
    millis: f64,
}

async fn run_job(state: Arc<AppState>, job: Job, with_masks: bool) -> Result<Rendered, ApiError> {
    let entry = &state.entries[job.entry];
    if with_masks && entry.model.n_attr() == 0 {
        return Err(bad(format!("checkpoint {:?} has no attribute masks", entry.id)));
    }
    let cam = parse_camera(&job.cam, &entry.scene, job.width, job.height).map_err(bad)?;
    let _permit = state.workers.acquire().await.map_err(|e| ApiError::Internal(e.to_string()))?;
    let worker_state = Arc::clone(&state);
    tokio::task::spawn_blocking(move || {
        let start = Instant::now();
        let model = &worker_state.entries[job.entry].model;
        let (frame, mask_img) =
            render_view(model, &cam, job.t, &job.alpha).map_err(|e| ApiError::Internal(e.to_string()))?;
        let mut masks = Vec::new();
        if with_masks {
            if let Some(m) = mask_img {
                for slot in 0..=m.n_attr {
                    masks.push(
                        Image::from_gray(m.width, m.height, m.slot(slot))
                            .map_err(|e| ApiError::Internal(e.to_string()))?,
                    );
                }
            }
        }
        Ok(Rendered { frame, masks, millis: start.elapsed().as_secs_f64() * 1e3 })
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn common_headers(job_clamped: bool, millis: f64) -> HeaderMap {
    let mut h = HeaderMap::new();
    h.insert("x-render-millis", HeaderValue::from_str(&format!("{millis:.3}")).expect("ascii"));
    if job_clamped {
        h.insert("x-clamped", HeaderValue::from_static("t"));
    }
    h
}

fn png(img: &Image) -> Result<Vec<u8>, ApiError> {
    img.encode_png().map_err(|e| ApiError::Internal(e.to_string()))
}

async fn render(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let job = parse_job(&state, &q)?;
    let clamped = job.clamped;
    let out = run_job(state, job, false).await?;
    let mut headers = common_headers(clamped, out.millis);
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    Ok((headers, png(&out.frame)?).into_response())
}

async fn masks(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let job = parse_job(&state, &q)?;
    let clamped = job.clamped;
    let out = run_job(state, job, true).await?;
    let mut body = Vec::new();
    for (slot, img) in out.masks.iter().enumerate() {
        body.extend_from_slice(
            format!(
                "--{MASK_BOUNDARY}\r\nContent-Type: image/png\r\nContent-Disposition: inline; name=\"mask{slot}\"\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(&png(img)?);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{MASK_BOUNDARY}--\r\n").as_bytes());
    let mut headers = common_headers(clamped, out.millis);
    headers.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_str(&format!("multipart/mixed; boundary={MASK_BOUNDARY}")).expect("ascii"),
    );
    Ok((headers, body).into_response())
}
