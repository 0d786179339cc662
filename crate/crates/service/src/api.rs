use std::collections::BTreeSet;
use std::path::PathBuf;

use axum::body::{Body, Bytes};
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use rebound_core::adapters::Registry;
use rebound_core::geometry::{project_box_wireframe, Segment};
use rebound_core::session::{BoxSource, EditCommand, EditMode, FilterSpec, Pick, Selection};
use rebound_core::{LogBundle, Ray, Vec3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{ApiError, ApiResult};
use crate::state::{ApiSession, AppState};

/// Ray directions must be unit length within this before renormalization.
pub const RAY_UNIT_TOLERANCE: f64 = 1e-6;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/logs", get(list_logs))
        .route("/api/logs/{log}", get(log_info))
        .route("/api/logs/{log}/frames", get(frames))
        .route("/api/logs/{log}/frames/{frame}/pointcloud", get(pointcloud))
        .route("/api/logs/{log}/frames/{frame}/image/{camera}", get(image))
        .route("/api/logs/{log}/frames/{frame}/boxes", get(boxes))
        .route("/api/logs/{log}/frames/{frame}/wireframes", get(wireframes))
        .route("/api/sessions", post(open_session))
        .route(
            "/api/sessions/{s}",
            get(session_state).delete(close_session),
        )
        .route("/api/sessions/{s}/commands", post(command))
        .route("/api/sessions/{s}/undo", post(undo))
        .route("/api/sessions/{s}/redo", post(redo))
        .route("/api/sessions/{s}/filter", put(set_filter))
        .route("/api/sessions/{s}/mode", put(set_mode))
        .route("/api/sessions/{s}/pick", post(pick))
        .route("/api/sessions/{s}/drag", post(drag))
        .route("/api/sessions/{s}/rotate", post(rotate))
        .route("/api/sessions/{s}/save", post(save))
        .route("/api/sessions/{s}/export", post(export))
        .with_state(state)
}

/// Parses a JSON body, mapping every failure (syntax, shape, values) to 422.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::unprocessable(format!("invalid request body: {e}")))
}

fn require_frame(bundle: &LogBundle, frame: &str) -> ApiResult<()> {
    if bundle.has_frame(frame) {
        Ok(())
    } else {
        Err(ApiError::not_found(format!("unknown frame '{frame}'")))
    }
}

#[derive(Serialize)]
struct LogSummary {
    log_id: String,
    source_dataset: &'static str,
    frame_count: usize,
    box_count: usize,
    cameras: Vec<String>,
    prediction_sets: Vec<String>,
}

fn summary(log_id: &str, bundle: &LogBundle) -> LogSummary {
    LogSummary {
        log_id: log_id.to_string(),
        source_dataset: bundle.source_dataset.as_str(),
        frame_count: bundle.frames.len(),
        box_count: bundle.box_count(),
        cameras: bundle.cameras.iter().map(|c| c.name.clone()).collect(),
        prediction_sets: bundle.predictions.keys().cloned().collect(),
    }
}

async fn list_logs(State(state): State<AppState>) -> ApiResult<Json<Vec<LogSummary>>> {
    let mut out = Vec::new();
    for id in state.log_ids()? {
        match state.with_log(&id, |b| Ok(summary(&id, b))) {
            Ok(s) => out.push(s),
            Err(e) => log::warn!("skipping log {id}: {}", e.message),
        }
    }
    Ok(Json(out))
}

async fn log_info(
    State(state): State<AppState>,
    Path(log): Path<String>,
) -> ApiResult<Json<Value>> {
    state.with_log(&log, |b| {
        Ok(Json(json!({
            "summary": summary(&log, b),
            "vocabulary": b.vocabulary,
            "cameras": b.cameras,
        })))
    })
}

async fn frames(State(state): State<AppState>, Path(log): Path<String>) -> ApiResult<Json<Value>> {
    state.with_log(&log, |b| Ok(Json(json!(b.frames))))
}

fn payload_response(
    bundle: &LogBundle,
    rel: &str,
    content_type: &'static str,
) -> ApiResult<Response> {
    let payload = bundle
        .payloads
        .get(rel)
        .ok_or_else(|| ApiError::not_found(format!("no payload for {rel}")))?;
    let bytes = payload
        .read()
        .map_err(|e| ApiError::internal(format!("cannot read {rel}: {e}")))?;
    Ok(([(header::CONTENT_TYPE, content_type)], Body::from(bytes)).into_response())
}

async fn pointcloud(
    State(state): State<AppState>,
    Path((log, frame)): Path<(String, String)>,
) -> ApiResult<Response> {
    state.with_log(&log, |b| {
        require_frame(b, &frame)?;
        let rel = &b.frame(&frame).expect("frame checked").pointcloud_ref;
        payload_response(b, rel, "application/x-rbpc")
    })
}

async fn image(
    State(state): State<AppState>,
    Path((log, frame, camera)): Path<(String, String, String)>,
) -> ApiResult<Response> {
    state.with_log(&log, |b| {
        require_frame(b, &frame)?;
        let rel = b
            .frame(&frame)
            .expect("frame checked")
            .image_refs
            .get(&camera)
            .ok_or_else(|| {
                ApiError::not_found(format!(
                    "frame '{frame}' has no image for camera '{camera}'"
                ))
            })?;
        let lower = rel.to_ascii_lowercase();
        let content_type = if lower.ends_with(".png") {
            "image/png"
        } else if lower.ends_with(".jpg") || lower.ends_with(".jpeg") {
            "image/jpeg"
        } else {
            "application/octet-stream"
        };
        payload_response(b, rel, content_type)
    })
}

/// Filter query shared by the box and wireframe endpoints. Absent fields
/// show everything.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct FilterQuery {
    pub gt: Option<bool>,
    /// Comma-separated prediction set names.
    pub sets: Option<String>,
    pub min_conf: Option<f64>,
    pub max_range: Option<f64>,
    /// Comma-separated category labels.
    pub categories: Option<String>,
    pub camera: Option<String>,
}

fn split_list(s: &str) -> BTreeSet<String> {
    s.split(',')
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

impl FilterQuery {
    pub fn to_filter(&self, bundle: &LogBundle) -> ApiResult<FilterSpec> {
        let mut filter = FilterSpec::show_all(bundle);
        if let Some(gt) = self.gt {
            filter.show_ground_truth = gt;
        }
        if let Some(sets) = &self.sets {
            filter.visible_prediction_sets = split_list(sets);
        }
        if let Some(c) = self.min_conf {
            filter.min_confidence = c;
        }
        filter.max_range_m = self.max_range;
        if let Some(categories) = &self.categories {
            filter.visible_categories = split_list(categories);
        }
        filter.check().map_err(ApiError::unprocessable)?;
        Ok(filter)
    }
}

fn parse_query(raw: Result<Query<FilterQuery>, QueryRejection>) -> ApiResult<FilterQuery> {
    raw.map(|Query(q)| q)
        .map_err(|e| ApiError::unprocessable(format!("invalid query string: {}", e.body_text())))
}

async fn boxes(
    State(state): State<AppState>,
    Path((log, frame)): Path<(String, String)>,
    query: Result<Query<FilterQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let query = parse_query(query)?;
    state.with_log(&log, |b| {
        require_frame(b, &frame)?;
        let filter = query.to_filter(b)?;
        Ok(Json(json!(rebound_core::session::visible_boxes(
            b, &filter, &frame
        ))))
    })
}

/// Projected edges of one box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wireframe {
    pub instance_id: String,
    pub source: BoxSource,
    pub segments: Vec<Segment>,
}

async fn wireframes(
    State(state): State<AppState>,
    Path((log, frame)): Path<(String, String)>,
    query: Result<Query<FilterQuery>, QueryRejection>,
) -> ApiResult<Json<Vec<Wireframe>>> {
    let query = parse_query(query)?;
    let camera = query
        .camera
        .clone()
        .ok_or_else(|| ApiError::unprocessable("missing query parameter 'camera'"))?;
    state.with_log(&log, |b| {
        require_frame(b, &frame)?;
        let cam = b
            .camera(&camera)
            .ok_or_else(|| ApiError::not_found(format!("unknown camera '{camera}'")))?;
        let filter = query.to_filter(b)?;
        Ok(Json(
            rebound_core::session::visible_boxes(b, &filter, &frame)
                .into_iter()
                .map(|v| Wireframe {
                    instance_id: v.bbox.instance_id.clone(),
                    source: v.source,
                    segments: project_box_wireframe(cam, v.bbox),
                })
                .collect(),
        ))
    })
}

/// Session snapshot returned by every session endpoint.
#[derive(Debug, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub log_id: String,
    pub mode: EditMode,
    pub filter: FilterSpec,
    pub selection: Option<Selection>,
    pub dirty_frames: Vec<String>,
    pub undo_depth: usize,
    pub redo_depth: usize,
    pub vocabulary: Vec<String>,
}

fn view(s: &ApiSession) -> SessionView {
    SessionView {
        session_id: s.id.clone(),
        log_id: s.log_id.clone(),
        mode: s.session.mode(),
        filter: s.session.filter().clone(),
        selection: s.session.selection().cloned(),
        dirty_frames: s.session.dirty_frames().iter().cloned().collect(),
        undo_depth: s.session.undo_depth(),
        redo_depth: s.session.redo_depth(),
        vocabulary: s.session.bundle().vocabulary.clone(),
    }
}

#[derive(Deserialize)]
struct OpenRequest {
    log: String,
}

async fn open_session(
    State(state): State<AppState>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let req: OpenRequest = parse_body(&body)?;
    // Loading the log is blocking file I/O.
    let handle = tokio::task::spawn_blocking(move || state.open_session(&req.log))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let s = handle.lock();
    Ok((StatusCode::CREATED, Json(view(&s))))
}

async fn session_state(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionView>> {
    let handle = state.session(&id)?;
    let s = handle.lock();
    Ok(Json(view(&s)))
}

async fn close_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    state.close_session(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn command(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionView>> {
    let command: EditCommand = parse_body(&body)?;
    let handle = state.session(&id)?;
    let mut s = handle.lock();
    s.session.apply(command)?;
    Ok(Json(view(&s)))
}

#[derive(Serialize)]
struct HistoryResponse {
    changed: bool,
    session: SessionView,
}

async fn undo(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<HistoryResponse>> {
    let handle = state.session(&id)?;
    let mut s = handle.lock();
    let changed = s.session.undo();
    Ok(Json(HistoryResponse {
        changed,
        session: view(&s),
    }))
}

async fn redo(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<HistoryResponse>> {
    let handle = state.session(&id)?;
    let mut s = handle.lock();
    let changed = s.session.redo();
    Ok(Json(HistoryResponse {
        changed,
        session: view(&s),
    }))
}

async fn set_filter(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionView>> {
    let filter: FilterSpec = parse_body(&body)?;
    let handle = state.session(&id)?;
    let mut s = handle.lock();
    s.session.set_filter(filter)?;
    Ok(Json(view(&s)))
}

#[derive(Deserialize)]
struct ModeRequest {
    mode: EditMode,
}

async fn set_mode(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionView>> {
    let req: ModeRequest = parse_body(&body)?;
    let handle = state.session(&id)?;
    let mut s = handle.lock();
    s.session.set_mode(req.mode);
    Ok(Json(view(&s)))
}

/// A ray as sent by a client; the direction must already be unit length.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RayPayload {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl RayPayload {
    pub fn to_ray(&self, field: &str) -> ApiResult<Ray> {
        let n = self.direction.norm();
        if !n.is_finite() || (n - 1.0).abs() > RAY_UNIT_TOLERANCE {
            return Err(ApiError::unprocessable(format!(
                "{field}: direction must be a unit vector, got norm {n}"
            )));
        }
        Ray::new(self.origin, self.direction)
            .ok_or_else(|| ApiError::unprocessable(format!("{field}: non-finite ray")))
    }
}

#[derive(Deserialize)]
struct PickRequest {
    frame_id: String,
    ray: RayPayload,
}

#[derive(Serialize)]
struct PickResponse {
    pick: Option<Pick>,
    session: SessionView,
}

async fn pick(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<PickResponse>> {
    let req: PickRequest = parse_body(&body)?;
    let ray = req.ray.to_ray("ray")?;
    let handle = state.session(&id)?;
    let mut s = handle.lock();
    let pick = s.session.select_at(&ray, &req.frame_id)?;
    Ok(Json(PickResponse {
        pick,
        session: view(&s),
    }))
}

#[derive(Deserialize)]
struct DragRequest {
    frame_id: String,
    instance_id: String,
    #[serde(default)]
    source: BoxSource,
    grab: RayPayload,
    release: RayPayload,
    #[serde(default)]
    view_dir: Option<Vec3>,
}

#[derive(Serialize)]
struct EditResponse {
    command: EditCommand,
    session: SessionView,
}

async fn drag(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<EditResponse>> {
    let req: DragRequest = parse_body(&body)?;
    let grab = req.grab.to_ray("grab")?;
    let release = req.release.to_ray("release")?;
    let handle = state.session(&id)?;
    let mut s = handle.lock();
    let command = s.session.drag(
        &req.frame_id,
        &req.instance_id,
        &req.source,
        &grab,
        &release,
        req.view_dir.as_ref(),
    )?;
    Ok(Json(EditResponse {
        command,
        session: view(&s),
    }))
}

#[derive(Deserialize)]
struct RotateRequest {
    frame_id: String,
    instance_id: String,
    #[serde(default)]
    source: BoxSource,
    delta_yaw: f64,
}

async fn rotate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<EditResponse>> {
    let req: RotateRequest = parse_body(&body)?;
    let handle = state.session(&id)?;
    let mut s = handle.lock();
    let command = s
        .session
        .rotate(&req.frame_id, &req.instance_id, &req.source, req.delta_yaw)?;
    Ok(Json(EditResponse {
        command,
        session: view(&s),
    }))
}

async fn save(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let handle = state.session(&id)?;
    let (written, log_id) = {
        let mut s = handle.lock();
        let root = s.root.clone();
        (s.session.save(&root)?, s.log_id.clone())
    };
    state.invalidate(&log_id);
    Ok(Json(json!({ "written": written })))
}

#[derive(Deserialize)]
struct ExportRequest {
    dataset: String,
    output: PathBuf,
}

async fn export(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let req: ExportRequest = parse_body(&body)?;
    let registry = Registry::default();
    let adapter = registry.get(&req.dataset).ok_or_else(|| {
        let known: Vec<_> = registry.ids().collect();
        ApiError::unprocessable(format!(
            "unknown dataset '{}', expected one of {}",
            req.dataset,
            known.join(", ")
        ))
    })?;
    let handle = state.session(&id)?;
    let s = handle.lock();
    let converted = adapter.export(s.session.bundle(), &req.output)?;
    let warnings: Vec<String> = converted.warnings.iter().map(ToString::to_string).collect();
    Ok(Json(json!({
        "dataset": adapter.id(),
        "output": req.output,
        "warnings": warnings,
    })))
}
