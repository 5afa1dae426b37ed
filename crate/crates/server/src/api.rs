//! HTTP routes.
//!
//! | method | path | body / query | success |
//! |---|---|---|---|
//! | POST | `/graph` | graph definition (TOML) | 200 validation report |
//! | GET | `/graph` | | 200 definition (TOML) |
//! | POST | `/students` | `{"id"}` | 201 `{"id"}` |
//! | GET | `/students` | | 200 `{"students": [...]}` |
//! | POST | `/observations` | `{student, exercise, outcome, at?, dry_run?}` | 200 per-skill updates |
//! | GET | `/students/{id}/skills/{skill}` | `at` | 200 posterior with evidence trace |
//! | GET | `/students/{id}/skills` | `at` | 200 summaries |
//! | GET | `/students/{id}/recommendations` | `lo`, `hi`, `at` | 200 ranked exercises |
//! | GET | `/healthz` | | 200 |
//!
//! Failures carry `{"code", "message", "detail"}`. POST requests with an
//! `Idempotency-Key` header are executed once per key; repeats get the
//! stored response with `Idempotent-Replayed: true`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use pdt_core::SkillId;
use pdt_tracker::{StudentId, Timestamp, TrackerError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use crate::service::ErrorBody;
use crate::service::{Cached, NewStudent, ObservationRequest, Service};

pub const IDEMPOTENCY_KEY: &str = "idempotency-key";
pub const REPLAYED: &str = "idempotent-replayed";
const JSON: &str = "application/json";

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Value) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), detail } }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message, Value::Null)
    }

    fn into_cached(self) -> Cached {
        Cached { status: self.status.as_u16(), content_type: JSON, body: to_json(&self.body) }
    }
}

impl From<TrackerError> for ApiError {
    fn from(e: TrackerError) -> Self {
        use pdt_core::Error as Core;
        let message = e.to_string();
        let (status, code, detail) = match &e {
            TrackerError::UnknownStudent(id) => (StatusCode::NOT_FOUND, "unknown_student", json!({ "student": id })),
            TrackerError::UnknownSkill(id) => (StatusCode::NOT_FOUND, "unknown_skill", json!({ "skill": id })),
            TrackerError::UnknownExercise(id) => (StatusCode::NOT_FOUND, "unknown_exercise", json!({ "exercise": id })),
            TrackerError::StudentExists(id) => (StatusCode::CONFLICT, "student_exists", json!({ "student": id })),
            TrackerError::InvalidId(id) => (StatusCode::BAD_REQUEST, "invalid_id", json!({ "id": id })),
            TrackerError::TimestampRegression { student, last, got } => (
                StatusCode::CONFLICT,
                "timestamp_regression",
                json!({ "student": student, "last": last, "got": got }),
            ),
            TrackerError::InvalidGraph(report) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_graph", serde_json::to_value(report).expect("json"))
            }
            TrackerError::GraphSyntax(_) => (StatusCode::UNPROCESSABLE_ENTITY, "graph_syntax", Value::Null),
            TrackerError::CorruptRecord { path, offset, .. } => (
                StatusCode::INTERNAL_SERVER_ERROR,
                "corrupt_record",
                json!({ "path": path.display().to_string(), "offset": offset }),
            ),
            TrackerError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io", Value::Null),
            TrackerError::Core(c) => match c {
                Core::AllZero => (StatusCode::UNPROCESSABLE_ENTITY, "contradictory_observation", Value::Null),
                Core::NegativeLikelihood { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "negative_likelihood", Value::Null),
                Core::InvalidArgument(_) => (StatusCode::BAD_REQUEST, "invalid_argument", Value::Null),
                _ => (StatusCode::INTERNAL_SERVER_ERROR, "numeric", Value::Null),
            },
        };
        if status.is_server_error() {
            tracing::error!(%message, code, "request failed");
        }
        Self::new(status, code, message, detail)
    }
}

impl From<PathRejection> for ApiError {
    fn from(e: PathRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        cached_response(self.into_cached(), false)
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("response bodies serialize")
}

fn ok_json<T: Serialize>(status: StatusCode, value: &T) -> Cached {
    Cached { status: status.as_u16(), content_type: JSON, body: to_json(value) }
}

fn cached_response(c: Cached, replayed: bool) -> Response {
    let mut res = (StatusCode::from_u16(c.status).expect("valid status"), c.body).into_response();
    res.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(c.content_type));
    if replayed {
        res.headers_mut().insert(REPLAYED, HeaderValue::from_static("true"));
    }
    res
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn json_result<T: Serialize>(status: StatusCode, r: Result<T, ApiError>) -> Cached {
    match r {
        Ok(v) => ok_json(status, &v),
        Err(e) => e.into_cached(),
    }
}

/// Runs a mutation under the request key, if the client sent one.
fn mutate(service: &Service, path: &str, headers: &HeaderMap, body: &Bytes, f: impl FnOnce() -> Cached) -> Response {
    let key = match headers.get(IDEMPOTENCY_KEY).map(|v| v.to_str()) {
        None => None,
        Some(Ok(k)) if !k.is_empty() => Some(k),
        Some(_) => return ApiError::bad_request("Idempotency-Key must be non-empty visible ASCII").into_response(),
    };
    let mut request = Vec::with_capacity(path.len() + 1 + body.len());
    request.extend_from_slice(path.as_bytes());
    request.push(0);
    request.extend_from_slice(body);
    let (reply, replayed) = service.idempotent(key, &request, f);
    cached_response(reply, replayed)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtQuery {
    at: Option<Timestamp>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WindowQuery {
    at: Option<Timestamp>,
    #[serde(default = "default_lo")]
    lo: f64,
    #[serde(default = "default_hi")]
    hi: f64,
}

fn default_lo() -> f64 {
    0.4
}

fn default_hi() -> f64 {
    0.8
}

type Shared = State<Arc<Service>>;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/graph", get(get_graph).post(post_graph))
        .route("/students", get(list_students).post(post_student))
        .route("/observations", post(post_observation))
        .route("/students/{id}/skills", get(get_skills))
        .route("/students/{id}/skills/{skill}", get(get_skill))
        .route("/students/{id}/recommendations", get(get_recommendations))
        .with_state(service)
}

async fn healthz() -> Response {
    cached_response(ok_json(StatusCode::OK, &json!({ "status": "ok" })), false)
}

async fn get_graph(State(s): Shared) -> Response {
    let mut res = s.graph_text().into_response();
    res.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("application/toml"));
    res
}

async fn post_graph(State(s): Shared, headers: HeaderMap, body: Bytes) -> Response {
    mutate(&s, "/graph", &headers, &body, || {
        let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("graph definition must be UTF-8"));
        json_result(StatusCode::OK, text.and_then(|t| Ok(s.put_graph(t)?)))
    })
}

async fn list_students(State(s): Shared) -> Response {
    cached_response(ok_json(StatusCode::OK, &json!({ "students": s.tracker().students() })), false)
}

async fn post_student(State(s): Shared, headers: HeaderMap, body: Bytes) -> Response {
    mutate(&s, "/students", &headers, &body, || {
        json_result(StatusCode::CREATED, parse_json::<NewStudent>(&body).and_then(|req| Ok(s.create_student(&req)?)))
    })
}

async fn post_observation(State(s): Shared, headers: HeaderMap, body: Bytes) -> Response {
    mutate(&s, "/observations", &headers, &body, || {
        json_result(StatusCode::OK, parse_json::<ObservationRequest>(&body).and_then(|req| Ok(s.observe(&req)?)))
    })
}

async fn get_skills(
    State(s): Shared,
    path: Result<Path<StudentId>, PathRejection>,
    query: Result<Query<AtQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Path(id) = path?;
    let Query(q) = query?;
    Ok(cached_response(ok_json(StatusCode::OK, &s.skills(&id, q.at)?), false))
}

async fn get_skill(
    State(s): Shared,
    path: Result<Path<(StudentId, SkillId)>, PathRejection>,
    query: Result<Query<AtQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Path((id, skill)) = path?;
    let Query(q) = query?;
    Ok(cached_response(ok_json(StatusCode::OK, &s.posterior(&id, &skill, q.at)?), false))
}

async fn get_recommendations(
    State(s): Shared,
    path: Result<Path<StudentId>, PathRejection>,
    query: Result<Query<WindowQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Path(id) = path?;
    let Query(q) = query?;
    Ok(cached_response(ok_json(StatusCode::OK, &s.recommend(&id, q.at, q.lo, q.hi)?), false))
}
