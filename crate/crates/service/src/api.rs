//! HTTP routes. Every error body is `{"error": "...", "field": "..."?}`.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use serde::Serialize;
use tokio::sync::broadcast::error::RecvError;

use crate::error::ServiceError;
use crate::jobs::{JobService, Subscription};
use crate::model::{ArtifactKind, Job, JobEvent, JobRequest, JobSummary, StyleEntry};

const MAX_UPLOAD: usize = 64 << 20;

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            error: error.into(),
            field: None,
        }
    }

    fn invalid(field: impl Into<String>, error: impl Into<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            error: error.into(),
            field: Some(field.into()),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::NotFound(msg) => ApiError::new(StatusCode::NOT_FOUND, msg),
            ServiceError::Conflict(msg) => ApiError::new(StatusCode::CONFLICT, msg),
            ServiceError::Invalid { field, message } => ApiError::invalid(field, message),
            ServiceError::BadId(_) | ServiceError::MissingArtifact(_) => {
                ApiError::new(StatusCode::NOT_FOUND, e.to_string())
            }
            other => {
                tracing::error!("request failed: {other}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string())
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(service: Arc<JobService>) -> Router {
    Router::new()
        .route("/api/styles", get(list_styles).post(upload_style))
        .route("/api/custom-maps", post(upload_custom_map))
        .route("/api/jobs", get(list_jobs).post(create_job))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/events", get(job_events))
        .route("/api/jobs/{id}/cancel", post(cancel_job))
        .route("/api/artifacts/purge", post(purge_artifacts))
        .route("/api/artifacts/{id}", get(get_artifact))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(service)
}

async fn list_styles(State(svc): State<Arc<JobService>>) -> Json<Vec<StyleEntry>> {
    Json(svc.styles())
}

struct Upload {
    text: Vec<(String, String)>,
    file: Option<Bytes>,
}

impl Upload {
    async fn read(mut mp: Multipart) -> ApiResult<Self> {
        let bad = |e: axum::extract::multipart::MultipartError| ApiError::new(StatusCode::BAD_REQUEST, e.body_text());
        let mut up = Upload {
            text: Vec::new(),
            file: None,
        };
        while let Some(field) = mp.next_field().await.map_err(bad)? {
            let name = field.name().unwrap_or_default().to_string();
            if name == "file" {
                up.file = Some(field.bytes().await.map_err(bad)?);
            } else {
                let value = field.text().await.map_err(bad)?;
                up.text.push((name, value));
            }
        }
        Ok(up)
    }

    fn text(&self, name: &str) -> ApiResult<&str> {
        self.text
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| ApiError::invalid(name, format!("missing multipart field {name:?}")))
    }

    fn file(&self) -> ApiResult<&[u8]> {
        self.file
            .as_deref()
            .ok_or_else(|| ApiError::invalid("file", "missing multipart field \"file\""))
    }
}

async fn upload_style(State(svc): State<Arc<JobService>>, mp: Multipart) -> ApiResult<(StatusCode, Json<StyleEntry>)> {
    let up = Upload::read(mp).await?;
    let (name, class, file) = (up.text("name")?, up.text("terrain_class")?, up.file()?);
    let entry = svc.add_style(name, class, file)?;
    Ok((StatusCode::CREATED, Json(entry)))
}

#[derive(Serialize)]
struct Created {
    id: String,
    width: usize,
    height: usize,
}

async fn upload_custom_map(State(svc): State<Arc<JobService>>, mp: Multipart) -> ApiResult<(StatusCode, Json<Created>)> {
    let up = Upload::read(mp).await?;
    let file = up.file()?;
    let (a, _) = svc.upload_map(ArtifactKind::Custom, file)?;
    Ok((
        StatusCode::CREATED,
        Json(Created {
            id: a.id,
            width: a.width,
            height: a.height,
        }),
    ))
}

async fn create_job(State(svc): State<Arc<JobService>>, body: Bytes) -> ApiResult<(StatusCode, Json<Job>)> {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let request: JobRequest = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.inner().to_string();
        if path == "." {
            ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                error: msg,
                field: None,
            }
        } else {
            ApiError::invalid(path, msg)
        }
    })?;
    let job = svc.create_job(request)?;
    Ok((StatusCode::CREATED, Json(job)))
}

async fn list_jobs(State(svc): State<Arc<JobService>>) -> Json<Vec<JobSummary>> {
    Json(svc.jobs().iter().map(JobSummary::from).collect())
}

async fn get_job(State(svc): State<Arc<JobService>>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    Ok(Json(svc.job(&id)?))
}

async fn cancel_job(State(svc): State<Arc<JobService>>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    Ok(Json(svc.cancel_job(&id)?))
}

async fn get_artifact(State(svc): State<Arc<JobService>>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = svc
        .store()
        .artifact_bytes(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("artifact {id:?} not found")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

#[derive(Serialize)]
struct Purged {
    removed: Vec<String>,
}

async fn purge_artifacts(State(svc): State<Arc<JobService>>) -> ApiResult<Json<Purged>> {
    Ok(Json(Purged {
        removed: svc.purge_artifacts()?,
    }))
}

async fn job_events(
    State(svc): State<Arc<JobService>>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let sub = svc.subscribe(&id)?;
    Ok(Sse::new(event_stream(sub)).keep_alive(KeepAlive::default()))
}

/// Replays the latest event, then forwards newer ones and ends after the terminal event.
fn event_stream(sub: Subscription) -> impl Stream<Item = Result<Event, Infallible>> {
    struct S {
        pending: Option<JobEvent>,
        rx: tokio::sync::broadcast::Receiver<JobEvent>,
        seen: u64,
        done: bool,
    }
    let init = S {
        seen: sub.last.seq(),
        pending: Some(sub.last),
        rx: sub.rx,
        done: false,
    };
    stream::unfold(init, |mut s| async move {
        if s.done {
            return None;
        }
        let event = match s.pending.take() {
            Some(e) => e,
            None => loop {
                match s.rx.recv().await {
                    Ok(e) if e.seq() > s.seen => break e,
                    Ok(_) | Err(RecvError::Lagged(_)) => continue,
                    Err(RecvError::Closed) => return None,
                }
            },
        };
        s.seen = event.seq();
        s.done = event.is_terminal();
        let sse = Event::default()
            .event(event.name())
            .id(event.seq().to_string())
            .json_data(&event)
            .expect("events serialize");
        Some((Ok(sse), s))
    })
}
