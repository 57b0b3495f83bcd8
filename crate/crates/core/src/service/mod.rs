//! HTTP backend for the review workbench.
//!
//! Routes:
//!
//! ```text
//! POST /sessions                  {reviewer_id, sentence_ids, seed} -> Session
//! GET  /sessions/{id}             Session
//! GET  /sessions/{id}/items/{k}   {source, original, condition, suggestion?, ...}
//! POST /events                    ReviewRecord
//! GET  /export?session=           JSON lines
//! ```
//!
//! Errors are `{code, field?, message}` with a 4xx or 5xx status.

mod session;
mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use session::{get_suggestion, Session, SessionItem, Suggester, Suggestion};
pub use store::{read_records, Appended, Store};

use crate::corpus::Triple;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::stats::{Condition, ReviewRecord};
use crate::textnorm::{normalize_punctuation, Vocabulary};
use crate::training::{Corrector, NeuralCorrector};

/// Greedy decoding with a loaded checkpoint.
pub struct ModelSuggester {
    pub model: Model,
    pub vocab: Vocabulary,
    pub checkpoint_id: String,
}

impl Suggester for ModelSuggester {
    fn checkpoint_id(&self) -> &str {
        &self.checkpoint_id
    }

    fn propose(&self, source: &str, original: &str) -> Result<String> {
        NeuralCorrector {
            model: &self.model,
            vocab: &self.vocab,
        }
        .correct(source, original)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, field: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_owned(),
            field: field.map(str::to_owned),
            message: message.into(),
        }
    }

    fn invalid(field: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", Some(field), message)
    }

    fn not_found(field: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", Some(field), message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", None, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Shared state behind the router.
pub struct Service {
    sentences: HashMap<String, Triple>,
    suggester: Arc<dyn Suggester>,
    cache: Mutex<HashMap<(String, String), Option<Suggestion>>>,
    store: Store,
}

impl Service {
    /// `sentences` are addressed by triple id.
    pub fn new(sentences: Vec<Triple>, suggester: Arc<dyn Suggester>, store: Store) -> Self {
        Self {
            sentences: sentences.into_iter().map(|t| (t.id.clone(), t)).collect(),
            suggester,
            cache: Mutex::new(HashMap::new()),
            store,
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// Cached by (checkpoint, sentence).
    pub fn suggestion(&self, sentence_id: &str) -> Result<Option<Suggestion>> {
        let key = (self.suggester.checkpoint_id().to_owned(), sentence_id.to_owned());
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let t = self
            .sentences
            .get(sentence_id)
            .ok_or_else(|| Error::invalid(format!("unknown sentence `{sentence_id}`")))?;
        let s = get_suggestion(self.suggester.as_ref(), sentence_id, &t.source, &t.original)?;
        self.cache.lock().expect("cache lock").insert(key, s.clone());
        Ok(s)
    }

    pub fn create_session(&self, reviewer_id: &str, sentence_ids: &[String], seed: u64) -> ApiResult<Session> {
        if reviewer_id.trim().is_empty() {
            return Err(ApiError::invalid("reviewer_id", "must not be empty"));
        }
        if let Some(bad) = sentence_ids.iter().find(|id| !self.sentences.contains_key(*id)) {
            return Err(ApiError::invalid("sentence_ids", format!("unknown sentence `{bad}`")));
        }
        let id = format!("sess-{}", uuid::Uuid::new_v4().simple());
        let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        let session = Session::new(id, reviewer_id, sentence_ids, seed, now)
            .map_err(|e| ApiError::invalid("sentence_ids", e.to_string()))?;
        self.store.add_session(session.clone()).map_err(ApiError::internal)?;
        Ok(session)
    }

    pub fn item(&self, session_id: &str, index: usize) -> ApiResult<ItemView> {
        let session = self
            .store
            .session(session_id)
            .ok_or_else(|| ApiError::not_found("session_id", format!("no session `{session_id}`")))?;
        let item = session.items.get(index).ok_or_else(|| {
            ApiError::not_found("index", format!("item {index} out of range 0..{}", session.items.len()))
        })?;
        let t = &self.sentences[&item.sentence_id];
        let suggestion = self.suggestion(&item.sentence_id).map_err(ApiError::internal)?;
        Ok(ItemView {
            session_id: session.session_id.clone(),
            index,
            total: session.items.len(),
            sentence_id: item.sentence_id.clone(),
            source: t.source.clone(),
            original: normalize_punctuation(&t.original),
            condition: item.condition,
            suggestion_available: suggestion.is_some(),
            suggestion: suggestion.filter(|_| item.condition == Condition::Assisted),
        })
    }

    /// Checks a review against its session and logs it.
    pub fn post_event(&self, mut record: ReviewRecord) -> ApiResult<EventAck> {
        record
            .validate()
            .map_err(|e| ApiError::invalid(e.field, e.message))?;
        let session = self
            .store
            .session(&record.session_id)
            .ok_or_else(|| ApiError::not_found("session_id", format!("no session `{}`", record.session_id)))?;
        if session.reviewer_id != record.reviewer_id {
            return Err(ApiError::invalid("reviewer_id", "does not match the session"));
        }
        let item = session
            .item(&record.sentence_id)
            .ok_or_else(|| ApiError::invalid("sentence_id", "not part of this session"))?;
        if item.condition != record.condition {
            return Err(ApiError::invalid(
                "condition",
                format!("item is assigned `{}`", item.condition),
            ));
        }
        let available = self
            .suggestion(&record.sentence_id)
            .map_err(ApiError::internal)?
            .is_some();
        if available != record.suggestion_available {
            return Err(ApiError::invalid(
                "suggestion_available",
                format!("server has suggestion_available = {available}"),
            ));
        }
        let t = &self.sentences[&record.sentence_id];
        record.original_length = normalize_punctuation(&t.original).chars().count() as u64;
        let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        record.submitted_at = Some(now.clone());
        let ack = EventAck {
            status: "recorded".to_owned(),
            session_id: record.session_id.clone(),
            sentence_id: record.sentence_id.clone(),
            submitted_at: now,
        };
        match self.store.append_event(record).map_err(ApiError::internal)? {
            Appended::Recorded => Ok(ack),
            Appended::Duplicate => Err(ApiError::new(
                StatusCode::CONFLICT,
                "duplicate",
                Some("sentence_id"),
                "this sentence was already submitted for this session",
            )),
        }
    }

    /// JSON lines in log order.
    pub fn export_jsonl(&self, session: Option<&str>) -> String {
        self.store
            .export(session)
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub reviewer_id: String,
    pub sentence_ids: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemView {
    pub session_id: String,
    pub index: usize,
    pub total: usize,
    pub sentence_id: String,
    pub source: String,
    pub original: String,
    pub condition: Condition,
    pub suggestion_available: bool,
    /// Only present for assisted items.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<Suggestion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventAck {
    pub status: String,
    pub session_id: String,
    pub sentence_id: String,
    pub submitted_at: String,
}

const COUNT_FIELDS: [&str; 4] = [
    "review_time_ms",
    "insert_count",
    "delete_count",
    "levenshtein_orig_to_final",
];

/// Parses a JSON body, naming the offending field where possible.
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_json", None, e.to_string()))?;
    if let Value::Object(map) = &value {
        for f in COUNT_FIELDS {
            if map.get(f).and_then(Value::as_f64).is_some_and(|v| v < 0.0) {
                return Err(ApiError::invalid(f, "must be non-negative"));
            }
        }
    }
    serde_json::from_value(value).map_err(|e| {
        let msg = e.to_string();
        let field = msg.split('`').nth(1).map(str::to_owned);
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY.as_u16(),
            code: "invalid".to_owned(),
            field,
            message: msg,
        }
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

async fn create_session(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<(StatusCode, Json<Session>)> {
    let req: CreateSession = parse_body(&body)?;
    let s = blocking(move || svc.create_session(&req.reviewer_id, &req.sentence_ids, req.seed)).await?;
    Ok((StatusCode::CREATED, Json(s)))
}

async fn show_session(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<Session>> {
    svc.store
        .session(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("session_id", format!("no session `{id}`")))
}

async fn show_item(
    State(svc): State<Arc<Service>>,
    Path((id, k)): Path<(String, String)>,
) -> ApiResult<Json<ItemView>> {
    let k: usize = k
        .parse()
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", Some("index"), "not an index"))?;
    blocking(move || svc.item(&id, k)).await.map(Json)
}

async fn post_event(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<(StatusCode, Json<EventAck>)> {
    let record: ReviewRecord = parse_body(&body)?;
    let ack = blocking(move || svc.post_event(record)).await?;
    Ok((StatusCode::CREATED, Json(ack)))
}

#[derive(Deserialize)]
struct ExportQuery {
    session: Option<String>,
}

async fn export(State(svc): State<Arc<Service>>, Query(q): Query<ExportQuery>) -> impl IntoResponse {
    let filter = q.session.filter(|s| !s.is_empty());
    (
        [(header::CONTENT_TYPE, "application/x-ndjson; charset=utf-8")],
        svc.export_jsonl(filter.as_deref()),
    )
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", None, "no such route")
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(show_session))
        .route("/sessions/{id}/items/{k}", get(show_item))
        .route("/events", post(post_event))
        .route("/export", get(export))
        .route("/health", get(|| async { "ok" }))
        .fallback(not_found)
        .with_state(service)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, service: Arc<Service>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service)).await?;
    Ok(())
}
