//! Read-only HTTP service over a journal-backed provenance store.
//!
//! A background task tails the journal and ingests complete records into the
//! store; handlers answer from the latest snapshot.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{middleware, Router};
use serde::Serialize;
use tower_http::services::ServeDir;

use crate::bus::{decode_record, JournalRecord};
use crate::engine::{export_json, export_replay_json, replay_order, trace, trace_back, Depth, Direction};
use crate::json::{self, ParseError, ParseMode};
use crate::schema::{MessageId, Producer, Timestamp};
use crate::store::{IngestError, NodeId, Palette, ProvenanceGraph, ProvenanceStore, StoreConfig};

pub const HIGH_WATER_MARK_HEADER: &str = "x-trace-high-water-mark";
pub const DEFAULT_PAGE_LIMIT: usize = 100;
pub const MAX_PAGE_LIMIT: usize = 1000;
pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_millis(200);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub journal: PathBuf,
    pub parse_mode: ParseMode,
    pub allow_dangling_parents: bool,
    /// Depth used when a trace request does not name one.
    pub max_depth: Depth,
    pub static_dir: Option<PathBuf>,
    pub poll_interval: Duration,
    pub palette: Palette,
}

impl ServiceConfig {
    pub fn new(journal: impl Into<PathBuf>) -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            journal: journal.into(),
            parse_mode: ParseMode::Strict,
            allow_dangling_parents: false,
            max_depth: Depth::Unlimited,
            static_dir: None,
            poll_interval: DEFAULT_POLL_INTERVAL,
            palette: Palette::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TailError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt journal record at byte {offset}: {source}")]
    Corrupt { offset: u64, source: ParseError },
    #[error("journal shrank below the tail offset ({len} < {offset})")]
    Truncated { offset: u64, len: u64 },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Incremental reader that remembers how far into the journal it has ingested.
/// Only LF-terminated records are consumed; a partial tail waits for the next
/// poll.
#[derive(Debug)]
pub struct JournalTail {
    path: PathBuf,
    offset: u64,
    mode: ParseMode,
}

impl JournalTail {
    pub fn new(path: impl Into<PathBuf>, mode: ParseMode) -> Self {
        Self { path: path.into(), offset: 0, mode }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Reads records appended since the last poll and ingests them. A missing
    /// journal reads as empty.
    pub fn poll(&mut self, store: &ProvenanceStore) -> Result<usize, TailError> {
        let io_err = |source| TailError::Io { path: self.path.clone(), source };
        let mut file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(io_err(e)),
        };
        let len = file.metadata().map_err(io_err)?.len();
        if len < self.offset {
            return Err(TailError::Truncated { offset: self.offset, len });
        }
        if len == self.offset {
            return Ok(0);
        }
        file.seek(SeekFrom::Start(self.offset)).map_err(io_err)?;
        let mut buf = Vec::with_capacity((len - self.offset) as usize);
        file.take(len - self.offset).read_to_end(&mut buf).map_err(io_err)?;

        // Each decoded record with the offset just past its terminator.
        let mut lines: Vec<(JournalRecord, u64)> = Vec::new();
        let mut consumed = 0usize;
        let mut corrupt = None;
        while let Some(nl) = buf[consumed..].iter().position(|&b| b == b'\n') {
            let line = &buf[consumed..consumed + nl];
            let start = self.offset + consumed as u64;
            consumed += nl + 1;
            let end = self.offset + consumed as u64;
            match decode_record(line, self.mode) {
                Ok(r) => lines.push((r, end)),
                Err(source) => {
                    corrupt = Some(TailError::Corrupt { offset: start, source });
                    break;
                }
            }
        }

        let outcome = store.ingest_batch(lines.iter().map(|(r, _)| r));
        let high_water_mark = store.snapshot().high_water_mark();
        let mut applied = 0;
        for (record, end) in &lines {
            if record.sequence > high_water_mark {
                break;
            }
            applied += 1;
            self.offset = *end;
        }
        outcome?;
        match corrupt {
            Some(e) => Err(e),
            None => Ok(applied),
        }
    }
}

/// Shared state behind the router: the store, its tail, and the config.
#[derive(Debug)]
pub struct TraceService {
    config: ServiceConfig,
    store: ProvenanceStore,
    tail: Mutex<JournalTail>,
}

impl TraceService {
    /// Builds the store from whatever the journal already holds.
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        if config.max_depth == Depth::Limited(0) {
            return Err(ServiceError::Config("default max depth must be at least 1".into()));
        }
        if config.poll_interval.is_zero() {
            return Err(ServiceError::Config("poll interval must be positive".into()));
        }
        let store = ProvenanceStore::new(StoreConfig {
            allow_dangling_parents: config.allow_dangling_parents,
            palette: config.palette.clone(),
        });
        let tail = Mutex::new(JournalTail::new(&config.journal, config.parse_mode));
        let service = Arc::new(Self { config, store, tail });
        service.poll()?;
        Ok(service)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn journal(&self) -> &Path {
        &self.config.journal
    }

    pub fn snapshot(&self) -> Arc<ProvenanceGraph> {
        self.store.snapshot()
    }

    /// Ingests any records appended since the last poll.
    pub fn poll(&self) -> Result<usize, TailError> {
        self.tail.lock().unwrap_or_else(|p| p.into_inner()).poll(&self.store)
    }

    /// Polls on the configured interval until the returned task is aborted.
    pub fn spawn_tailer(self: &Arc<Self>) -> tokio::task::JoinHandle<()> {
        let service = Arc::clone(self);
        tokio::spawn(async move {
            let mut ticker = tokio::time::interval(service.config.poll_interval);
            ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            let mut failing = false;
            loop {
                ticker.tick().await;
                match service.poll() {
                    Ok(n) => {
                        if n > 0 {
                            log::debug!("ingested {n} journal records");
                        }
                        failing = false;
                    }
                    Err(e) => {
                        if !failing {
                            log::error!("journal tail stalled: {e}");
                        }
                        failing = true;
                    }
                }
            }
        })
    }

    pub fn router(self: &Arc<Self>) -> Router {
        let api = Router::new()
            .route("/healthz", get(healthz))
            .route("/api/v1/messages", get(list_messages))
            .route("/api/v1/trace/:message_id", get(trace_message))
            .route("/api/v1/replay/:message_id", get(replay_message));
        let api = match &self.config.static_dir {
            Some(dir) => api.fallback_service(ServeDir::new(dir)),
            None => api.fallback(not_found),
        };
        api.layer(middleware::map_response_with_state(Arc::clone(self), stamp_high_water_mark))
            .with_state(Arc::clone(self))
    }
}

/// Opens the journal, starts tailing it, and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let service = TraceService::open(config)?;
    let tailer = service.spawn_tailer();
    let listener = tokio::net::TcpListener::bind(service.config.listen)
        .await
        .map_err(|source| ServiceError::Bind { addr: service.config.listen, source })?;
    log::info!("serving {} on {}", service.journal().display(), service.config.listen);
    let result = axum::serve(listener, service.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Io);
    tailer.abort();
    result
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid service configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tail(#[from] TailError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error(transparent)]
    Io(io::Error),
}

/// One row of the message listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct MessageSummary {
    pub message_id: String,
    pub sequence: u64,
    pub topic: String,
    pub data_type: String,
    pub producer: Producer,
    pub timestamp: Timestamp,
    pub subsystem_color_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct MessagePage {
    pub items: Vec<MessageSummary>,
    pub next_cursor: Option<u64>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    detail: String,
}

struct ApiError {
    status: StatusCode,
    code: String,
    detail: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json::to_canonical_string(&ErrorBody { error: &self.code, detail: self.detail });
        json_response(self.status, body)
    }
}

fn error(status: StatusCode, code: &str, detail: impl Into<String>) -> ApiError {
    ApiError { status, code: code.to_string(), detail: detail.into() }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], body).into_response()
}

fn with_high_water_mark(mut response: Response, graph: &ProvenanceGraph) -> Response {
    response.headers_mut().insert(HIGH_WATER_MARK_HEADER, HeaderValue::from(graph.high_water_mark()));
    response
}

/// Error and static responses get the mark of the snapshot current when they leave.
async fn stamp_high_water_mark(State(service): State<Arc<TraceService>>, response: Response) -> Response {
    if response.headers().contains_key(HIGH_WATER_MARK_HEADER) {
        return response;
    }
    with_high_water_mark(response, &service.snapshot())
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "not_found", "no such route").into_response()
}

async fn healthz(State(service): State<Arc<TraceService>>) -> Response {
    #[derive(Serialize)]
    struct Health {
        sequence: u64,
    }
    let graph = service.snapshot();
    let body = json::to_canonical_string(&Health { sequence: graph.high_water_mark() });
    with_high_water_mark(json_response(StatusCode::OK, body), &graph)
}

fn parse_message_id(text: &str) -> Result<NodeId, ApiError> {
    MessageId::parse(text)
        .map(NodeId::Message)
        .map_err(|e| error(StatusCode::BAD_REQUEST, "invalid_message_id", e.to_string()))
}

fn query_param<T: std::str::FromStr>(params: &HashMap<String, String>, name: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    params
        .get(name)
        .map(|raw| {
            raw.parse::<T>()
                .map_err(|e| error(StatusCode::BAD_REQUEST, &format!("invalid_{name}"), format!("{name}={raw:?}: {e}")))
        })
        .transpose()
}

async fn list_messages(
    State(service): State<Arc<TraceService>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let graph = service.snapshot();
    match message_page(&graph, &params) {
        Ok(page) => with_high_water_mark(json_response(StatusCode::OK, json::to_canonical_string(&page)), &graph),
        Err(e) => e.into_response(),
    }
}

fn message_page(graph: &ProvenanceGraph, params: &HashMap<String, String>) -> Result<MessagePage, ApiError> {
    let limit = query_param::<usize>(params, "limit")?.unwrap_or(DEFAULT_PAGE_LIMIT);
    if limit == 0 || limit > MAX_PAGE_LIMIT {
        return Err(error(
            StatusCode::BAD_REQUEST,
            "invalid_limit",
            format!("limit must be between 1 and {MAX_PAGE_LIMIT}, got {limit}"),
        ));
    }
    let after = query_param::<u64>(params, "after_seq")?.unwrap_or(0);
    if after > graph.high_water_mark() {
        return Err(error(
            StatusCode::BAD_REQUEST,
            "invalid_cursor",
            format!("after_seq {after} is beyond the newest sequence {}", graph.high_water_mark()),
        ));
    }
    let data_type = params.get("data_type");
    let producer = params.get("producer");

    let mut items = Vec::new();
    let mut next_cursor = None;
    for node in graph.messages().skip(after as usize) {
        let (Some(sequence), Some(p), Some(timestamp), Some(id)) =
            (node.sequence, node.producer.as_ref(), node.timestamp, node.id.as_message())
        else {
            continue;
        };
        if data_type.is_some_and(|d| *d != node.data_type) || producer.is_some_and(|a| *a != p.algorithm) {
            continue;
        }
        if items.len() == limit {
            next_cursor = items.last().map(|s: &MessageSummary| s.sequence);
            break;
        }
        items.push(MessageSummary {
            message_id: id.to_string(),
            sequence,
            topic: node.topic.clone().unwrap_or_default(),
            data_type: node.data_type.clone(),
            producer: p.clone(),
            timestamp,
            subsystem_color_key: node.subsystem_color_key.clone(),
        });
    }
    Ok(MessagePage { items, next_cursor })
}

async fn trace_message(
    State(service): State<Arc<TraceService>>,
    UrlPath(message_id): UrlPath<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let graph = service.snapshot();
    let result = (|| {
        let focus = parse_message_id(&message_id)?;
        let direction = query_param::<Direction>(&params, "direction")?.unwrap_or(Direction::Backward);
        let depth = query_param::<Depth>(&params, "max_depth")?.unwrap_or(service.config.max_depth);
        trace(&graph, &focus, direction, depth)
            .map_err(|e| error(StatusCode::NOT_FOUND, "unknown_message", e.to_string()))
    })();
    match result {
        Ok(sub) => with_high_water_mark(json_response(StatusCode::OK, export_json(&sub)), &graph),
        Err(e) => e.into_response(),
    }
}

async fn replay_message(State(service): State<Arc<TraceService>>, UrlPath(message_id): UrlPath<String>) -> Response {
    let graph = service.snapshot();
    let result = (|| {
        let focus = parse_message_id(&message_id)?;
        let sub = trace_back(&graph, &focus, Depth::Unlimited)
            .map_err(|e| error(StatusCode::NOT_FOUND, "unknown_message", e.to_string()))?;
        replay_order(&sub).map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, "replay_failed", e.to_string()))
    })();
    match result {
        Ok(plan) => with_high_water_mark(json_response(StatusCode::OK, export_replay_json(&plan)), &graph),
        Err(e) => e.into_response(),
    }
}
