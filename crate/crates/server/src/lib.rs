//! Feedback service: compiles submitted programs and serves per-line
//! example fixes over HTTP/JSON.
//!
//! Routes:
//! - `POST /api/feedback` with a [`FeedbackRequest`] body
//! - `GET /api/examples?line_token=..&offset=..`
//! - `GET /api/health`

use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lru::LruCache;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;
use tokio::sync::Semaphore;

use tegcer_core::api::{
    ErrorResponse, ExamplesResponse, FeedbackRequest, FeedbackResponse, HealthResponse,
    LineFeedback, MAX_SOURCE_BYTES,
};
use tegcer_core::diagnostics::{CompileError, Compiler};
use tegcer_core::model::{TrainedModel, FORMAT_VERSION};
use tegcer_core::suggester::{
    more_examples, suggest_from_diagnostics, ExampleCursor, SuggestError, SuggestOptions,
    MAX_EXAMPLES_PER_LINE,
};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub token_ttl: Duration,
    pub token_capacity: usize,
    /// Concurrent compiler invocations; further requests queue.
    pub compile_slots: usize,
    pub suggest: SuggestOptions,
    /// Raw request body cap; JSON escaping can make a body larger than
    /// the source it carries.
    pub max_body_bytes: usize,
    /// Added to the compiler timeout to bound a whole feedback request.
    pub response_slack: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            token_ttl: Duration::from_secs(3600),
            token_capacity: 10_000,
            compile_slots: 4,
            suggest: SuggestOptions::default(),
            max_body_bytes: 2 * MAX_SOURCE_BYTES + 64 * 1024,
            response_slack: Duration::from_secs(2),
        }
    }
}

struct LoadedModel {
    model: TrainedModel,
    checksum: u32,
}

struct TokenEntry {
    cursor: ExampleCursor,
    issued: Instant,
}

struct Inner {
    model: Option<LoadedModel>,
    compiler: Compiler,
    config: ServiceConfig,
    tokens: Mutex<LruCache<String, TokenEntry>>,
    slots: Semaphore,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(model: Option<TrainedModel>, compiler: Compiler, config: ServiceConfig) -> Self {
        let capacity = NonZeroUsize::new(config.token_capacity.max(1)).unwrap();
        let model = model.map(|model| LoadedModel {
            checksum: model.checksum(),
            model,
        });
        Self {
            inner: Arc::new(Inner {
                model,
                compiler,
                tokens: Mutex::new(LruCache::new(capacity)),
                slots: Semaphore::new(config.compile_slots.max(1)),
                config,
            }),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorResponse { error: self.message })).into_response()
    }
}

impl From<CompileError> for ApiError {
    fn from(e: CompileError) -> Self {
        let status = match e {
            CompileError::Timeout(_) => StatusCode::GATEWAY_TIMEOUT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/feedback", post(feedback))
        .route("/api/examples", get(examples))
        .route("/api/health", get(health))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr()?, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn line_token(checksum: u32, cursor: &ExampleCursor, line_no: u32, source: &str) -> String {
    let mut h = Sha256::new();
    h.update(checksum.to_le_bytes());
    h.update((cursor.page_size as u64).to_le_bytes());
    h.update([cursor.repaired_only as u8]);
    h.update(line_no.to_le_bytes());
    h.update(source.as_bytes());
    hex::encode(&h.finalize()[..16])
}

async fn feedback(State(state): State<AppState>, body: Body) -> Result<Json<FeedbackResponse>, ApiError> {
    let inner = &state.inner;
    let Some(loaded) = &inner.model else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"));
    };
    let bytes = to_bytes(body, inner.config.max_body_bytes)
        .await
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "request body too large"))?;
    let req: FeedbackRequest = serde_json::from_slice(&bytes)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("malformed request: {e}")))?;
    if req.source.len() > MAX_SOURCE_BYTES {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("source exceeds {MAX_SOURCE_BYTES} bytes"),
        ));
    }
    let mut options = inner.config.suggest;
    if let Some(size) = req.page_size {
        if !(1..=MAX_EXAMPLES_PER_LINE).contains(&size) {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("page_size must be between 1 and {MAX_EXAMPLES_PER_LINE}"),
            ));
        }
        options.examples_per_page = size;
    }

    let budget = inner.compiler.config().timeout + inner.config.response_slack;
    let source = Arc::new(req.source);
    let work = {
        let state = state.clone();
        let source = Arc::clone(&source);
        async move {
            let _permit = state.inner.slots.acquire().await.expect("semaphore never closes");
            let blocking_state = state.clone();
            tokio::task::spawn_blocking(move || {
                let inner = &blocking_state.inner;
                let model = &inner.model.as_ref().expect("checked above").model;
                let output = inner.compiler.compile(&source)?;
                let suggestions = suggest_from_diagnostics(&source, &output.diagnostics, model, &options);
                Ok::<_, CompileError>((output.diagnostics, suggestions))
            })
            .await
            .expect("compile task panicked")
        }
    };
    let (diagnostics, suggestions) = tokio::time::timeout(budget, work)
        .await
        .map_err(|_| ApiError::new(StatusCode::GATEWAY_TIMEOUT, "feedback budget exceeded"))??;

    let mut cache = inner.tokens.lock().expect("token cache lock");
    let suggestions = suggestions
        .into_iter()
        .map(|s| {
            let cursor = s.cursor.expect("suggest always sets a cursor");
            let token = line_token(loaded.checksum, &cursor, s.line_no, &source);
            cache.put(
                token.clone(),
                TokenEntry {
                    cursor,
                    issued: Instant::now(),
                },
            );
            LineFeedback {
                line_token: token,
                suggestion: s,
            }
        })
        .collect();
    Ok(Json(FeedbackResponse {
        compiled_ok: diagnostics.is_empty(),
        diagnostics,
        suggestions,
    }))
}

#[derive(Debug, Deserialize)]
struct ExamplesQuery {
    line_token: String,
    offset: usize,
}

async fn examples(
    State(state): State<AppState>,
    Query(q): Query<ExamplesQuery>,
) -> Result<Json<ExamplesResponse>, ApiError> {
    let inner = &state.inner;
    let Some(loaded) = &inner.model else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded"));
    };
    let cursor = {
        let mut cache = inner.tokens.lock().expect("token cache lock");
        let live = cache
            .get(&q.line_token)
            .map(|e| (e.cursor, e.issued.elapsed() < inner.config.token_ttl));
        match live {
            Some((cursor, true)) => cursor,
            Some((_, false)) => {
                cache.pop(&q.line_token);
                return Err(ApiError::new(StatusCode::NOT_FOUND, "line token expired"));
            }
            None => return Err(ApiError::new(StatusCode::NOT_FOUND, "unknown line token")),
        }
    };
    let page = more_examples(&loaded.model.examples, &cursor, q.offset).map_err(|e| match e {
        SuggestError::CapReached(_) => ApiError::new(StatusCode::GONE, e.to_string()),
        SuggestError::Compile(e) => e.into(),
    })?;
    Ok(Json(ExamplesResponse {
        line_token: q.line_token,
        offset: q.offset,
        examples: page.examples,
        has_more: page.has_more,
    }))
}

async fn health(State(state): State<AppState>) -> (StatusCode, Json<HealthResponse>) {
    match &state.inner.model {
        Some(loaded) => (
            StatusCode::OK,
            Json(HealthResponse {
                status: "ok".into(),
                model_version: FORMAT_VERSION.to_string(),
                class_count: loaded.model.classes.len(),
            }),
        ),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(HealthResponse {
                status: "no-model".into(),
                model_version: String::new(),
                class_count: 0,
            }),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_deterministic_and_opaque() {
        let c = ExampleCursor {
            class_id: Some(1),
            page_size: 1,
            repaired_only: false,
        };
        let a = line_token(7, &c, 3, "int main() {}");
        assert_eq!(a, line_token(7, &c, 3, "int main() {}"));
        assert_ne!(a, line_token(7, &c, 4, "int main() {}"));
        assert_ne!(a, line_token(8, &c, 3, "int main() {}"));
        assert_eq!(a.len(), 32);
        assert!(a.chars().all(|ch| ch.is_ascii_hexdigit()));
    }

    #[test]
    fn compile_errors_map_to_statuses() {
        let t: ApiError = CompileError::Timeout(Duration::from_secs(1)).into();
        assert_eq!(t.status, StatusCode::GATEWAY_TIMEOUT);
        let m: ApiError = CompileError::FixtureMiss("ab".into()).into();
        assert_eq!(m.status, StatusCode::INTERNAL_SERVER_ERROR);
    }
}
