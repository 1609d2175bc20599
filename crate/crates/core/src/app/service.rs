//! HTTP routes.
//!
//! | route                   | answer                                   |
//! |-------------------------|------------------------------------------|
//! | `POST /v1/suggest`      | [`SuggestResponse`]                      |
//! | `GET /v1/health`        | `{"status"}`; 503 until a model is loaded |
//! | `GET /v1/models`        | registry listing                         |
//! | `POST /v1/claims`       | `{"draft_id"}`                           |
//! | `POST /v1/admin/reload` | `{"model_version"}`                      |
//!
//! Errors come back as `{"error": ..., "fields": [{"field", "message"}]}`.

use std::collections::BTreeSet;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::config::{ServeConfig, MAX_K};
use super::registry::{scan, Method, ModelEntry, RegistryError, Snapshot};
use super::store::{ClaimDraft, DraftStore, StoreError};
use crate::codes::{CptCode, IcdCode};
use crate::dataset::{Gender, MAX_AGE, MAX_ICDS};
use crate::predict::{suggest, FilteredSuggestion, Query};

/// Body of `POST /v1/suggest`. Loosely typed on purpose so that every bad
/// field can be reported by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestRequest {
    pub provider_id: String,
    pub age: i64,
    pub gender: String,
    pub icds: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

/// Body of `POST /v1/claims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftRequest {
    #[serde(flatten)]
    pub request: SuggestRequest,
    pub accepted: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payer_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub suggestions: Vec<FilteredSuggestion>,
    pub method: Method,
    pub model_version: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("malformed request body: {0}")]
    Body(String),
    #[error("invalid request")]
    Invalid(Vec<FieldError>),
    #[error("no model loaded yet")]
    Loading,
    #[error("no {0} model in the registry")]
    NoModel(Method),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("{0}")]
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, fields) = match &self {
            ApiError::Body(_) => (StatusCode::BAD_REQUEST, vec![]),
            ApiError::Invalid(f) => (StatusCode::BAD_REQUEST, f.clone()),
            ApiError::Loading => (StatusCode::SERVICE_UNAVAILABLE, vec![]),
            ApiError::NoModel(_) => (
                StatusCode::NOT_FOUND,
                vec![FieldError {
                    field: "method".into(),
                    message: self.to_string(),
                }],
            ),
            ApiError::Registry(_) | ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, vec![]),
        };
        (status, Json(json!({ "error": self.to_string(), "fields": fields }))).into_response()
    }
}

struct Validated {
    query: Query,
    k: usize,
    method: Method,
}

fn validate(req: &SuggestRequest, config: &ServeConfig) -> Result<Validated, Vec<FieldError>> {
    let mut errors = Vec::new();
    let mut bad = |field: &str, message: String| {
        errors.push(FieldError {
            field: field.into(),
            message,
        })
    };
    if req.provider_id.trim().is_empty() {
        bad("provider_id", "must not be empty".into());
    }
    if !(0..=MAX_AGE as i64).contains(&req.age) {
        bad("age", format!("must be between 0 and {MAX_AGE}"));
    }
    let gender = match req.gender.as_str() {
        "M" => Some(Gender::M),
        "F" => Some(Gender::F),
        other => {
            bad("gender", format!("`{other}` is not M or F"));
            None
        }
    };
    let mut icds = BTreeSet::new();
    if req.icds.is_empty() {
        bad("icds", "at least one diagnosis code is required".into());
    } else if req.icds.len() > MAX_ICDS {
        bad("icds", format!("at most {MAX_ICDS} diagnosis codes are allowed"));
    }
    for raw in &req.icds {
        match IcdCode::normalize(raw) {
            Ok(c) => {
                icds.insert(c);
            }
            Err(e) => bad("icds", e.to_string()),
        }
    }
    let k = req.k.unwrap_or(config.default_k as i64);
    if !(1..=MAX_K as i64).contains(&k) {
        bad("k", format!("must be between 1 and {MAX_K}"));
    }
    let method = match &req.method {
        None => Some(config.default_method),
        Some(m) => match m.parse::<Method>() {
            Ok(m) => Some(m),
            Err(e) => {
                bad("method", e);
                None
            }
        },
    };
    match (gender, method) {
        (Some(gender), Some(method)) if errors.is_empty() => Ok(Validated {
            query: Query {
                provider_id: req.provider_id.clone(),
                age: req.age as u8,
                gender,
                icds,
            },
            k: k as usize,
            method,
        }),
        _ => Err(errors),
    }
}

/// Shared service state: the active snapshot behind a swap-only lock.
pub struct AppState {
    pub config: ServeConfig,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    store: DraftStore,
}

impl AppState {
    pub fn new(config: ServeConfig) -> std::io::Result<Self> {
        let store = DraftStore::open(&config.store)?;
        Ok(AppState {
            config,
            snapshot: RwLock::new(None),
            store,
        })
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn install(&self, snapshot: Snapshot) -> String {
        let version = snapshot.version();
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = Some(Arc::new(snapshot));
        version
    }

    /// Loads a fresh snapshot from the registry and swaps it in. The previous
    /// snapshot keeps serving if loading fails.
    pub fn reload(&self) -> Result<String, RegistryError> {
        let snapshot = Snapshot::load(
            &self.config.registry,
            self.config.active.as_deref(),
            self.config.rules.as_deref(),
        )?;
        Ok(self.install(snapshot))
    }

    fn require_snapshot(&self) -> Result<Arc<Snapshot>, ApiError> {
        self.snapshot().ok_or(ApiError::Loading)
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Body(e.to_string()))
}

/// Runs the filtered suggestion path against the state's current snapshot.
pub fn answer(state: &AppState, req: &SuggestRequest) -> Result<SuggestResponse, ApiError> {
    let v = validate(req, &state.config).map_err(ApiError::Invalid)?;
    let snapshot = state.require_snapshot()?;
    respond(&snapshot, v)
}

/// Validates `req` (defaults from `config`) and answers it from `snapshot`.
pub fn answer_with(snapshot: &Snapshot, config: &ServeConfig, req: &SuggestRequest) -> Result<SuggestResponse, ApiError> {
    respond(snapshot, validate(req, config).map_err(ApiError::Invalid)?)
}

fn respond(snapshot: &Snapshot, v: Validated) -> Result<SuggestResponse, ApiError> {
    let active = snapshot.get(v.method).ok_or(ApiError::NoModel(v.method))?;
    let suggestions = suggest(active.model.predictor(), &v.query, v.k, &snapshot.rules).map_err(|e| {
        ApiError::Invalid(vec![FieldError {
            field: "icds".into(),
            message: e.to_string(),
        }])
    })?;
    let mut warnings = active.model.warnings(&v.query);
    if suggestions.is_empty() {
        warnings.push("no suggestion survived for this query".into());
    }
    Ok(SuggestResponse {
        suggestions,
        method: v.method,
        model_version: active.file.clone(),
        warnings,
    })
}

async fn suggest_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<SuggestResponse>, ApiError> {
    let req: SuggestRequest = parse_body(&body)?;
    answer(&state, &req).map(Json)
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match state.snapshot() {
        Some(s) => Json(json!({ "status": "ok", "model_version": s.version() })).into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "loading" }))).into_response(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelListing {
    pub registry: String,
    pub models: Vec<ModelEntry>,
}

async fn models(State(state): State<Arc<AppState>>) -> Result<Json<ModelListing>, ApiError> {
    let dir = state.config.registry.clone();
    let mut models = tokio::task::spawn_blocking(move || scan(&dir))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    if let Some(s) = state.snapshot() {
        for m in &mut models {
            m.active = s.get(m.method).is_some_and(|a| a.file == m.file);
        }
    }
    Ok(Json(ModelListing {
        registry: state.config.registry.display().to_string(),
        models,
    }))
}

async fn claims(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: DraftRequest = parse_body(&body)?;
    let mut errors = match validate(&req.request, &state.config) {
        Ok(_) => Vec::new(),
        Err(e) => e,
    };
    let mut accepted = BTreeSet::new();
    if req.accepted.is_empty() {
        errors.push(FieldError {
            field: "accepted".into(),
            message: "at least one accepted CPT is required".into(),
        });
    }
    for raw in &req.accepted {
        match CptCode::parse(raw) {
            Ok(c) => {
                accepted.insert(c);
            }
            Err(e) => errors.push(FieldError {
                field: "accepted".into(),
                message: e.to_string(),
            }),
        }
    }
    if !errors.is_empty() {
        return Err(ApiError::Invalid(errors));
    }
    let v = validate(&req.request, &state.config).map_err(ApiError::Invalid)?;
    let snapshot = state.require_snapshot()?;
    let draft = ClaimDraft {
        provider_id: v.query.provider_id,
        payer_id: req.payer_id,
        age: v.query.age,
        gender: v.query.gender,
        icds: v.query.icds,
        accepted,
        method: v.method,
        k: v.k,
    };
    let state2 = state.clone();
    let id = tokio::task::spawn_blocking(move || state2.store.persist(&draft, &snapshot.rules))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| match e {
            StoreError::Io(e) => ApiError::Internal(e.to_string()),
            other => ApiError::Invalid(vec![FieldError {
                field: "accepted".into(),
                message: other.to_string(),
            }]),
        })?;
    Ok((StatusCode::CREATED, Json(json!({ "draft_id": id }))).into_response())
}

async fn reload(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let s = state.clone();
    let version = tokio::task::spawn_blocking(move || s.reload())
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    log::info!("reloaded models: {version}");
    Ok(Json(json!({ "model_version": version })))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/suggest", post(suggest_handler))
        .route("/v1/health", get(health))
        .route("/v1/models", get(models))
        .route("/v1/claims", post(claims))
        .route("/v1/admin/reload", post(reload))
        .with_state(state)
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model registry: {0}")]
    Registry(#[from] RegistryError),
}

/// Binds, starts answering (health reports 503 while the registry loads) and
/// runs until Ctrl-C. Returns an error if the first load fails.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let state = Arc::new(AppState::new(config)?);
    let listener = tokio::net::TcpListener::bind((state.config.host.as_str(), state.config.port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    let app = router(state.clone());
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    });
    let loader = state.clone();
    let version = tokio::task::spawn_blocking(move || loader.reload())
        .await
        .map_err(|e| std::io::Error::other(e.to_string()))??;
    log::info!("serving models: {version}");
    server.await.map_err(|e| std::io::Error::other(e.to_string()))??;
    Ok(())
}
