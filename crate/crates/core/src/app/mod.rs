//! Suggestion service: model registry, hot-swappable snapshot, draft log and
//! HTTP routes.

pub mod config;
pub mod registry;
pub mod service;
pub mod store;

pub use config::{ConfigError, ServeConfig};
pub use registry::{scan, LoadedModel, Method, ModelEntry, RegistryError, Snapshot};
pub use service::{
    answer, answer_with, router, ApiError, serve, AppState, DraftRequest, FieldError, ServeError, SuggestRequest, SuggestResponse,
};
pub use store::{ClaimDraft, DraftStore, StoreError};
