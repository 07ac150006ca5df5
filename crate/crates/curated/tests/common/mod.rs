#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use curated::server::{
    router, Abandon, Accepted, AnnotationRequest, ApiError, AppState, Brainstorm, Committed, CreateSession,
    DecisionRequest, DocView, ManualClock, NextIndicator, Promote, Promoted, SearchParams, SearchResults,
    ServerSettings, StateView,
};
use curated::synth::Desk;
use curated_core::workflow::{WorkflowConfig, SESSION_BUDGET_SECS};
use curated_core::{DocumentSet, Ontology};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use tower::ServiceExt;

pub const START: f64 = 1_700_000_000.0;

pub fn settings(log_dir: &Path, ontology: Option<Ontology>) -> ServerSettings {
    ServerSettings {
        log_dir: log_dir.to_path_buf(),
        workflow: WorkflowConfig::default(),
        budget_secs: SESSION_BUDGET_SECS,
        search_limit: 50,
        ontology,
    }
}

/// Drives the router in-process, one request at a time.
pub struct HttpDesk {
    pub router: Router,
    pub app: Arc<AppState>,
    pub clock: Arc<ManualClock>,
    rt: tokio::runtime::Runtime,
}

impl HttpDesk {
    pub fn new(app: Arc<AppState>, clock: Arc<ManualClock>) -> Self {
        let rt = tokio::runtime::Builder::new_current_thread().build().expect("runtime");
        HttpDesk {
            router: router(app.clone()),
            app,
            clock,
            rt,
        }
    }

    /// Starts a service over `docs` with logs in `log_dir`.
    pub fn start(docs: DocumentSet, log_dir: &Path, ontology: Option<Ontology>) -> Self {
        let clock = Arc::new(ManualClock::new(START));
        let app = AppState::new(Arc::new(docs), settings(log_dir, ontology), clock.clone()).expect("restore");
        HttpDesk::new(Arc::new(app), clock)
    }

    pub fn send(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let builder = Request::builder().method(method).uri(uri);
        let request = match body {
            Some(b) => builder
                .header("content-type", "application/json")
                .body(Body::from(b.to_string())),
            None => builder.body(Body::empty()),
        }
        .expect("request");
        self.rt.block_on(async {
            let response = self.router.clone().oneshot(request).await.expect("infallible");
            let status = response.status();
            let bytes = response.into_body().collect().await.expect("body").to_bytes();
            let value = if bytes.is_empty() {
                Value::Null
            } else {
                serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
            };
            (status, value)
        })
    }

    pub fn call<T: DeserializeOwned>(&self, method: Method, uri: &str, body: Option<Value>) -> Result<T, ApiError> {
        let (status, value) = self.send(method, uri, body);
        if status.is_success() {
            Ok(serde_json::from_value(value).expect("response shape"))
        } else {
            let message = value.get("error").and_then(Value::as_str).unwrap_or_default().to_string();
            Err(ApiError::new(status, message))
        }
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(&self, uri: &str, body: &B) -> Result<T, ApiError> {
        self.call(Method::POST, uri, Some(serde_json::to_value(body).expect("json")))
    }

    pub fn get<T: DeserializeOwned>(&self, uri: &str) -> Result<T, ApiError> {
        self.call(Method::GET, uri, None)
    }
}

impl Desk for HttpDesk {
    fn create_session(&mut self, req: CreateSession) -> Result<StateView, ApiError> {
        self.post("/session", &req)
    }
    fn brainstorm(&mut self, session_id: &str, req: Brainstorm) -> Result<StateView, ApiError> {
        self.post(&format!("/session/{session_id}/brainstorm"), &req)
    }
    fn next_indicator(&mut self, session_id: &str) -> Result<NextIndicator, ApiError> {
        self.get(&format!("/session/{session_id}/next-indicator"))
    }
    fn search(&mut self, params: &SearchParams) -> Result<SearchResults, ApiError> {
        let query = serde_urlencoded::to_string(params).expect("query");
        self.get(&format!("/search?{query}"))
    }
    fn document(&mut self, doc_id: &str) -> Result<DocView, ApiError> {
        self.get(&format!("/doc/{doc_id}"))
    }
    fn decide(&mut self, session_id: &str, req: DecisionRequest) -> Result<Accepted, ApiError> {
        self.post(&format!("/session/{session_id}/decision"), &req)
    }
    fn annotate(&mut self, req: AnnotationRequest) -> Result<Accepted, ApiError> {
        self.post("/annotation", &req)
    }
    fn promote(&mut self, session_id: &str, req: Promote) -> Result<Promoted, ApiError> {
        self.post(&format!("/session/{session_id}/promote"), &req)
    }
    fn commit(&mut self, session_id: &str) -> Result<Committed, ApiError> {
        self.post(&format!("/session/{session_id}/commit"), &serde_json::json!({}))
    }
    fn abandon(&mut self, session_id: &str, req: Abandon) -> Result<StateView, ApiError> {
        self.post(&format!("/session/{session_id}/abandon"), &req)
    }
    fn done(&mut self, session_id: &str) -> Result<StateView, ApiError> {
        self.post(&format!("/session/{session_id}/done"), &serde_json::json!({}))
    }
    fn state(&mut self, session_id: &str) -> Result<StateView, ApiError> {
        self.get(&format!("/session/{session_id}/state"))
    }
    fn wait(&mut self, secs: f64) {
        self.clock.advance(secs);
    }
}
