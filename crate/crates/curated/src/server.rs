//! HTTP service over the workflow state machine.
//!
//! Each session lives in memory as the state derived from its log file in
//! `log_dir`. A command runs against a copy of the state; the events it
//! produced are appended and synced to the log before the copy replaces the
//! live state and the response is sent. Restarting replays every log.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use curated_core::annotation::{kind_counts, session_stats, Appended, SessionStats};
use curated_core::corpus::{SentenceSpan, TokenSpan};
use curated_core::workflow::{Decision, Phase, SkipReason, SpanAnnotation, Visit, WorkflowConfig, WorkflowError};
use curated_core::{AnnotationRecord, DocumentSet, Indicator, InvertedIndex, LogEvent, Ontology, PhraseQuery, RecordKind, WorkflowState};
use serde::{Deserialize, Serialize};

use crate::formats::{parse_log, read_text, FormatError, LogWriter};

/// Wall-clock source, in seconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(Mutex<f64>);

impl ManualClock {
    pub fn new(start: f64) -> Self {
        ManualClock(Mutex::new(start))
    }

    pub fn advance(&self, secs: f64) {
        *lock(&self.0) += secs;
    }

    pub fn set(&self, now: f64) {
        *lock(&self.0) = now;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        *lock(&self.0)
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

// ---- errors ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl ToString) -> Self {
        ApiError {
            status,
            message: message.to_string(),
        }
    }

    pub fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn not_found(message: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn conflict(message: impl ToString) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.status.as_u16(), self.message)
    }
}

impl std::error::Error for ApiError {}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        use curated_core::annotation::AnnotationError as A;
        let status = match &e {
            WorkflowError::UnknownDocument(_)
            | WorkflowError::NoSuchSentence { .. }
            | WorkflowError::NoSuchVisit(_)
            | WorkflowError::NoSuchIndicator(_)
            | WorkflowError::Annotation(A::UnknownDocument(_)) => StatusCode::NOT_FOUND,
            WorkflowError::WrongPhase { .. }
            | WorkflowError::VisitOpen
            | WorkflowError::DuplicateIndicator(_)
            | WorkflowError::DuplicatePriority(_)
            | WorkflowError::NoIndicator
            | WorkflowError::Annotation(A::DuplicateRecordId(_) | A::ConflictingClassification { .. }) => {
                StatusCode::CONFLICT
            }
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e)
    }
}

impl From<FormatError> for ApiError {
    fn from(e: FormatError) -> Self {
        ApiError::internal(e)
    }
}

// ---- request and response bodies ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub teacher_id: String,
    pub event_type: String,
    /// Client-chosen id; repeating a create with the same id is a no-op.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Brainstorm {
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionKind {
    EventPresent,
    Negative,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub record_id: String,
    pub doc_id: String,
    pub sentence: usize,
    pub decision: DecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<SkipReason>,
    /// Accepted for the client's own bookkeeping; ordering uses server time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_timestamp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub session_id: String,
    pub record_id: String,
    pub doc_id: String,
    pub kind: RecordKind,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_timestamp: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Inserted,
    Duplicate,
}

impl From<Appended> for Outcome {
    fn from(a: Appended) -> Self {
        match a {
            Appended::Inserted => Outcome::Inserted,
            Appended::Duplicate => Outcome::Duplicate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    pub record_id: String,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Promote {
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Promoted {
    /// False when the phrase was already listed.
    pub added: bool,
    pub indicator: Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Committed {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_visit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<SkipReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abandon {
    pub priority: i64,
}

/// Raises an indicator's extra budget to `extra_budget` in total, so a
/// retried request grants nothing twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub priority: i64,
    pub extra_budget: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextIndicator {
    pub indicator: Option<Indicator>,
    pub docs_done: u32,
    pub budget: u32,
    pub elapsed_secs: f64,
    pub should_stop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub session_id: String,
    pub teacher_id: String,
    pub event_type: String,
    pub phase: Phase,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub elapsed_secs: f64,
    pub budget_secs: f64,
    pub should_stop: bool,
    pub next_indicator: Option<Indicator>,
    pub indicators: Vec<Indicator>,
    pub open_visit: Option<Visit>,
    /// Live records in log order.
    pub records: Vec<AnnotationRecord>,
    pub retracted: Vec<String>,
    pub searches: usize,
    pub log_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsView {
    #[serde(flatten)]
    pub stats: SessionStats,
    pub elapsed_secs: f64,
    pub kinds: BTreeMap<RecordKind, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub q: String,
    #[serde(default)]
    pub limit: Option<usize>,
    /// Session to log the search under.
    #[serde(default)]
    pub session: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResults {
    pub phrase: Vec<String>,
    pub doc_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceView {
    #[serde(flatten)]
    pub span: SentenceSpan,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocView {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub tokens: Vec<TokenSpan>,
    pub sentences: Vec<SentenceView>,
}

// ---- application state ----

#[derive(Debug, Clone)]
pub struct ServerSettings {
    pub log_dir: PathBuf,
    pub workflow: WorkflowConfig,
    pub budget_secs: f64,
    pub search_limit: usize,
    /// When set, sessions may only target these event types.
    pub ontology: Option<Ontology>,
}

#[derive(Debug)]
struct Live {
    state: Arc<WorkflowState>,
    writer: LogWriter,
}

pub struct AppState {
    docs: Arc<DocumentSet>,
    index: InvertedIndex,
    settings: ServerSettings,
    clock: Arc<dyn Clock>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Live>>>>,
    creating: Mutex<()>,
}

#[derive(Debug, thiserror::Error)]
pub enum RestoreError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {message}")]
    Log { path: PathBuf, message: String },
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl AppState {
    /// Builds the state and replays every `*.jsonl` log found in the log
    /// directory, creating the directory if needed.
    pub fn new(docs: Arc<DocumentSet>, settings: ServerSettings, clock: Arc<dyn Clock>) -> Result<Self, RestoreError> {
        let index = InvertedIndex::build(&docs);
        let state = AppState {
            docs,
            index,
            settings,
            clock,
            sessions: RwLock::new(BTreeMap::new()),
            creating: Mutex::new(()),
        };
        state.restore()?;
        Ok(state)
    }

    pub fn docs(&self) -> &DocumentSet {
        &self.docs
    }

    pub fn settings(&self) -> &ServerSettings {
        &self.settings
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.settings.log_dir.join(format!("{session_id}.jsonl"))
    }

    fn restore(&self) -> Result<(), RestoreError> {
        let dir = &self.settings.log_dir;
        std::fs::create_dir_all(dir).map_err(|source| FormatError::Io {
            path: dir.clone(),
            source,
        })?;
        let listing = std::fs::read_dir(dir).map_err(|source| FormatError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = listing
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        for path in paths {
            let (state, writer) = self.restore_one(&path)?;
            sessions.insert(
                state.session().session_id.clone(),
                Arc::new(Mutex::new(Live {
                    state: Arc::new(state),
                    writer,
                })),
            );
        }
        Ok(())
    }

    fn restore_one(&self, path: &Path) -> Result<(WorkflowState, LogWriter), RestoreError> {
        let log_error = |message: String| RestoreError::Log {
            path: path.to_path_buf(),
            message,
        };
        let mut text = read_text(path)?;
        // a crash can leave one unterminated line behind; it was never acknowledged
        if !text.is_empty() && !text.ends_with('\n') {
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            text.truncate(keep);
            std::fs::write(path, &text).map_err(|source| FormatError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        let events = parse_log(&text, &path.display().to_string())?;
        let state = WorkflowState::replay(events, &self.docs, self.settings.workflow).map_err(|e| log_error(e.to_string()))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if stem != state.session().session_id {
            return Err(log_error(format!(
                "file holds session {:?}",
                state.session().session_id
            )));
        }
        Ok((state, LogWriter::open_append(path)?))
    }

    fn live(&self, session_id: &str) -> Result<Arc<Mutex<Live>>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(session_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {session_id:?}")))
    }

    /// The current immutable snapshot of a session.
    pub fn snapshot(&self, session_id: &str) -> Result<Arc<WorkflowState>, ApiError> {
        let live = self.live(session_id)?;
        let guard = lock(&live);
        Ok(Arc::clone(&guard.state))
    }

    /// Runs `command` on a copy of the session, makes its new events durable
    /// and only then publishes the copy.
    fn execute<T>(
        &self,
        session_id: &str,
        command: impl FnOnce(&mut WorkflowState, f64, &DocumentSet) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let live = self.live(session_id)?;
        let mut guard = lock(&live);
        let mut next = WorkflowState::clone(&guard.state);
        let now = self.timestamp(&next);
        let before = next.log().len();
        let out = command(&mut next, now, &self.docs)?;
        if next.log().len() != before {
            guard.writer.append(&next.log()[before..])?;
            guard.state = Arc::new(next);
        }
        Ok(out)
    }

    /// Seconds since session start, never earlier than the last action.
    fn timestamp(&self, state: &WorkflowState) -> f64 {
        let now = self.clock.now() - state.started_at();
        now.max(state.session().last_timestamp()).max(0.0)
    }

    // ---- commands ----

    pub fn create_session(&self, req: CreateSession) -> Result<StateView, ApiError> {
        if req.teacher_id.trim().is_empty() || req.event_type.trim().is_empty() {
            return Err(ApiError::bad_request("teacher_id and event_type must not be empty"));
        }
        if let Some(ontology) = &self.settings.ontology {
            if !ontology.contains(&req.event_type) {
                return Err(ApiError::bad_request(format!("unknown event type {:?}", req.event_type)));
            }
        }
        let _creating = lock(&self.creating);
        let session_id = match &req.session_id {
            Some(id) => {
                if !valid_session_id(id) {
                    return Err(ApiError::bad_request(format!("invalid session id {id:?}")));
                }
                if let Ok(existing) = self.snapshot(id) {
                    let s = existing.session();
                    if s.teacher_id == req.teacher_id && s.event_type == req.event_type {
                        return Ok(self.view(&existing));
                    }
                    return Err(ApiError::conflict(format!("session {id:?} exists with other attributes")));
                }
                id.clone()
            }
            None => {
                let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
                (sessions.len() + 1..)
                    .map(|n| format!("s{n:04}"))
                    .find(|id| !sessions.contains_key(id) && !self.log_path(id).exists())
                    .expect("unbounded range")
            }
        };
        let state = WorkflowState::open(
            &session_id,
            &req.teacher_id,
            &req.event_type,
            self.clock.now(),
            self.settings.workflow,
        );
        let mut writer = LogWriter::create(&self.log_path(&session_id))
            .map_err(|e| ApiError::conflict(format!("cannot create log for session {session_id:?}: {e}")))?;
        writer.append(state.log())?;
        let view = self.view(&state);
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(
            session_id,
            Arc::new(Mutex::new(Live {
                state: Arc::new(state),
                writer,
            })),
        );
        Ok(view)
    }

    pub fn brainstorm(&self, session_id: &str, req: Brainstorm) -> Result<StateView, ApiError> {
        self.execute(session_id, |state, now, docs| {
            if state.phase() != Phase::Brainstorm {
                let listed: Vec<Vec<String>> = state
                    .session()
                    .indicators()
                    .iter()
                    .filter(|i| i.origin == curated_core::annotation::IndicatorOrigin::Brainstormed)
                    .map(|i| i.phrase.clone())
                    .collect();
                let mut asked: Vec<Vec<String>> = Vec::new();
                for p in &req.phrases {
                    let t = curated_core::search::phrase_tokens(p);
                    if !asked.contains(&t) {
                        asked.push(t);
                    }
                }
                if asked == listed {
                    return Ok(());
                }
            }
            state.brainstorm(&req.phrases, now, docs).map_err(ApiError::from)
        })?;
        self.state(session_id)
    }

    pub fn next_indicator(&self, session_id: &str) -> Result<NextIndicator, ApiError> {
        let s = self.snapshot(session_id)?;
        let indicator = s.next_indicator().cloned();
        Ok(NextIndicator {
            budget: indicator
                .as_ref()
                .map_or(0, |i| i.budget(s.config().docs_per_indicator)),
            docs_done: s.docs_done_for_indicator(),
            indicator,
            elapsed_secs: s.elapsed(),
            should_stop: s.should_stop(self.settings.budget_secs),
        })
    }

    pub fn search(&self, params: &SearchParams) -> Result<SearchResults, ApiError> {
        let limit = params.limit.unwrap_or(self.settings.search_limit);
        let query = PhraseQuery::parse(&params.q, limit).map_err(ApiError::bad_request)?;
        if let Some(id) = &params.session {
            self.execute(id, |state, now, docs| state.search(&query, now, docs).map_err(ApiError::from))?;
        }
        Ok(SearchResults {
            doc_ids: self.index.query_phrase(&query),
            phrase: query.phrase,
        })
    }

    pub fn document(&self, doc_id: &str) -> Result<DocView, ApiError> {
        let doc = self
            .docs
            .get(doc_id)
            .ok_or_else(|| ApiError::not_found(format!("unknown document {doc_id:?}")))?;
        Ok(DocView {
            doc_id: doc.doc_id().to_string(),
            text: doc.text().to_string(),
            source: doc.source().map(str::to_string),
            tokens: doc.tokens().to_vec(),
            sentences: doc
                .sentences()
                .iter()
                .enumerate()
                .map(|(i, span)| {
                    let (start, end) = doc.sentence_char_span(i);
                    SentenceView { span: *span, start, end }
                })
                .collect(),
        })
    }

    pub fn annotate(&self, req: AnnotationRequest) -> Result<Accepted, ApiError> {
        let record_id = req.record_id.clone();
        let span = SpanAnnotation {
            record_id: req.record_id,
            doc_id: req.doc_id,
            kind: req.kind,
            start: req.start,
            end: req.end,
            role: req.role,
        };
        let appended = self.execute(&req.session_id, |state, now, docs| {
            state.annotate(span, now, docs).map_err(ApiError::from)
        })?;
        Ok(Accepted {
            record_id,
            outcome: appended.into(),
        })
    }

    pub fn decide(&self, session_id: &str, req: DecisionRequest) -> Result<Accepted, ApiError> {
        let decision = match (req.decision, req.skip_reason) {
            (DecisionKind::EventPresent, None) => Decision::EventPresent,
            (DecisionKind::Negative, None) => Decision::Negative,
            (DecisionKind::Skip, Some(reason)) => Decision::Skip(reason),
            (DecisionKind::Skip, None) => return Err(ApiError::bad_request("SKIP requires skip_reason")),
            (_, Some(_)) => return Err(ApiError::bad_request("skip_reason only goes with SKIP")),
        };
        let appended = self.execute(session_id, |state, now, docs| {
            state
                .classify_sentence(&req.doc_id, req.sentence, decision, &req.record_id, now, docs)
                .map_err(ApiError::from)
        })?;
        Ok(Accepted {
            record_id: req.record_id,
            outcome: appended.into(),
        })
    }

    pub fn promote(&self, session_id: &str, req: Promote) -> Result<Promoted, ApiError> {
        let added = self.execute(session_id, |state, now, docs| {
            state.promote_anchor(&req.phrase, now, docs).map_err(ApiError::from)
        })?;
        let tokens = curated_core::search::phrase_tokens(&req.phrase);
        let s = self.snapshot(session_id)?;
        let indicator = s
            .session()
            .indicators()
            .iter()
            .find(|i| i.phrase == tokens)
            .cloned()
            .ok_or_else(|| ApiError::internal("promoted indicator missing"))?;
        Ok(Promoted { added, indicator })
    }

    pub fn commit(&self, session_id: &str) -> Result<Committed, ApiError> {
        self.execute(session_id, |state, now, docs| {
            let closed_visit = state.open_visit().map(|v| v.visit_id.clone());
            let skip_reason = state.commit_visit(now, docs)?;
            Ok(Committed {
                closed_visit,
                skip_reason,
            })
        })
    }

    pub fn abandon(&self, session_id: &str, req: Abandon) -> Result<StateView, ApiError> {
        self.execute(session_id, |state, now, docs| {
            let indicator = state
                .session()
                .indicators()
                .iter()
                .find(|i| i.priority == req.priority)
                .ok_or(WorkflowError::NoSuchIndicator(req.priority))?;
            if indicator.exhausted {
                return Ok(());
            }
            state
                .apply(
                    LogEvent::IndicatorAbandoned {
                        priority: req.priority,
                        timestamp: now,
                    },
                    docs,
                )
                .map_err(ApiError::from)
        })?;
        self.state(session_id)
    }

    pub fn override_budget(&self, session_id: &str, req: Override) -> Result<StateView, ApiError> {
        self.execute(session_id, |state, now, docs| {
            let current = state
                .session()
                .indicators()
                .iter()
                .find(|i| i.priority == req.priority)
                .ok_or(WorkflowError::NoSuchIndicator(req.priority))?
                .extra_budget;
            if req.extra_budget < current {
                return Err(ApiError::conflict(format!(
                    "extra budget is already {current}; it cannot be lowered"
                )));
            }
            if req.extra_budget == current {
                return Ok(());
            }
            state
                .override_indicator_budget(req.priority, req.extra_budget - current, now, docs)
                .map_err(ApiError::from)
        })?;
        self.state(session_id)
    }

    pub fn done(&self, session_id: &str) -> Result<StateView, ApiError> {
        self.execute(session_id, |state, now, docs| {
            if state.phase() == Phase::Done {
                return Ok(());
            }
            state.finish(now, docs).map_err(ApiError::from)
        })?;
        self.state(session_id)
    }

    pub fn state(&self, session_id: &str) -> Result<StateView, ApiError> {
        let s = self.snapshot(session_id)?;
        Ok(self.view(&s))
    }

    fn view(&self, s: &WorkflowState) -> StateView {
        state_view(s, self.settings.budget_secs)
    }

    pub fn stats(&self, session_id: &str) -> Result<StatsView, ApiError> {
        let s = self.snapshot(session_id)?;
        let stats = session_stats(s.session(), &self.docs).map_err(ApiError::internal)?;
        Ok(StatsView {
            stats,
            elapsed_secs: s.elapsed(),
            kinds: kind_counts(s.session()),
        })
    }
}

/// The client-facing view of a session.
pub fn state_view(s: &WorkflowState, budget_secs: f64) -> StateView {
    let session = s.session();
    StateView {
        session_id: session.session_id.clone(),
        teacher_id: session.teacher_id.clone(),
        event_type: session.event_type.clone(),
        phase: s.phase(),
        started_at: s.started_at(),
        elapsed_secs: s.elapsed(),
        budget_secs,
        should_stop: s.should_stop(budget_secs),
        next_indicator: s.next_indicator().cloned(),
        indicators: session.indicators().to_vec(),
        open_visit: s.open_visit().cloned(),
        records: session.live_records().cloned().collect(),
        retracted: session
            .records()
            .iter()
            .filter(|r| session.is_retracted(&r.record_id))
            .map(|r| r.record_id.clone())
            .collect(),
        searches: session.searches().len(),
        log_events: s.log().len(),
    }
}

// ---- routing ----

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}/brainstorm", post(brainstorm))
        .route("/session/{id}/next-indicator", get(next_indicator))
        .route("/session/{id}/decision", post(decision))
        .route("/session/{id}/promote", post(promote))
        .route("/session/{id}/commit", post(commit))
        .route("/session/{id}/abandon", post(abandon))
        .route("/session/{id}/override", post(override_budget))
        .route("/session/{id}/done", post(done))
        .route("/session/{id}/state", get(state))
        .route("/session/{id}/stats", get(stats))
        .route("/search", get(search))
        .route("/doc/{id}", get(document))
        .route("/annotation", post(annotation))
        .with_state(app)
}

async fn create_session(State(app): State<Shared>, Json(req): Json<CreateSession>) -> ApiResult<StateView> {
    app.create_session(req).map(Json)
}

async fn brainstorm(State(app): State<Shared>, UrlPath(id): UrlPath<String>, Json(req): Json<Brainstorm>) -> ApiResult<StateView> {
    app.brainstorm(&id, req).map(Json)
}

async fn next_indicator(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<NextIndicator> {
    app.next_indicator(&id).map(Json)
}

async fn decision(State(app): State<Shared>, UrlPath(id): UrlPath<String>, Json(req): Json<DecisionRequest>) -> ApiResult<Accepted> {
    app.decide(&id, req).map(Json)
}

async fn promote(State(app): State<Shared>, UrlPath(id): UrlPath<String>, Json(req): Json<Promote>) -> ApiResult<Promoted> {
    app.promote(&id, req).map(Json)
}

async fn commit(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Committed> {
    app.commit(&id).map(Json)
}

async fn abandon(State(app): State<Shared>, UrlPath(id): UrlPath<String>, Json(req): Json<Abandon>) -> ApiResult<StateView> {
    app.abandon(&id, req).map(Json)
}

async fn override_budget(State(app): State<Shared>, UrlPath(id): UrlPath<String>, Json(req): Json<Override>) -> ApiResult<StateView> {
    app.override_budget(&id, req).map(Json)
}

async fn done(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<StateView> {
    app.done(&id).map(Json)
}

async fn state(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<StateView> {
    app.state(&id).map(Json)
}

async fn stats(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<StatsView> {
    app.stats(&id).map(Json)
}

async fn search(State(app): State<Shared>, Query(params): Query<SearchParams>) -> ApiResult<SearchResults> {
    app.search(&params).map(Json)
}

async fn document(State(app): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<DocView> {
    app.document(&id).map(Json)
}

async fn annotation(State(app): State<Shared>, Json(req): Json<AnnotationRequest>) -> ApiResult<Accepted> {
    app.annotate(req).map(Json)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(app: Shared, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
