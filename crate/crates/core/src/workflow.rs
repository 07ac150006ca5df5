//! The curated-training protocol as an event-sourced state machine.
//!
//! A teacher brainstorms a prioritized list of indicator phrases, then works
//! through it: the lowest-priority live indicator is served, the teacher
//! searches for it, opens documents and classifies one sentence per visit.
//! Every visit consumes one unit of the served indicator's document budget.
//! Anchors that are not yet indicators can be promoted to the front of the
//! queue.
//!
//! Every state change is a [`LogEvent`]. Commands validate, produce events
//! and apply them; [`WorkflowState::replay`] folds a stored log back into an
//! identical state.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::annotation::{
    effective_duration, AnnotationError, AnnotationRecord, Appended, Indicator, IndicatorOrigin,
    RecordKind, Session, BREAK_THRESHOLD_SECS,
};
use crate::corpus::DocumentSet;
use crate::search::{phrase_tokens, PhraseQuery};

/// Documents a teacher annotates per indicator before moving on.
pub const DOCS_PER_INDICATOR: u32 = 10;

/// Four hours of effective annotation time.
pub const SESSION_BUDGET_SECS: f64 = 14_400.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    Brainstorm,
    Annotate,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum SkipReason {
    MultipleInstances,
    Unclear,
    NoAnchor,
}

/// The teacher's verdict on one sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    EventPresent,
    Negative,
    Skip(SkipReason),
}

/// One line of the session log.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "event", rename_all = "snake_case"))]
pub enum LogEvent {
    Opened {
        session_id: String,
        teacher_id: String,
        event_type: String,
        /// Wall-clock start in seconds since the Unix epoch.
        started_at: f64,
        timestamp: f64,
    },
    IndicatorAdded {
        phrase: Vec<String>,
        priority: i64,
        origin: IndicatorOrigin,
        timestamp: f64,
    },
    PhaseChanged {
        phase: Phase,
        timestamp: f64,
    },
    Searched {
        phrase: Vec<String>,
        limit: usize,
        timestamp: f64,
    },
    Record(AnnotationRecord),
    Skipped {
        visit_id: String,
        doc_id: String,
        sentence: usize,
        reason: SkipReason,
        timestamp: f64,
    },
    VisitClosed {
        visit_id: String,
        #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
        skip_reason: Option<SkipReason>,
        #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Vec::is_empty"))]
        retracted: Vec<String>,
        timestamp: f64,
    },
    IndicatorAbandoned {
        priority: i64,
        timestamp: f64,
    },
    BudgetOverride {
        priority: i64,
        extra: u32,
        timestamp: f64,
    },
}

impl LogEvent {
    pub fn timestamp(&self) -> f64 {
        match self {
            LogEvent::Opened { timestamp, .. }
            | LogEvent::IndicatorAdded { timestamp, .. }
            | LogEvent::PhaseChanged { timestamp, .. }
            | LogEvent::Searched { timestamp, .. }
            | LogEvent::Skipped { timestamp, .. }
            | LogEvent::VisitClosed { timestamp, .. }
            | LogEvent::IndicatorAbandoned { timestamp, .. }
            | LogEvent::BudgetOverride { timestamp, .. } => *timestamp,
            LogEvent::Record(r) => r.timestamp,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkflowError {
    #[error("action requires phase {expected:?}, session is in {actual:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("indicator list must not be empty")]
    EmptyIndicatorList,
    #[error("indicator phrase has no tokens")]
    EmptyPhrase,
    #[error("indicator {0:?} already listed")]
    DuplicateIndicator(String),
    #[error("priority {0} already used")]
    DuplicatePriority(i64),
    #[error("no pending indicator")]
    NoIndicator,
    #[error("indicator not in sentence")]
    IndicatorNotInSentence,
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error("document {doc_id:?} has no sentence {sentence}")]
    NoSuchSentence { doc_id: String, sentence: usize },
    #[error("a visit is still open; close it first")]
    VisitOpen,
    #[error("no open visit {0:?}")]
    NoSuchVisit(String),
    #[error("no indicator with priority {0}")]
    NoSuchIndicator(i64),
    #[error("budget override must grant at least one document")]
    EmptyOverride,
    #[error("log must start with exactly one opened event")]
    NotOpened,
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("log event {index}: {source}")]
pub struct ReplayError {
    pub index: usize,
    pub source: WorkflowError,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorkflowConfig {
    pub docs_per_indicator: u32,
    pub break_threshold: f64,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        WorkflowConfig {
            docs_per_indicator: DOCS_PER_INDICATOR,
            break_threshold: BREAK_THRESHOLD_SECS,
        }
    }
}

/// The sentence currently being annotated.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Visit {
    /// Record id of the sentence classification.
    pub visit_id: String,
    pub doc_id: String,
    pub sentence: usize,
    pub kind: RecordKind,
    pub indicator_priority: i64,
    /// The classification record plus every span annotated during the visit.
    pub record_ids: Vec<String>,
}

/// A span annotation as submitted by a teacher, before the server stamps it.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanAnnotation {
    pub record_id: String,
    pub doc_id: String,
    pub kind: RecordKind,
    pub start: usize,
    pub end: usize,
    pub role: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkflowState {
    session: Session,
    phase: Phase,
    started_at: f64,
    visit: Option<Visit>,
    log: Vec<LogEvent>,
    timestamps: Vec<f64>,
    config: WorkflowConfig,
}

impl WorkflowState {
    /// Starts a new session in the brainstorm phase.
    pub fn open(
        session_id: impl Into<String>,
        teacher_id: impl Into<String>,
        event_type: impl Into<String>,
        started_at: f64,
        config: WorkflowConfig,
    ) -> Self {
        let session_id = session_id.into();
        let teacher_id = teacher_id.into();
        let event_type = event_type.into();
        let opened = LogEvent::Opened {
            session_id: session_id.clone(),
            teacher_id: teacher_id.clone(),
            event_type: event_type.clone(),
            started_at,
            timestamp: 0.0,
        };
        WorkflowState {
            session: Session::new(session_id, teacher_id, event_type),
            phase: Phase::Brainstorm,
            started_at,
            visit: None,
            log: vec![opened],
            timestamps: vec![0.0],
            config,
        }
    }

    /// Rebuilds a state by re-applying every logged event.
    pub fn replay<I>(events: I, docs: &DocumentSet, config: WorkflowConfig) -> Result<Self, ReplayError>
    where
        I: IntoIterator<Item = LogEvent>,
    {
        let mut events = events.into_iter();
        let mut state = match events.next() {
            Some(LogEvent::Opened {
                session_id,
                teacher_id,
                event_type,
                started_at,
                timestamp,
            }) if timestamp == 0.0 => {
                Self::open(session_id, teacher_id, event_type, started_at, config)
            }
            _ => {
                return Err(ReplayError {
                    index: 0,
                    source: WorkflowError::NotOpened,
                })
            }
        };
        for (i, event) in events.enumerate() {
            state.apply(event, docs).map_err(|source| ReplayError {
                index: i + 1,
                source,
            })?;
        }
        Ok(state)
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn started_at(&self) -> f64 {
        self.started_at
    }

    pub fn log(&self) -> &[LogEvent] {
        &self.log
    }

    pub fn config(&self) -> &WorkflowConfig {
        &self.config
    }

    pub fn open_visit(&self) -> Option<&Visit> {
        self.visit.as_ref()
    }

    /// Effective (break-clipped) seconds across every logged action.
    pub fn elapsed(&self) -> f64 {
        effective_duration(&self.timestamps, self.config.break_threshold).unwrap_or(0.0)
    }

    /// The live indicator with minimal priority, if any remain.
    pub fn next_indicator(&self) -> Option<&Indicator> {
        self.session
            .indicators()
            .iter()
            .filter(|i| !i.exhausted)
            .min_by_key(|i| i.priority)
    }

    pub fn docs_done_for_indicator(&self) -> u32 {
        self.next_indicator().map_or(0, |i| i.docs_annotated)
    }

    /// Advisory stop signal: time budget reached, teacher finished, or
    /// nothing left to search.
    pub fn should_stop(&self, budget_secs: f64) -> bool {
        self.phase == Phase::Done
            || self.elapsed() >= budget_secs
            || (self.phase == Phase::Annotate && self.next_indicator().is_none())
    }

    /// Live records outside the open visit.
    pub fn committed_records(&self) -> Vec<&AnnotationRecord> {
        let open: &[String] = self.visit.as_ref().map_or(&[], |v| &v.record_ids);
        self.session
            .live_records()
            .filter(|r| !open.contains(&r.record_id))
            .collect()
    }

    fn now_checked(&self, timestamp: f64) -> Result<(), WorkflowError> {
        let last = self.session.last_timestamp();
        if timestamp < last || timestamp.is_nan() {
            return Err(AnnotationError::TimestampDecreased {
                last,
                got: timestamp,
            }
            .into());
        }
        Ok(())
    }

    fn require_phase(&self, expected: Phase) -> Result<(), WorkflowError> {
        if self.phase != expected {
            return Err(WorkflowError::WrongPhase {
                expected,
                actual: self.phase,
            });
        }
        Ok(())
    }

    fn served_phrase_in(
        &self,
        docs: &DocumentSet,
        doc_id: &str,
        sentence: usize,
    ) -> Result<i64, WorkflowError> {
        let indicator = self.next_indicator().ok_or(WorkflowError::NoIndicator)?;
        let doc = docs
            .get(doc_id)
            .ok_or_else(|| WorkflowError::UnknownDocument(doc_id.to_string()))?;
        if sentence >= doc.sentences().len() {
            return Err(WorkflowError::NoSuchSentence {
                doc_id: doc_id.to_string(),
                sentence,
            });
        }
        if !doc.sentence_contains_phrase(sentence, &indicator.phrase) {
            return Err(WorkflowError::IndicatorNotInSentence);
        }
        Ok(indicator.priority)
    }

    fn consume_budget(&mut self, priority: i64) {
        let per = self.config.docs_per_indicator;
        if let Some(ind) = self
            .session
            .indicators_mut()
            .iter_mut()
            .find(|i| i.priority == priority)
        {
            ind.docs_annotated += 1;
            if ind.docs_annotated >= ind.budget(per) {
                ind.exhausted = true;
            }
        }
    }

    fn push(&mut self, event: LogEvent) {
        self.timestamps.push(event.timestamp());
        self.log.push(event);
    }

    /// Validates one event against the current state and applies it.
    /// On error the state is unchanged.
    pub fn apply(&mut self, event: LogEvent, docs: &DocumentSet) -> Result<(), WorkflowError> {
        if self.phase == Phase::Done {
            return Err(WorkflowError::WrongPhase {
                expected: Phase::Annotate,
                actual: Phase::Done,
            });
        }
        self.now_checked(event.timestamp())?;
        match &event {
            LogEvent::Opened { .. } => return Err(WorkflowError::NotOpened),
            LogEvent::IndicatorAdded {
                phrase,
                priority,
                origin,
                timestamp,
            } => {
                let expected = match origin {
                    IndicatorOrigin::Brainstormed => Phase::Brainstorm,
                    IndicatorOrigin::Promoted => Phase::Annotate,
                };
                self.require_phase(expected)?;
                if phrase.is_empty() {
                    return Err(WorkflowError::EmptyPhrase);
                }
                let existing = self.session.indicators();
                if existing.iter().any(|i| &i.phrase == phrase) {
                    return Err(WorkflowError::DuplicateIndicator(phrase.join(" ")));
                }
                if existing.iter().any(|i| i.priority == *priority) {
                    return Err(WorkflowError::DuplicatePriority(*priority));
                }
                self.session.advance_clock(*timestamp)?;
                self.session
                    .indicators_mut()
                    .push(Indicator::new(phrase.clone(), *priority, *origin));
            }
            LogEvent::PhaseChanged { phase, timestamp } => {
                match (self.phase, phase) {
                    (Phase::Brainstorm, Phase::Annotate) => {
                        if self.session.indicators().is_empty() {
                            return Err(WorkflowError::EmptyIndicatorList);
                        }
                    }
                    (Phase::Annotate, Phase::Done) => {
                        if self.visit.is_some() {
                            return Err(WorkflowError::VisitOpen);
                        }
                    }
                    (actual, _) => {
                        return Err(WorkflowError::WrongPhase {
                            expected: match actual {
                                Phase::Brainstorm => Phase::Annotate,
                                _ => Phase::Done,
                            },
                            actual,
                        })
                    }
                }
                self.session.advance_clock(*timestamp)?;
                self.phase = *phase;
            }
            LogEvent::Searched {
                phrase,
                limit,
                timestamp,
            } => {
                let query = PhraseQuery::new(phrase.clone(), *limit)
                    .map_err(|_| WorkflowError::EmptyPhrase)?;
                self.session.log_search(*timestamp, query)?;
            }
            LogEvent::Record(record) => {
                self.require_phase(Phase::Annotate)?;
                let doc = docs
                    .get(&record.doc_id)
                    .ok_or_else(|| WorkflowError::UnknownDocument(record.doc_id.clone()))?;
                let (outcome, sentence) = self.session.validate(record, doc)?;
                if outcome == Appended::Duplicate {
                    return Err(AnnotationError::DuplicateRecordId(record.record_id.clone()).into());
                }
                if record.kind.is_sentence_level() {
                    if self.visit.is_some() {
                        return Err(WorkflowError::VisitOpen);
                    }
                    let priority = self.served_phrase_in(docs, &record.doc_id, sentence)?;
                    self.session.append_record(record.clone(), doc)?;
                    self.consume_budget(priority);
                    self.visit = Some(Visit {
                        visit_id: record.record_id.clone(),
                        doc_id: record.doc_id.clone(),
                        sentence,
                        kind: record.kind,
                        indicator_priority: priority,
                        record_ids: vec![record.record_id.clone()],
                    });
                } else {
                    self.session.append_record(record.clone(), doc)?;
                    if let Some(visit) = self.visit.as_mut() {
                        if visit.doc_id == record.doc_id && visit.sentence == sentence {
                            visit.record_ids.push(record.record_id.clone());
                        }
                    }
                }
            }
            LogEvent::Skipped {
                doc_id,
                sentence,
                timestamp,
                ..
            } => {
                self.require_phase(Phase::Annotate)?;
                if self.visit.is_some() {
                    return Err(WorkflowError::VisitOpen);
                }
                let priority = self.served_phrase_in(docs, doc_id, *sentence)?;
                self.session.advance_clock(*timestamp)?;
                self.consume_budget(priority);
            }
            LogEvent::VisitClosed {
                visit_id,
                retracted,
                timestamp,
                ..
            } => {
                match &self.visit {
                    Some(v) if &v.visit_id == visit_id => {}
                    _ => return Err(WorkflowError::NoSuchVisit(visit_id.clone())),
                }
                self.session.advance_clock(*timestamp)?;
                self.session.retract(retracted);
                self.visit = None;
            }
            LogEvent::IndicatorAbandoned {
                priority,
                timestamp,
            } => {
                self.require_phase(Phase::Annotate)?;
                let served = self.next_indicator().ok_or(WorkflowError::NoIndicator)?;
                if served.priority != *priority {
                    return Err(WorkflowError::NoSuchIndicator(*priority));
                }
                self.session.advance_clock(*timestamp)?;
                if let Some(ind) = self
                    .session
                    .indicators_mut()
                    .iter_mut()
                    .find(|i| i.priority == *priority)
                {
                    ind.exhausted = true;
                }
            }
            LogEvent::BudgetOverride {
                priority,
                extra,
                timestamp,
            } => {
                self.require_phase(Phase::Annotate)?;
                if *extra == 0 {
                    return Err(WorkflowError::EmptyOverride);
                }
                if !self.session.indicators().iter().any(|i| i.priority == *priority) {
                    return Err(WorkflowError::NoSuchIndicator(*priority));
                }
                self.session.advance_clock(*timestamp)?;
                let per = self.config.docs_per_indicator;
                if let Some(ind) = self
                    .session
                    .indicators_mut()
                    .iter_mut()
                    .find(|i| i.priority == *priority)
                {
                    ind.extra_budget += extra;
                    ind.exhausted = ind.docs_annotated >= ind.budget(per);
                }
            }
        }
        self.push(event);
        Ok(())
    }

    /// Applies several events atomically.
    fn apply_all(&mut self, events: Vec<LogEvent>, docs: &DocumentSet) -> Result<(), WorkflowError> {
        if events.len() == 1 {
            return self.apply(events.into_iter().next().expect("one event"), docs);
        }
        let mut next = self.clone();
        for event in events {
            next.apply(event, docs)?;
        }
        *self = next;
        Ok(())
    }

    fn closing_event(&self, timestamp: f64) -> Option<LogEvent> {
        let visit = self.visit.as_ref()?;
        let (start, end) = self
            .session
            .record(&visit.visit_id)
            .map(|r| (r.start, r.end))
            .unwrap_or_default();
        // anchors from an earlier visit to the same sentence also count
        let has_anchor = visit.kind != RecordKind::EventPresent
            || self.session.live_records().any(|r| {
                r.kind == RecordKind::Anchor
                    && r.doc_id == visit.doc_id
                    && start <= r.start
                    && r.end <= end
            });
        let (skip_reason, retracted) = if has_anchor {
            (None, Vec::new())
        } else {
            (Some(SkipReason::NoAnchor), visit.record_ids.clone())
        };
        Some(LogEvent::VisitClosed {
            visit_id: visit.visit_id.clone(),
            skip_reason,
            retracted,
            timestamp,
        })
    }

    // ---- commands ----

    /// Inserts the brainstormed indicators in order and starts annotating.
    pub fn brainstorm<S: AsRef<str>>(
        &mut self,
        phrases: &[S],
        timestamp: f64,
        docs: &DocumentSet,
    ) -> Result<(), WorkflowError> {
        self.require_phase(Phase::Brainstorm)?;
        if phrases.is_empty() {
            return Err(WorkflowError::EmptyIndicatorList);
        }
        let mut tokenized: Vec<Vec<String>> = Vec::new();
        for p in phrases {
            let tokens = phrase_tokens(p.as_ref());
            if tokens.is_empty() {
                return Err(WorkflowError::EmptyPhrase);
            }
            if !tokenized.contains(&tokens) {
                tokenized.push(tokens);
            }
        }
        let mut events: Vec<LogEvent> = tokenized
            .into_iter()
            .enumerate()
            .map(|(i, phrase)| LogEvent::IndicatorAdded {
                phrase,
                priority: i as i64,
                origin: IndicatorOrigin::Brainstormed,
                timestamp,
            })
            .collect();
        events.push(LogEvent::PhaseChanged {
            phase: Phase::Annotate,
            timestamp,
        });
        self.apply_all(events, docs)
    }

    pub fn search(&mut self, query: &PhraseQuery, timestamp: f64, docs: &DocumentSet) -> Result<(), WorkflowError> {
        self.apply(
            LogEvent::Searched {
                phrase: query.phrase.clone(),
                limit: query.limit,
                timestamp,
            },
            docs,
        )
    }

    /// Classifies one sentence containing the served indicator.
    ///
    /// Any open visit is closed first. `record_id` names the classification
    /// record, or the visit when skipping.
    pub fn classify_sentence(
        &mut self,
        doc_id: &str,
        sentence: usize,
        decision: Decision,
        record_id: &str,
        timestamp: f64,
        docs: &DocumentSet,
    ) -> Result<Appended, WorkflowError> {
        self.require_phase(Phase::Annotate)?;
        if let Some(existing) = self.session.record(record_id) {
            let kind = match decision {
                Decision::EventPresent => Some(RecordKind::EventPresent),
                Decision::Negative => Some(RecordKind::Negative),
                Decision::Skip(_) => None,
            };
            if Some(existing.kind) == kind && existing.doc_id == doc_id
                && self.session.sentence_of(record_id) == Some(sentence)
            {
                return Ok(Appended::Duplicate);
            }
            return Err(AnnotationError::DuplicateRecordId(record_id.to_string()).into());
        }
        if self.log.iter().any(|e| matches!(e, LogEvent::Skipped { visit_id, .. } if visit_id == record_id)) {
            return match decision {
                Decision::Skip(_) => Ok(Appended::Duplicate),
                _ => Err(AnnotationError::DuplicateRecordId(record_id.to_string()).into()),
            };
        }
        let doc = docs
            .get(doc_id)
            .ok_or_else(|| WorkflowError::UnknownDocument(doc_id.to_string()))?;
        if sentence >= doc.sentences().len() {
            return Err(WorkflowError::NoSuchSentence {
                doc_id: doc_id.to_string(),
                sentence,
            });
        }
        let mut events: Vec<LogEvent> = self.closing_event(timestamp).into_iter().collect();
        let event = match decision {
            Decision::Skip(reason) => LogEvent::Skipped {
                visit_id: record_id.to_string(),
                doc_id: doc_id.to_string(),
                sentence,
                reason,
                timestamp,
            },
            Decision::EventPresent | Decision::Negative => {
                let (start, end) = doc.sentence_char_span(sentence);
                LogEvent::Record(AnnotationRecord {
                    record_id: record_id.to_string(),
                    session_id: self.session.session_id.clone(),
                    teacher_id: self.session.teacher_id.clone(),
                    event_type: self.session.event_type.clone(),
                    doc_id: doc_id.to_string(),
                    kind: if decision == Decision::EventPresent {
                        RecordKind::EventPresent
                    } else {
                        RecordKind::Negative
                    },
                    start,
                    end,
                    role: None,
                    timestamp,
                })
            }
        };
        events.push(event);
        self.apply_all(events, docs)?;
        Ok(Appended::Inserted)
    }

    /// Appends an ANCHOR, ARGUMENT or INTERESTING span, or a sentence
    /// classification given by its char span.
    pub fn annotate(
        &mut self,
        span: SpanAnnotation,
        timestamp: f64,
        docs: &DocumentSet,
    ) -> Result<Appended, WorkflowError> {
        self.require_phase(Phase::Annotate)?;
        let doc = docs
            .get(&span.doc_id)
            .ok_or_else(|| WorkflowError::UnknownDocument(span.doc_id.clone()))?;
        if span.kind.is_sentence_level() {
            let sentence = doc
                .sentence_at(span.start, span.end)
                .ok_or(AnnotationError::NotASentence {
                    kind: span.kind,
                    start: span.start,
                    end: span.end,
                })?;
            let decision = if span.kind == RecordKind::EventPresent {
                Decision::EventPresent
            } else {
                Decision::Negative
            };
            return self.classify_sentence(&span.doc_id, sentence, decision, &span.record_id, timestamp, docs);
        }
        let record = AnnotationRecord {
            record_id: span.record_id,
            session_id: self.session.session_id.clone(),
            teacher_id: self.session.teacher_id.clone(),
            event_type: self.session.event_type.clone(),
            doc_id: span.doc_id,
            kind: span.kind,
            start: span.start,
            end: span.end,
            role: span.role,
            timestamp,
        };
        let (outcome, _) = self.session.validate(&record, doc)?;
        if outcome == Appended::Duplicate {
            return Ok(outcome);
        }
        self.apply(LogEvent::Record(record), docs)?;
        Ok(Appended::Inserted)
    }

    /// Closes the open visit. An EVENT_PRESENT visit without any anchor is
    /// turned into a NO_ANCHOR skip and its records are retracted.
    ///
    /// Returns the skip reason when that happened.
    pub fn commit_visit(&mut self, timestamp: f64, docs: &DocumentSet) -> Result<Option<SkipReason>, WorkflowError> {
        match self.closing_event(timestamp) {
            None => Ok(None),
            Some(event) => {
                let reason = match &event {
                    LogEvent::VisitClosed { skip_reason, .. } => *skip_reason,
                    _ => None,
                };
                self.apply(event, docs)?;
                Ok(reason)
            }
        }
    }

    /// Puts an annotated anchor phrase at the front of the queue.
    ///
    /// Returns false when the phrase is already an indicator.
    pub fn promote_anchor(&mut self, phrase: &str, timestamp: f64, docs: &DocumentSet) -> Result<bool, WorkflowError> {
        self.require_phase(Phase::Annotate)?;
        let tokens = phrase_tokens(phrase);
        if tokens.is_empty() {
            return Err(WorkflowError::EmptyPhrase);
        }
        let indicators = self.session.indicators();
        if indicators.iter().any(|i| i.phrase == tokens) {
            return Ok(false);
        }
        // min over the whole list keeps priorities unique even when an
        // exhausted indicator sits below the live minimum
        let priority = indicators.iter().map(|i| i.priority).min().unwrap_or(0) - 1;
        self.apply(
            LogEvent::IndicatorAdded {
                phrase: tokens,
                priority,
                origin: IndicatorOrigin::Promoted,
                timestamp,
            },
            docs,
        )?;
        Ok(true)
    }

    /// Teacher gives up on the served indicator before its budget is spent.
    pub fn abandon_indicator(&mut self, timestamp: f64, docs: &DocumentSet) -> Result<(), WorkflowError> {
        let priority = self.next_indicator().ok_or(WorkflowError::NoIndicator)?.priority;
        self.apply(LogEvent::IndicatorAbandoned { priority, timestamp }, docs)
    }

    /// Grants the served indicator `extra` documents beyond its budget.
    pub fn override_budget(&mut self, extra: u32, timestamp: f64, docs: &DocumentSet) -> Result<(), WorkflowError> {
        let priority = match self.next_indicator() {
            Some(i) => i.priority,
            None => self
                .session
                .indicators()
                .iter()
                .filter(|i| i.exhausted)
                .min_by_key(|i| i.priority)
                .ok_or(WorkflowError::NoIndicator)?
                .priority,
        };
        self.override_indicator_budget(priority, extra, timestamp, docs)
    }

    pub fn override_indicator_budget(
        &mut self,
        priority: i64,
        extra: u32,
        timestamp: f64,
        docs: &DocumentSet,
    ) -> Result<(), WorkflowError> {
        self.apply(
            LogEvent::BudgetOverride {
                priority,
                extra,
                timestamp,
            },
            docs,
        )
    }

    /// Teacher's done signal. Closes any open visit first.
    pub fn finish(&mut self, timestamp: f64, docs: &DocumentSet) -> Result<(), WorkflowError> {
        self.require_phase(Phase::Annotate)?;
        let mut events: Vec<LogEvent> = self.closing_event(timestamp).into_iter().collect();
        events.push(LogEvent::PhaseChanged {
            phase: Phase::Done,
            timestamp,
        });
        self.apply_all(events, docs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocumentRecord;
    use alloc::format;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn corpus() -> DocumentSet {
        let texts = [
            "Students protest in Paris . Police watched .",
            "Farmers protest near Lyon . A riot followed .",
            "The rally was quiet . Workers protest again .",
            "Nothing here .",
        ];
        DocumentSet::ingest(texts.iter().enumerate().map(|(i, t)| DocumentRecord {
            doc_id: format!("d{i}"),
            text: t.to_string(),
            source: None,
        }))
        .unwrap()
    }

    fn started(phrases: &[&str]) -> (WorkflowState, DocumentSet) {
        let docs = corpus();
        let mut w = WorkflowState::open("s", "t", "Conflict.Demonstrate", 1.7e9, WorkflowConfig::default());
        w.brainstorm(phrases, 1.0, &docs).unwrap();
        (w, docs)
    }

    fn span(id: &str, doc: &str, kind: RecordKind, start: usize, end: usize, role: Option<&str>) -> SpanAnnotation {
        SpanAnnotation {
            record_id: id.into(),
            doc_id: doc.into(),
            kind,
            start,
            end,
            role: role.map(str::to_string),
        }
    }

    #[test]
    fn brainstorm_examples() {
        let (w, docs) = started(&["riot", "march", "rally"]);
        let prios: Vec<(String, i64)> = w
            .session()
            .indicators()
            .iter()
            .map(|i| (i.phrase.join(" "), i.priority))
            .collect();
        assert_eq!(prios, [("riot".into(), 0), ("march".into(), 1), ("rally".into(), 2)]);
        assert_eq!(w.phase(), Phase::Annotate);
        let mut w2 = w.clone();
        assert!(matches!(w2.brainstorm(&["x"], 2.0, &docs), Err(WorkflowError::WrongPhase { .. })));
        assert_eq!(w2, w);

        let mut fresh = WorkflowState::open("s", "t", "T", 0.0, WorkflowConfig::default());
        let empty: [&str; 0] = [];
        assert_eq!(fresh.brainstorm(&empty, 1.0, &docs), Err(WorkflowError::EmptyIndicatorList));
        fresh.brainstorm(&["protest"], 1.0, &docs).unwrap();
        assert_eq!(fresh.next_indicator().unwrap().priority, 0);
    }

    #[test]
    fn serves_min_live_priority() {
        let (mut w, _) = started(&["a", "b", "c"]);
        let inds = w.session.indicators_mut();
        inds[0].priority = 5;
        inds[0].exhausted = true;
        inds[1].priority = 2;
        inds[2].priority = 7;
        assert_eq!(w.next_indicator().unwrap().priority, 2);
        for i in w.session.indicators_mut() {
            i.exhausted = true;
        }
        assert!(w.next_indicator().is_none());
        assert!(w.should_stop(SESSION_BUDGET_SECS));
    }

    #[test]
    fn sentence_decisions() {
        let (mut w, docs) = started(&["protest"]);
        assert_eq!(
            w.classify_sentence("d0", 1, Decision::Negative, "x", 2.0, &docs),
            Err(WorkflowError::IndicatorNotInSentence)
        );
        w.classify_sentence("d0", 0, Decision::Negative, "n0", 2.0, &docs).unwrap();
        let n0 = w.session().record("n0").unwrap();
        assert_eq!((n0.kind, n0.start, n0.end), (RecordKind::Negative, 0, 27));
        assert_eq!(w.docs_done_for_indicator(), 1);

        let before = w.session().records().len();
        w.classify_sentence("d1", 0, Decision::Skip(SkipReason::MultipleInstances), "k1", 3.0, &docs)
            .unwrap();
        assert_eq!(w.session().records().len(), before);
        assert_eq!(w.docs_done_for_indicator(), 2);

        // EVENT_PRESENT without anchors becomes a NO_ANCHOR skip at commit
        w.classify_sentence("d2", 1, Decision::EventPresent, "e2", 4.0, &docs).unwrap();
        assert_eq!(w.commit_visit(5.0, &docs), Ok(Some(SkipReason::NoAnchor)));
        assert!(w.session().is_retracted("e2"));
        assert!(w.committed_records().iter().all(|r| r.kind != RecordKind::EventPresent));
        assert_eq!(w.docs_done_for_indicator(), 3);
    }

    #[test]
    fn anchored_visit_commits() {
        let (mut w, docs) = started(&["protest"]);
        w.classify_sentence("d0", 0, Decision::EventPresent, "e", 2.0, &docs).unwrap();
        w.annotate(span("a", "d0", RecordKind::Anchor, 9, 16, None), 3.0, &docs).unwrap();
        w.annotate(span("g", "d0", RecordKind::Argument, 0, 8, Some("Entity")), 4.0, &docs).unwrap();
        assert_eq!(w.committed_records().len(), 0);
        assert_eq!(w.commit_visit(5.0, &docs), Ok(None));
        assert_eq!(w.committed_records().len(), 3);
        assert!(w.open_visit().is_none());
    }

    #[test]
    fn retries_are_idempotent() {
        let (mut w, docs) = started(&["protest"]);
        w.classify_sentence("d0", 0, Decision::EventPresent, "e", 2.0, &docs).unwrap();
        let snapshot = w.clone();
        assert_eq!(w.classify_sentence("d0", 0, Decision::EventPresent, "e", 9.0, &docs), Ok(Appended::Duplicate));
        assert_eq!(w, snapshot);
        w.annotate(span("a", "d0", RecordKind::Anchor, 9, 16, None), 3.0, &docs).unwrap();
        let snapshot = w.clone();
        assert_eq!(
            w.annotate(span("a", "d0", RecordKind::Anchor, 9, 16, None), 4.0, &docs),
            Ok(Appended::Duplicate)
        );
        assert_eq!(w, snapshot);
        assert!(w.annotate(span("a", "d0", RecordKind::Anchor, 0, 8, None), 4.0, &docs).is_err());
    }

    #[test]
    fn promotion_examples() {
        let (mut w, docs) = started(&["protest", "rally"]);
        assert_eq!(w.promote_anchor("marched", 2.0, &docs), Ok(true));
        assert_eq!(w.next_indicator().unwrap().priority, -1);
        let snapshot = w.clone();
        assert_eq!(w.promote_anchor("Protest", 3.0, &docs), Ok(false));
        assert_eq!(w, snapshot);
        assert_eq!(w.promote_anchor("riot", 3.0, &docs), Ok(true));
        let served = w.next_indicator().unwrap();
        assert_eq!((served.phrase.join(" ").as_str(), served.priority), ("riot", -2));
        assert_eq!(served.origin, IndicatorOrigin::Promoted);
    }

    #[test]
    fn budget_and_override() {
        let docs = corpus();
        let config = WorkflowConfig {
            docs_per_indicator: 2,
            ..WorkflowConfig::default()
        };
        let mut w = WorkflowState::open("s", "t", "T", 0.0, config);
        w.brainstorm(&["protest", "rally"], 0.0, &docs).unwrap();
        w.classify_sentence("d0", 0, Decision::Negative, "n0", 1.0, &docs).unwrap();
        w.classify_sentence("d1", 0, Decision::Negative, "n1", 2.0, &docs).unwrap();
        assert_eq!(w.next_indicator().unwrap().phrase, ["rally"]);
        w.override_indicator_budget(0, 1, 3.0, &docs).unwrap();
        assert_eq!(w.next_indicator().unwrap().phrase, ["protest"]);
        w.classify_sentence("d2", 1, Decision::Negative, "n2", 4.0, &docs).unwrap();
        assert_eq!(w.next_indicator().unwrap().phrase, ["rally"]);
        w.abandon_indicator(5.0, &docs).unwrap();
        assert!(w.next_indicator().is_none());
        assert_eq!(w.override_budget(0, 6.0, &docs), Err(WorkflowError::EmptyOverride));
    }

    #[test]
    fn stop_signals() {
        let (mut w, docs) = started(&["protest"]);
        assert!(!w.should_stop(SESSION_BUDGET_SECS));
        let q = PhraseQuery::parse("protest", 10).unwrap();
        w.search(&q, 100.0, &docs).unwrap();
        assert_eq!(w.elapsed(), 100.0);
        assert!(!w.should_stop(SESSION_BUDGET_SECS));
        let mut t = 100.0;
        while w.elapsed() < SESSION_BUDGET_SECS {
            t += 120.0;
            w.search(&q, t, &docs).unwrap();
        }
        assert!(w.should_stop(SESSION_BUDGET_SECS));
        // advisory only
        w.classify_sentence("d0", 0, Decision::Negative, "late", t + 1.0, &docs).unwrap();
        w.finish(t + 2.0, &docs).unwrap();
        assert_eq!(w.phase(), Phase::Done);
        assert!(w.search(&q, t + 3.0, &docs).is_err());
    }

    #[test]
    fn replay_reproduces_state() {
        let (mut w, docs) = started(&["protest", "riot"]);
        w.classify_sentence("d0", 0, Decision::EventPresent, "e", 2.0, &docs).unwrap();
        w.annotate(span("a", "d0", RecordKind::Anchor, 9, 16, None), 3.0, &docs).unwrap();
        w.promote_anchor("police", 4.0, &docs).unwrap();
        w.classify_sentence("d0", 1, Decision::EventPresent, "e2", 5.0, &docs).unwrap();
        w.abandon_indicator(5.5, &docs).unwrap();
        w.classify_sentence("d1", 0, Decision::Negative, "n", 6.0, &docs).unwrap();
        w.finish(7.0, &docs).unwrap();
        assert!(w.session().is_retracted("e2"));
        let again = WorkflowState::replay(w.log().to_vec(), &docs, WorkflowConfig::default()).unwrap();
        assert_eq!(again, w);

        let mut broken = w.log().to_vec();
        broken.swap(3, 4);
        assert!(WorkflowState::replay(broken, &docs, WorkflowConfig::default()).is_err());
        assert!(WorkflowState::replay(w.log()[1..].to_vec(), &docs, WorkflowConfig::default()).is_err());
    }

    #[derive(Clone, Debug)]
    enum Step {
        Classify(usize, usize, u8),
        Anchor,
        Promote(usize),
        Commit,
        Abandon,
        Wait(u8),
    }

    fn step() -> impl Strategy<Value = Step> {
        prop_oneof![
            4 => (0usize..4, 0usize..2, 0u8..4).prop_map(|(d, s, k)| Step::Classify(d, s, k)),
            3 => Just(Step::Anchor),
            1 => (0usize..6).prop_map(Step::Promote),
            1 => Just(Step::Commit),
            1 => Just(Step::Abandon),
            1 => any::<u8>().prop_map(Step::Wait),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn scripted_sessions_replay_and_keep_queue_discipline(steps in proptest::collection::vec(step(), 1..40)) {
            let words = ["protest", "riot", "rally", "police", "farmers", "quiet"];
            let (mut w, docs) = started(&["protest", "rally"]);
            let mut t = 1.0;
            for (n, s) in steps.iter().enumerate() {
                t += 1.0;
                let id = format!("r{n}");
                let _ = match s {
                    Step::Classify(d, sent, k) => {
                        let decision = match k {
                            0 => Decision::EventPresent,
                            1 => Decision::Negative,
                            2 => Decision::Skip(SkipReason::Unclear),
                            _ => Decision::Skip(SkipReason::MultipleInstances),
                        };
                        w.classify_sentence(&format!("d{d}"), *sent, decision, &id, t, &docs).map(|_| ())
                    }
                    Step::Anchor => match w.open_visit().cloned() {
                        Some(v) => {
                            let doc = docs.get(&v.doc_id).unwrap();
                            let tok = doc.tokens()[doc.sentences()[v.sentence].first_token];
                            w.annotate(span(&id, &v.doc_id, RecordKind::Anchor, tok.start, tok.end, None), t, &docs).map(|_| ())
                        }
                        None => Ok(()),
                    },
                    Step::Promote(i) => {
                        let min_before = w.session().indicators().iter().map(|i| i.priority).min().unwrap();
                        let promoted = w.promote_anchor(words[*i], t, &docs);
                        if promoted == Ok(true) {
                            prop_assert_eq!(w.next_indicator().unwrap().priority, min_before - 1);
                        }
                        promoted.map(|_| ())
                    }
                    Step::Commit => w.commit_visit(t, &docs).map(|_| ()),
                    Step::Abandon => w.abandon_indicator(t, &docs),
                    Step::Wait(secs) => {
                        t += *secs as f64;
                        Ok(())
                    }
                };
                let live_min = w.session().indicators().iter().filter(|i| !i.exhausted).map(|i| i.priority).min();
                prop_assert_eq!(w.next_indicator().map(|i| i.priority), live_min);
                let replayed = WorkflowState::replay(w.log().to_vec(), &docs, WorkflowConfig::default()).unwrap();
                prop_assert_eq!(&replayed, &w);
            }
            let _ = w.finish(t + 1.0, &docs);
            for r in w.committed_records() {
                if r.kind == RecordKind::EventPresent {
                    prop_assert!(w.session().live_records().any(|a| a.kind == RecordKind::Anchor
                        && a.doc_id == r.doc_id && r.start <= a.start && a.end <= r.end));
                }
            }
        }
    }
}
