//! Append-only annotation store, indicator lists and time accounting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::{Document, DocumentSet};
use crate::search::PhraseQuery;

/// Idle gaps longer than this are clipped when measuring work time.
pub const BREAK_THRESHOLD_SECS: f64 = 120.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum RecordKind {
    EventPresent,
    Negative,
    Anchor,
    Argument,
    Interesting,
}

impl RecordKind {
    /// Sentence-level classifications, as opposed to spans inside a sentence.
    pub fn is_sentence_level(self) -> bool {
        matches!(self, RecordKind::EventPresent | RecordKind::Negative)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::EventPresent => "EVENT_PRESENT",
            RecordKind::Negative => "NEGATIVE",
            RecordKind::Anchor => "ANCHOR",
            RecordKind::Argument => "ARGUMENT",
            RecordKind::Interesting => "INTERESTING",
        }
    }
}

impl core::fmt::Display for RecordKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum IndicatorOrigin {
    Brainstormed,
    Promoted,
}

/// A search phrase in the teacher's queue. Lower priority is served first.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Indicator {
    pub phrase: Vec<String>,
    pub priority: i64,
    pub origin: IndicatorOrigin,
    pub docs_annotated: u32,
    pub exhausted: bool,
    /// Documents granted beyond the normal budget by teacher override.
    pub extra_budget: u32,
}

impl Indicator {
    pub fn new(phrase: Vec<String>, priority: i64, origin: IndicatorOrigin) -> Self {
        Indicator {
            phrase,
            priority,
            origin,
            docs_annotated: 0,
            exhausted: false,
            extra_budget: 0,
        }
    }

    pub fn budget(&self, per_indicator: u32) -> u32 {
        per_indicator + self.extra_budget
    }
}

/// One timestamped teacher annotation, spanning `[start, end)` in chars.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnnotationRecord {
    pub record_id: String,
    pub session_id: String,
    pub teacher_id: String,
    pub event_type: String,
    pub doc_id: String,
    pub kind: RecordKind,
    pub start: usize,
    pub end: usize,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub role: Option<String>,
    /// Seconds since session start.
    pub timestamp: f64,
}

impl AnnotationRecord {
    /// Equality ignoring the timestamp, used to recognise client retries.
    pub fn same_content(&self, other: &AnnotationRecord) -> bool {
        self.record_id == other.record_id
            && self.session_id == other.session_id
            && self.teacher_id == other.teacher_id
            && self.event_type == other.event_type
            && self.doc_id == other.doc_id
            && self.kind == other.kind
            && self.start == other.start
            && self.end == other.end
            && self.role == other.role
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchEntry {
    pub timestamp: f64,
    pub query: PhraseQuery,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotationError {
    #[error("no event context: {kind} span is not inside an EVENT_PRESENT sentence")]
    NoEventContext { kind: RecordKind },
    #[error("no sentence context: span is not inside a classified sentence")]
    NoSentenceContext,
    #[error("{kind} on NEGATIVE sentence")]
    OnNegativeSentence { kind: RecordKind },
    #[error("span [{start}, {end}) out of bounds for document of length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("span [{start}, {end}) is empty")]
    EmptySpan { start: usize, end: usize },
    #[error("{kind} span [{start}, {end}) is not a sentence")]
    NotASentence {
        kind: RecordKind,
        start: usize,
        end: usize,
    },
    #[error("sentence already classified as {existing}")]
    ConflictingClassification { existing: RecordKind },
    #[error("ARGUMENT record requires a role")]
    MissingRole,
    #[error("only ARGUMENT records carry a role")]
    UnexpectedRole,
    #[error("timestamp {got} precedes previous action at {last}")]
    TimestampDecreased { last: f64, got: f64 },
    #[error("record id {0:?} already used for different content")]
    DuplicateRecordId(String),
    #[error("record belongs to session {got:?}, expected {expected:?}")]
    WrongSession { expected: String, got: String },
    #[error("record event type {got:?} does not match session event type {expected:?}")]
    WrongEventType { expected: String, got: String },
    #[error("record doc {got:?} does not match supplied document {expected:?}")]
    DocumentMismatch { expected: String, got: String },
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
}

/// Result of a successful append.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Appended {
    Inserted,
    /// Same record id and content already stored; nothing changed.
    Duplicate,
}

type SentenceKey = (String, usize);

/// Append-only store of one teacher's work on one event type.
#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub teacher_id: String,
    pub event_type: String,
    records: Vec<AnnotationRecord>,
    searches: Vec<SearchEntry>,
    indicators: Vec<Indicator>,
    retracted: BTreeSet<String>,
    last_timestamp: f64,
    record_index: BTreeMap<String, usize>,
    classified: BTreeMap<SentenceKey, (RecordKind, String)>,
    sentence_of: BTreeMap<String, usize>,
}

impl Session {
    pub fn new(
        session_id: impl Into<String>,
        teacher_id: impl Into<String>,
        event_type: impl Into<String>,
    ) -> Self {
        Session {
            session_id: session_id.into(),
            teacher_id: teacher_id.into(),
            event_type: event_type.into(),
            records: Vec::new(),
            searches: Vec::new(),
            indicators: Vec::new(),
            retracted: BTreeSet::new(),
            last_timestamp: 0.0,
            record_index: BTreeMap::new(),
            classified: BTreeMap::new(),
            sentence_of: BTreeMap::new(),
        }
    }

    /// Every record ever appended, in order, including retracted ones.
    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    /// Records that have not been retracted.
    pub fn live_records(&self) -> impl Iterator<Item = &AnnotationRecord> + '_ {
        self.records
            .iter()
            .filter(|r| !self.retracted.contains(&r.record_id))
    }

    pub fn is_retracted(&self, record_id: &str) -> bool {
        self.retracted.contains(record_id)
    }

    /// Sentence index of a sentence-level record.
    pub fn sentence_of(&self, record_id: &str) -> Option<usize> {
        self.sentence_of.get(record_id).copied()
    }

    pub fn record(&self, record_id: &str) -> Option<&AnnotationRecord> {
        self.record_index.get(record_id).map(|&i| &self.records[i])
    }

    pub fn searches(&self) -> &[SearchEntry] {
        &self.searches
    }

    pub fn indicators(&self) -> &[Indicator] {
        &self.indicators
    }

    pub fn indicators_mut(&mut self) -> &mut Vec<Indicator> {
        &mut self.indicators
    }

    pub fn last_timestamp(&self) -> f64 {
        self.last_timestamp
    }

    /// Classification of a sentence, ignoring retracted records.
    pub fn classification(&self, doc_id: &str, sentence: usize) -> Option<RecordKind> {
        self.classified
            .get(&(String::from(doc_id), sentence))
            .map(|(kind, _)| *kind)
    }

    /// Moves the session clock forward, rejecting time travel.
    pub fn advance_clock(&mut self, timestamp: f64) -> Result<(), AnnotationError> {
        if timestamp < self.last_timestamp || timestamp.is_nan() {
            return Err(AnnotationError::TimestampDecreased {
                last: self.last_timestamp,
                got: timestamp,
            });
        }
        self.last_timestamp = timestamp;
        Ok(())
    }

    pub fn log_search(&mut self, timestamp: f64, query: PhraseQuery) -> Result<(), AnnotationError> {
        self.advance_clock(timestamp)?;
        self.searches.push(SearchEntry { timestamp, query });
        Ok(())
    }

    /// Checks a record against the store without changing anything.
    ///
    /// Returns the sentence index the record falls in.
    pub fn validate(
        &self,
        record: &AnnotationRecord,
        doc: &Document,
    ) -> Result<(Appended, usize), AnnotationError> {
        if let Some(existing) = self.record(&record.record_id) {
            return if existing.same_content(record) {
                let sentence = doc
                    .sentence_containing(record.start, record.end)
                    .unwrap_or_default();
                Ok((Appended::Duplicate, sentence))
            } else {
                Err(AnnotationError::DuplicateRecordId(record.record_id.clone()))
            };
        }
        if record.session_id != self.session_id {
            return Err(AnnotationError::WrongSession {
                expected: self.session_id.clone(),
                got: record.session_id.clone(),
            });
        }
        if record.event_type != self.event_type {
            return Err(AnnotationError::WrongEventType {
                expected: self.event_type.clone(),
                got: record.event_type.clone(),
            });
        }
        if record.doc_id != doc.doc_id() {
            return Err(AnnotationError::DocumentMismatch {
                expected: String::from(doc.doc_id()),
                got: record.doc_id.clone(),
            });
        }
        if record.end > doc.char_len() || record.start > record.end {
            return Err(AnnotationError::OutOfBounds {
                start: record.start,
                end: record.end,
                len: doc.char_len(),
            });
        }
        if record.start == record.end {
            return Err(AnnotationError::EmptySpan {
                start: record.start,
                end: record.end,
            });
        }
        match (record.kind, &record.role) {
            (RecordKind::Argument, None) => return Err(AnnotationError::MissingRole),
            (RecordKind::Argument, Some(_)) | (_, None) => {}
            (_, Some(_)) => return Err(AnnotationError::UnexpectedRole),
        }
        if record.timestamp < self.last_timestamp || record.timestamp.is_nan() {
            return Err(AnnotationError::TimestampDecreased {
                last: self.last_timestamp,
                got: record.timestamp,
            });
        }

        if record.kind.is_sentence_level() {
            let sentence = doc.sentence_at(record.start, record.end).ok_or(
                AnnotationError::NotASentence {
                    kind: record.kind,
                    start: record.start,
                    end: record.end,
                },
            )?;
            if let Some(existing) = self.classification(&record.doc_id, sentence) {
                if existing != record.kind {
                    return Err(AnnotationError::ConflictingClassification { existing });
                }
            }
            return Ok((Appended::Inserted, sentence));
        }

        let sentence = doc.sentence_containing(record.start, record.end);
        let context = sentence.and_then(|s| self.classification(&record.doc_id, s));
        match (record.kind, context) {
            (RecordKind::Interesting, None) => Err(AnnotationError::NoSentenceContext),
            (_, None) => Err(AnnotationError::NoEventContext { kind: record.kind }),
            (RecordKind::Interesting, Some(_)) | (_, Some(RecordKind::EventPresent)) => {
                Ok((Appended::Inserted, sentence.unwrap_or_default()))
            }
            (kind, Some(_)) => Err(AnnotationError::OnNegativeSentence { kind }),
        }
    }

    /// Validates and appends a record. Violations are rejected, never repaired.
    pub fn append_record(
        &mut self,
        record: AnnotationRecord,
        doc: &Document,
    ) -> Result<Appended, AnnotationError> {
        let (outcome, sentence) = self.validate(&record, doc)?;
        if outcome == Appended::Duplicate {
            return Ok(outcome);
        }
        self.last_timestamp = record.timestamp;
        if record.kind.is_sentence_level() {
            self.sentence_of.insert(record.record_id.clone(), sentence);
            self.classified
                .entry((record.doc_id.clone(), sentence))
                .or_insert_with(|| (record.kind, record.record_id.clone()));
        }
        self.record_index
            .insert(record.record_id.clone(), self.records.len());
        self.records.push(record);
        Ok(Appended::Inserted)
    }

    /// Marks records as withdrawn. They stay in the log but no longer count
    /// as context or training data.
    pub fn retract(&mut self, record_ids: &[String]) {
        for id in record_ids {
            self.retracted.insert(id.clone());
        }
        // a sentence may have been classified on more than one visit, so
        // rebuild from the surviving records
        self.classified.clear();
        for record in &self.records {
            if self.retracted.contains(&record.record_id) {
                continue;
            }
            if let Some(&sentence) = self.sentence_of.get(&record.record_id) {
                self.classified
                    .entry((record.doc_id.clone(), sentence))
                    .or_insert_with(|| (record.kind, record.record_id.clone()));
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("timestamps decrease at position {index}")]
pub struct DecreasingTimestamps {
    pub index: usize,
}

/// Total time over consecutive gaps, each clipped to `break_threshold`.
pub fn effective_duration(timestamps: &[f64], break_threshold: f64) -> Result<f64, DecreasingTimestamps> {
    let mut total = 0.0;
    for (i, pair) in timestamps.windows(2).enumerate() {
        let gap = pair[1] - pair[0];
        if gap < 0.0 || gap.is_nan() {
            return Err(DecreasingTimestamps { index: i + 1 });
        }
        total += if gap > break_threshold { break_threshold } else { gap };
    }
    Ok(total)
}

/// Reading effort of a session, in the units of the session statistics table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionStats {
    pub words_read: usize,
    pub docs_opened: usize,
    pub searches: usize,
}

pub fn session_stats(session: &Session, docs: &DocumentSet) -> Result<SessionStats, AnnotationError> {
    let opened: BTreeSet<&str> = session.records().iter().map(|r| r.doc_id.as_str()).collect();
    let mut words_read = 0;
    for id in &opened {
        let doc = docs
            .get(id)
            .ok_or_else(|| AnnotationError::UnknownDocument(String::from(*id)))?;
        words_read += doc.word_count();
    }
    Ok(SessionStats {
        words_read,
        docs_opened: opened.len(),
        searches: session.searches().len(),
    })
}

/// Number of live records per kind.
pub fn kind_counts(session: &Session) -> BTreeMap<RecordKind, usize> {
    let mut counts = BTreeMap::new();
    for record in session.live_records() {
        *counts.entry(record.kind).or_default() += 1;
    }
    counts
}
