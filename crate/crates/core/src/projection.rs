//! Projection of character-offset annotations onto tokens.
//!
//! Teachers mark spans in raw text; models consume token ranges. A span
//! projects when, after trimming surrounding whitespace, it starts on a
//! token start and ends on a token end. Each EVENT_PRESENT sentence yields
//! one mention per run of consecutive anchor tokens. A mention whose anchor
//! fails is dropped. A mention whose anchor projects but one of whose
//! arguments fails is kept for trigger training only.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::annotation::{AnnotationRecord, RecordKind};
use crate::corpus::{Document, DocumentSet};

/// Token index range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TokenRange {
    pub start: usize,
    pub end: usize,
}

impl TokenRange {
    pub fn new(start: usize, end: usize) -> Self {
        TokenRange { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn overlaps(&self, other: &TokenRange) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Char span of the range in `doc`.
    pub fn char_span(&self, doc: &Document) -> (usize, usize) {
        let toks = doc.tokens();
        (toks[self.start].start, toks[self.end - 1].end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum Realis {
    Actual,
    Generic,
    Other,
    /// Sentinel written by realis neutralization.
    Neutralized,
}

impl Realis {
    pub fn as_str(self) -> &'static str {
        match self {
            Realis::Actual => "ACTUAL",
            Realis::Generic => "GENERIC",
            Realis::Other => "OTHER",
            Realis::Neutralized => "NEUTRALIZED",
        }
    }

    pub fn parse(text: &str) -> Option<Realis> {
        match text {
            "ACTUAL" => Some(Realis::Actual),
            "GENERIC" => Some(Realis::Generic),
            "OTHER" => Some(Realis::Other),
            "NEUTRALIZED" => Some(Realis::Neutralized),
            _ => None,
        }
    }
}

impl core::fmt::Display for Realis {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MentionArgument {
    pub role: String,
    pub range: TokenRange,
}

/// A token-aligned event mention.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EventMention {
    pub event_type: String,
    pub doc_id: String,
    pub sentence: usize,
    pub anchor: TokenRange,
    pub arguments: Vec<MentionArgument>,
    pub realis: Realis,
    /// Record ids this mention was built from.
    pub provenance: Vec<String>,
    /// False when some argument failed to project; such mentions only feed
    /// trigger training.
    pub argument_ready: bool,
}

/// A sentence a teacher marked as not mentioning the event.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NegativeSentence {
    pub event_type: String,
    pub doc_id: String,
    pub sentence: usize,
    pub record_id: String,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum ProjectionFailure {
    #[error("span boundary falls inside a token")]
    Misaligned,
    #[error("span contains only whitespace")]
    Empty,
    #[error("span lies outside the document")]
    OutOfBounds,
    #[error("event-present sentence has no anchor")]
    NoAnchor,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProjectionReport {
    /// EVENT_PRESENT sentences seen.
    pub sentences: usize,
    /// Candidate mentions: one per anchor run, plus one per anchor record that
    /// failed to project.
    pub candidates: usize,
    /// Mentions with anchor and every argument projected.
    pub mentions_built: usize,
    /// Mentions lost to argument training because some span failed.
    pub mentions_dropped: usize,
    /// Dropped mentions whose anchor still projected; kept for trigger training.
    pub trigger_only: usize,
    pub spans_failed: Vec<(String, ProjectionFailure)>,
}

impl ProjectionReport {
    /// Bookkeeping identity: every candidate is either built or dropped.
    pub fn is_consistent(&self) -> bool {
        self.mentions_built + self.mentions_dropped == self.candidates
            && self.trigger_only <= self.mentions_dropped
    }

    fn merge(&mut self, other: ProjectionReport) {
        self.sentences += other.sentences;
        self.candidates += other.candidates;
        self.mentions_built += other.mentions_built;
        self.mentions_dropped += other.mentions_dropped;
        self.trigger_only += other.trigger_only;
        self.spans_failed.extend(other.spans_failed);
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Projection {
    /// Trigger-training mentions; the `argument_ready` subset feeds argument training.
    pub mentions: Vec<EventMention>,
    pub negatives: Vec<NegativeSentence>,
    pub report: ProjectionReport,
}

impl Projection {
    pub fn argument_mentions(&self) -> impl Iterator<Item = &EventMention> + '_ {
        self.mentions.iter().filter(|m| m.argument_ready)
    }
}

/// Aligns a char span to the tokens it covers.
pub fn project_span(start: usize, end: usize, doc: &Document) -> Result<TokenRange, ProjectionFailure> {
    if start > end || end > doc.char_len() {
        return Err(ProjectionFailure::OutOfBounds);
    }
    let chars: Vec<char> = doc.slice(start, end).chars().collect();
    let lead = chars.iter().take_while(|c| c.is_whitespace()).count();
    if lead == chars.len() {
        return Err(ProjectionFailure::Empty);
    }
    let trail = chars.iter().rev().take_while(|c| c.is_whitespace()).count();
    let (start, end) = (start + lead, end - trail);
    let tokens = doc.tokens();
    let first = tokens
        .binary_search_by_key(&start, |t| t.start)
        .map_err(|_| ProjectionFailure::Misaligned)?;
    let last = tokens
        .binary_search_by_key(&end, |t| t.end)
        .map_err(|_| ProjectionFailure::Misaligned)?;
    if last < first {
        return Err(ProjectionFailure::Misaligned);
    }
    Ok(TokenRange::new(first, last + 1))
}

/// Builds mentions and negatives for one document from validated records.
pub fn build_event_mentions(doc: &Document, records: &[&AnnotationRecord]) -> Projection {
    let mine: Vec<&AnnotationRecord> = records
        .iter()
        .copied()
        .filter(|r| r.doc_id == doc.doc_id())
        .collect();

    // (event_type, sentence) -> classification record
    let mut present: BTreeMap<(&str, usize), &AnnotationRecord> = BTreeMap::new();
    let mut negatives: BTreeMap<(&str, usize), &AnnotationRecord> = BTreeMap::new();
    for r in &mine {
        let Some(sentence) = doc.sentence_at(r.start, r.end) else {
            continue;
        };
        let key = (r.event_type.as_str(), sentence);
        match r.kind {
            RecordKind::EventPresent => {
                present.entry(key).or_insert(r);
            }
            RecordKind::Negative => {
                negatives.entry(key).or_insert(r);
            }
            _ => {}
        }
    }

    let mut out = Projection::default();
    for ((event_type, sentence), record) in &negatives {
        out.negatives.push(NegativeSentence {
            event_type: event_type.to_string(),
            doc_id: doc.doc_id().to_string(),
            sentence: *sentence,
            record_id: record.record_id.clone(),
        });
    }

    for ((event_type, sentence), sentence_record) in &present {
        let (ss, se) = doc.sentence_char_span(*sentence);
        let inside = |r: &&&AnnotationRecord| {
            r.event_type == *event_type && ss <= r.start && r.end <= se
        };
        let report = &mut out.report;
        report.sentences += 1;

        let mut anchor_tokens: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        let mut anchor_count = 0;
        for r in mine.iter().filter(inside).filter(|r| r.kind == RecordKind::Anchor) {
            anchor_count += 1;
            match project_span(r.start, r.end, doc) {
                Ok(range) => {
                    for t in range.start..range.end {
                        anchor_tokens.entry(t).or_default().push(&r.record_id);
                    }
                }
                Err(why) => {
                    report.spans_failed.push((r.record_id.clone(), why));
                    report.candidates += 1;
                    report.mentions_dropped += 1;
                }
            }
        }
        if anchor_count == 0 {
            report
                .spans_failed
                .push((sentence_record.record_id.clone(), ProjectionFailure::NoAnchor));
            report.candidates += 1;
            report.mentions_dropped += 1;
            continue;
        }

        let mut arguments: Vec<MentionArgument> = Vec::new();
        let mut argument_ids: Vec<String> = Vec::new();
        let mut argument_failed = false;
        for r in mine.iter().filter(inside).filter(|r| r.kind == RecordKind::Argument) {
            match project_span(r.start, r.end, doc) {
                Ok(range) => {
                    let arg = MentionArgument {
                        role: r.role.clone().unwrap_or_default(),
                        range,
                    };
                    if !arguments.contains(&arg) {
                        arguments.push(arg);
                    }
                    argument_ids.push(r.record_id.clone());
                }
                Err(why) => {
                    report.spans_failed.push((r.record_id.clone(), why));
                    argument_failed = true;
                }
            }
        }

        // consecutive anchor tokens form one anchor
        let mut runs: Vec<(TokenRange, BTreeSet<&str>)> = Vec::new();
        for (&t, ids) in &anchor_tokens {
            match runs.last_mut() {
                Some((range, set)) if range.end == t => {
                    range.end = t + 1;
                    set.extend(ids.iter().copied());
                }
                _ => runs.push((TokenRange::new(t, t + 1), ids.iter().copied().collect())),
            }
        }
        for (anchor, ids) in runs {
            report.candidates += 1;
            if argument_failed {
                report.mentions_dropped += 1;
                report.trigger_only += 1;
            } else {
                report.mentions_built += 1;
            }
            let mut provenance = alloc::vec![sentence_record.record_id.clone()];
            provenance.extend(ids.into_iter().map(String::from));
            provenance.extend(argument_ids.iter().cloned());
            out.mentions.push(EventMention {
                event_type: event_type.to_string(),
                doc_id: doc.doc_id().to_string(),
                sentence: *sentence,
                anchor,
                arguments: arguments.clone(),
                realis: Realis::Actual,
                provenance,
                argument_ready: !argument_failed,
            });
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("record refers to unknown document {0:?}")]
pub struct UnknownDocument(pub String);

/// Projects every document touched by `records`, in doc id order.
pub fn project_records(docs: &DocumentSet, records: &[&AnnotationRecord]) -> Result<Projection, UnknownDocument> {
    let mut by_doc: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_doc.entry(r.doc_id.as_str()).or_default().push(r);
    }
    let mut out = Projection::default();
    for (doc_id, recs) in by_doc {
        let doc = docs
            .get(doc_id)
            .ok_or_else(|| UnknownDocument(doc_id.to_string()))?;
        let part = build_event_mentions(doc, &recs);
        out.mentions.extend(part.mentions);
        out.negatives.extend(part.negatives);
        out.report.merge(part.report);
    }
    Ok(out)
}
