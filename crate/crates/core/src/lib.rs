//! Core of a curated-training workbench for event extraction.
//!
//! Everything in this crate is pure computation over in-memory data: the
//! tokenizer and sentence splitter, the phrase index teachers search with,
//! the append-only annotation store and the protocol state machine that
//! drives it, offset-to-token projection, sparse log-linear models, the
//! extraction pipeline, tuple scoring and learning-curve analytics.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the HTTP
//! service and the command line live in the `curated` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod annotation;
pub mod corpus;
pub mod learning;
pub mod pipeline;
pub mod projection;
pub mod scoring;
pub mod search;
pub mod workflow;

mod fold;

pub use analysis::{CostModel, CurvePoint};
pub use annotation::{AnnotationRecord, Indicator, RecordKind, Session};
pub use corpus::{Document, DocumentSet, SentenceSpan, TokenSpan};
pub use learning::{FeatureVector, LinearModel, ModelKind, TrainConfig};
pub use pipeline::{Ontology, Realis, ResponseTuple};
pub use projection::{EventMention, ProjectionReport};
pub use scoring::{ScoreOptions, ScoreReport};
pub use search::{InvertedIndex, PhraseQuery};
pub use workflow::{LogEvent, WorkflowState};
