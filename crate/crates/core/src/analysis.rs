//! Learning curves over annotation time, the words-per-hour cost model and
//! per-event summary rows.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::annotation::{effective_duration, AnnotationRecord};
use crate::corpus::DocumentSet;
use crate::learning::{build_training_sets, train_all, EntitySpans, SkippedModel, TrainConfig};
use crate::pipeline::{extract, ConfigError, ExtractConfig, Ontology, ResponseTuple, TupleSet};
use crate::projection::{project_records, ProjectionReport, UnknownDocument};
use crate::scoring::{score, Prf, ScoreOptions, ScoreReport};
use crate::workflow::{LogEvent, ReplayError, WorkflowConfig, WorkflowState};

pub const DEFAULT_WORDS_PER_HOUR: f64 = 1500.0;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CostModel {
    pub words_per_hour: f64,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("words per hour must be positive, got {0}")]
pub struct InvalidRate(pub f64);

impl CostModel {
    pub fn new(words_per_hour: f64) -> Result<Self, InvalidRate> {
        if words_per_hour > 0.0 && words_per_hour.is_finite() {
            Ok(CostModel { words_per_hour })
        } else {
            Err(InvalidRate(words_per_hour))
        }
    }
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            words_per_hour: DEFAULT_WORDS_PER_HOUR,
        }
    }
}

/// Hours a full-document annotator would need for `word_count` words.
pub fn ace_time_estimate(word_count: usize, cost: &CostModel) -> f64 {
    word_count as f64 / cost.words_per_hour
}

/// The first `⌈fraction · N⌉` items. Fractions outside [0, 1] are clamped.
pub fn ace_prefix<T>(documents: &[T], fraction: f64) -> &[T] {
    let f = fraction.clamp(0.0, 1.0);
    // absorb representation error such as 0.3 * 10 = 3.0000000000000004
    let n = libm::ceil(f * documents.len() as f64 - 1e-9).max(0.0) as usize;
    &documents[..n.min(documents.len())]
}

/// Records available at one point of a session.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Effective minutes; for merged checkpoints the mean over sessions.
    pub minutes: f64,
    pub per_type_minutes: BTreeMap<String, f64>,
    pub records: Vec<AnnotationRecord>,
}

/// Record sets after every `interval_minutes` of effective time, plus the
/// full session.
///
/// Checkpoint `k` replays the events whose effective time is at most
/// `k · interval` and keeps the committed records, so a sentence whose
/// visit is still open at the boundary only shows up once it is closed.
pub fn ct_checkpoints(
    log: &[LogEvent],
    docs: &DocumentSet,
    config: WorkflowConfig,
    interval_minutes: f64,
) -> Result<Vec<Checkpoint>, ReplayError> {
    let mut events = log.iter().cloned();
    let Some(first) = events.next() else {
        return Ok(Vec::new());
    };
    let mut state = WorkflowState::replay([first], docs, config)?;
    let event_type = state.session().event_type.clone();
    let timestamps: Vec<f64> = log.iter().map(LogEvent::timestamp).collect();
    let mut effective = Vec::with_capacity(log.len());
    let mut total = 0.0;
    for (i, w) in timestamps.windows(2).enumerate() {
        let gap = w[1] - w[0];
        if gap < 0.0 {
            return Err(ReplayError {
                index: i + 1,
                source: crate::annotation::AnnotationError::TimestampDecreased { last: w[0], got: w[1] }.into(),
            });
        }
        total += gap.min(config.break_threshold);
        effective.push(total);
    }
    debug_assert_eq!(
        effective_duration(&timestamps, config.break_threshold).ok(),
        Some(*effective.last().unwrap_or(&0.0))
    );

    let snapshot = |state: &WorkflowState, minutes: f64| Checkpoint {
        minutes,
        per_type_minutes: [(event_type.clone(), minutes)].into_iter().collect(),
        records: state.committed_records().into_iter().cloned().collect(),
    };

    let interval = interval_minutes * 60.0;
    let mut out = Vec::new();
    let mut pending = events.zip(effective.iter().copied()).enumerate().peekable();
    if interval > 0.0 {
        let mut k = 1usize;
        while k as f64 * interval <= total {
            let bound = k as f64 * interval;
            while let Some((_, (_, t))) = pending.peek() {
                if *t > bound {
                    break;
                }
                let (i, (event, _)) = pending.next().expect("peeked");
                state.apply(event, docs).map_err(|source| ReplayError { index: i + 1, source })?;
            }
            out.push(snapshot(&state, bound / 60.0));
            k += 1;
        }
    }
    for (i, (event, _)) in pending {
        state.apply(event, docs).map_err(|source| ReplayError { index: i + 1, source })?;
    }
    out.push(snapshot(&state, total / 60.0));
    Ok(out)
}

/// Aligns checkpoint lists of several sessions by index. A session with
/// fewer checkpoints contributes its last one. Minutes are the arithmetic
/// mean over sessions.
pub fn merge_checkpoints(sessions: &[Vec<Checkpoint>]) -> Vec<Checkpoint> {
    let n = sessions.iter().map(Vec::len).max().unwrap_or(0);
    (0..n)
        .map(|k| {
            let parts: Vec<&Checkpoint> = sessions
                .iter()
                .filter_map(|s| s.get(k).or_else(|| s.last()))
                .collect();
            let minutes = parts.iter().map(|c| c.minutes).sum::<f64>() / parts.len() as f64;
            let mut per_type_minutes = BTreeMap::new();
            let mut records = Vec::new();
            for c in parts {
                per_type_minutes.extend(c.per_type_minutes.iter().map(|(k, v)| (k.clone(), *v)));
                records.extend(c.records.iter().cloned());
            }
            Checkpoint {
                minutes,
                per_type_minutes,
                records,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub minutes: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl CurvePoint {
    pub fn from_prf(minutes: f64, prf: &Prf) -> Self {
        CurvePoint {
            minutes,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
        }
    }
}

/// One evaluated checkpoint: the aggregate point, one point per event type
/// and the models that could not be trained yet.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub point: CurvePoint,
    pub per_type: BTreeMap<String, CurvePoint>,
    pub skipped: Vec<SkippedModel>,
}

/// Evaluates every checkpoint with `evaluate` (which returns the score and
/// the models it had to skip).
pub fn learning_curve<E, F>(checkpoints: &[Checkpoint], mut evaluate: F) -> Result<Vec<CurveRow>, E>
where
    F: FnMut(&[AnnotationRecord]) -> Result<(ScoreReport, Vec<SkippedModel>), E>,
{
    let mut rows = Vec::with_capacity(checkpoints.len());
    for c in checkpoints {
        let (report, skipped) = evaluate(&c.records)?;
        let per_type = report
            .per_type
            .iter()
            .map(|(t, prf)| {
                let minutes = c.per_type_minutes.get(t).copied().unwrap_or(c.minutes);
                (t.clone(), CurvePoint::from_prf(minutes, prf))
            })
            .collect();
        rows.push(CurveRow {
            point: CurvePoint::from_prf(c.minutes, &report.overall),
            per_type,
            skipped,
        });
    }
    Ok(rows)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExperimentError {
    #[error(transparent)]
    UnknownDocument(#[from] UnknownDocument),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Everything fixed across the checkpoints of one curve.
#[derive(Clone, Debug)]
pub struct Experiment<'a> {
    pub ontology: &'a Ontology,
    pub train_docs: &'a DocumentSet,
    pub train_entities: &'a EntitySpans,
    pub eval_docs: &'a DocumentSet,
    pub eval_entities: &'a EntitySpans,
    pub key: &'a [ResponseTuple],
    pub train_config: TrainConfig,
    pub extract_config: ExtractConfig,
    pub score_options: ScoreOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub projection: ProjectionReport,
    pub skipped: Vec<SkippedModel>,
    pub system: TupleSet,
    pub report: ScoreReport,
}

impl Experiment<'_> {
    /// project → train → extract over the evaluation corpus → score.
    pub fn evaluate(&self, records: &[AnnotationRecord]) -> Result<Evaluation, ExperimentError> {
        let refs: Vec<&AnnotationRecord> = records.iter().collect();
        let projection = project_records(self.train_docs, &refs)?;
        let sets = build_training_sets(&projection, self.train_docs, self.ontology, self.train_entities);
        let (models, skipped) = train_all(&sets, &self.train_config);
        let mut system = TupleSet::new();
        for doc in self.eval_docs {
            system.extend(extract(doc, &models, self.ontology, self.eval_entities, &self.extract_config)?);
        }
        let report = score(system.keys(), self.key, &self.score_options);
        Ok(Evaluation {
            projection: projection.report,
            skipped,
            system,
            report,
        })
    }

    pub fn curve(&self, checkpoints: &[Checkpoint]) -> Result<Vec<CurveRow>, ExperimentError> {
        learning_curve(checkpoints, |records| {
            let e = self.evaluate(records)?;
            Ok((e.report, e.skipped))
        })
    }
}

/// One line of the per-event summary: `x → y` where x is the number of
/// training mentions and y the number of evaluation tuples.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EventRow {
    pub event_type: String,
    pub training_mentions: usize,
    pub eval_tuples: usize,
    /// F1 at the last curve point, when the type has a curve.
    pub final_f1: Option<f64>,
}

impl EventRow {
    pub fn label(&self) -> String {
        format!("{} → {}", self.training_mentions, self.eval_tuples)
    }
}

/// One row per event type seen in any of the inputs; absent counts are 0.
pub fn per_event_table(
    curves: &[CurveRow],
    training_counts: &BTreeMap<String, usize>,
    eval_counts: &BTreeMap<String, usize>,
) -> Vec<EventRow> {
    let mut types: Vec<&String> = training_counts.keys().chain(eval_counts.keys()).collect();
    if let Some(last) = curves.last() {
        types.extend(last.per_type.keys());
    }
    types.sort();
    types.dedup();
    types
        .into_iter()
        .map(|t| EventRow {
            event_type: t.clone(),
            training_mentions: training_counts.get(t).copied().unwrap_or(0),
            eval_tuples: eval_counts.get(t).copied().unwrap_or(0),
            final_f1: curves.last().and_then(|r| r.per_type.get(t)).map(|p| p.f1),
        })
        .collect()
}
