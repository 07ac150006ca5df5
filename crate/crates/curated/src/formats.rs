//! On-disk formats. Every writer produces output its reader accepts
//! unchanged, and numbers are written in Rust's shortest round-trip form so
//! files survive a read/write cycle bit for bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use curated_core::analysis::CurveRow;
use curated_core::corpus::{CorpusError, DocumentRecord};
use curated_core::learning::{EntitySpans, LinearModel, ModelKind, ModelSet};
use curated_core::pipeline::{Justification, TupleSet};
use curated_core::projection::{project_span, EventMention, NegativeSentence, Projection, TokenRange};
use curated_core::scoring::{Prf, ScoreReport};
use curated_core::{Document, DocumentSet, LogEvent, Realis, ResponseTuple};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },
}

impl FormatError {
    fn parse(origin: &str, line: usize, message: impl ToString) -> Self {
        FormatError::Parse {
            origin: origin.to_string(),
            line,
            message: message.to_string(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    std::fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn origin(path: &Path) -> String {
    path.display().to_string()
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<Vec<T>, FormatError> {
    content_lines(text)
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| FormatError::parse(origin, n, e)))
        .collect()
}

fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("serializable"));
        out.push('\n');
    }
    out
}

// ---- corpus ----

pub fn parse_corpus(text: &str, origin: &str) -> Result<DocumentSet, FormatError> {
    let mut set = DocumentSet::new();
    for (n, line) in content_lines(text) {
        let record: DocumentRecord = serde_json::from_str(line).map_err(|e| FormatError::parse(origin, n, e))?;
        set.push(Document::with_source(record.doc_id, record.text, record.source))
            .map_err(|CorpusError::DuplicateId(id)| FormatError::parse(origin, n, format!("duplicate doc_id {id:?}")))?;
    }
    Ok(set)
}

pub fn read_corpus(path: &Path) -> Result<DocumentSet, FormatError> {
    parse_corpus(&read_text(path)?, &origin(path))
}

pub fn corpus_jsonl(docs: &DocumentSet) -> String {
    to_jsonl(docs.iter().map(|d| DocumentRecord {
        doc_id: d.doc_id().to_string(),
        text: d.text().to_string(),
        source: d.source().map(str::to_string),
    }))
}

// ---- annotation log ----

pub fn parse_log(text: &str, origin: &str) -> Result<Vec<LogEvent>, FormatError> {
    parse_jsonl(text, origin)
}

pub fn read_log(path: &Path) -> Result<Vec<LogEvent>, FormatError> {
    parse_log(&read_text(path)?, &origin(path))
}

/// One log line, newline included.
pub fn log_line(event: &LogEvent) -> String {
    let mut line = serde_json::to_string(event).expect("serializable");
    line.push('\n');
    line
}

/// Append-only log file. Every append is flushed to stable storage before
/// it returns.
#[derive(Debug)]
pub struct LogWriter {
    path: PathBuf,
    file: File,
}

impl LogWriter {
    /// Creates the file, failing if it already exists.
    pub fn create(path: &Path) -> Result<Self, FormatError> {
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(path)
            .map_err(|source| FormatError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(LogWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn open_append(path: &Path) -> Result<Self, FormatError> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|source| FormatError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(LogWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, events: &[LogEvent]) -> Result<(), FormatError> {
        if events.is_empty() {
            return Ok(());
        }
        let text: String = events.iter().map(log_line).collect();
        let io = |source| FormatError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(text.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}

// ---- mentions ----

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum MentionLine {
    Mention(EventMention),
    Negative(NegativeSentence),
}

pub fn mentions_jsonl(projection: &Projection) -> String {
    let mentions = projection.mentions.iter().cloned().map(MentionLine::Mention);
    let negatives = projection.negatives.iter().cloned().map(MentionLine::Negative);
    to_jsonl(mentions.chain(negatives))
}

/// Reads a mention file. The projection report is not stored and comes back
/// empty.
pub fn parse_mentions(text: &str, origin: &str) -> Result<Projection, FormatError> {
    let mut projection = Projection::default();
    for line in parse_jsonl::<MentionLine>(text, origin)? {
        match line {
            MentionLine::Mention(m) => projection.mentions.push(m),
            MentionLine::Negative(n) => projection.negatives.push(n),
        }
    }
    Ok(projection)
}

// ---- models ----

fn kind_header(kind: &ModelKind) -> String {
    match kind {
        ModelKind::Trigger(t) => format!("kind\ttrigger\t{t}"),
        ModelKind::Argument => "kind\targument".to_string(),
        ModelKind::Genericity => "kind\tgenericity".to_string(),
    }
}

pub fn model_text(model: &LinearModel) -> String {
    let mut out = kind_header(&model.kind);
    let _ = write!(out, "\nbias\t{}\n", model.bias);
    for (feature, weight) in &model.weights {
        let _ = writeln!(out, "{feature}\t{weight}");
    }
    out
}

/// Concatenated model blocks: triggers by type, then argument, then genericity.
pub fn model_set_text(models: &ModelSet) -> String {
    let mut out = String::new();
    for m in models.triggers.values().chain(models.argument.iter()).chain(models.genericity.iter()) {
        out.push_str(&model_text(m));
    }
    out
}

pub fn parse_models(text: &str, origin: &str) -> Result<Vec<LinearModel>, FormatError> {
    let mut models: Vec<LinearModel> = Vec::new();
    let mut bias_seen = true;
    for (n, line) in content_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |m: &str| FormatError::parse(origin, n, m);
        match fields.as_slice() {
            ["kind", rest @ ..] => {
                if !bias_seen {
                    return Err(err("model without a bias line"));
                }
                let kind = match rest {
                    ["trigger", t] if !t.is_empty() => ModelKind::Trigger(t.to_string()),
                    ["argument"] => ModelKind::Argument,
                    ["genericity"] => ModelKind::Genericity,
                    _ => return Err(err("unknown model kind")),
                };
                models.push(LinearModel::zero(kind));
                bias_seen = false;
            }
            ["bias", value] => {
                let model = models.last_mut().ok_or_else(|| err("bias before kind header"))?;
                if bias_seen {
                    return Err(err("second bias line"));
                }
                model.bias = parse_weight(value).ok_or_else(|| err("bad bias"))?;
                bias_seen = true;
            }
            [feature, value] => {
                if !bias_seen {
                    return Err(err("feature before bias line"));
                }
                let model = models.last_mut().ok_or_else(|| err("feature before kind header"))?;
                let w = parse_weight(value).ok_or_else(|| err("bad weight"))?;
                if model.weights.insert(feature.to_string(), w).is_some() {
                    return Err(err("duplicate feature"));
                }
            }
            _ => return Err(err("expected two tab-separated fields")),
        }
    }
    if !bias_seen {
        return Err(FormatError::parse(origin, text.lines().count(), "model without a bias line"));
    }
    Ok(models)
}

fn parse_weight(text: &str) -> Option<f64> {
    text.parse::<f64>().ok().filter(|w| w.is_finite())
}

pub fn parse_model_set(text: &str, origin: &str) -> Result<ModelSet, FormatError> {
    let mut set = ModelSet::default();
    for m in parse_models(text, origin)? {
        match &m.kind {
            ModelKind::Trigger(t) => {
                set.triggers.insert(t.clone(), m);
            }
            ModelKind::Argument => set.argument = Some(m),
            ModelKind::Genericity => set.genericity = Some(m),
        }
    }
    Ok(set)
}

// ---- tuples ----

fn tuple_line(t: &ResponseTuple, just: Option<&(usize, usize, usize, usize)>) -> String {
    let offsets = match just {
        Some((a, b, c, d)) => format!("{a}\t{b}\t{c}\t{d}"),
        None => "-\t-\t-\t-".to_string(),
    };
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        t.doc_id, t.event_type, t.role, t.entity, t.realis, offsets
    )
}

fn sorted_lines(mut lines: Vec<String>) -> String {
    lines.sort();
    lines.dedup();
    let mut out = lines.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

/// Char offsets of anchor and argument for each tuple.
pub fn justification_offsets(docs: &DocumentSet, doc_id: &str, j: &Justification) -> Option<(usize, usize, usize, usize)> {
    let doc = docs.get(doc_id)?;
    let (a, b) = j.anchor.char_span(doc);
    let (c, d) = j.argument.char_span(doc);
    Some((a, b, c, d))
}

/// Extraction output, one sorted line per tuple with char offsets.
pub fn tuples_tsv(tuples: &TupleSet, docs: &DocumentSet) -> String {
    sorted_lines(
        tuples
            .iter()
            .map(|(t, j)| tuple_line(t, justification_offsets(docs, &t.doc_id, j).as_ref()))
            .collect(),
    )
}

/// Tuples with known char offsets (`None` writes `-`).
pub fn tuples_tsv_with_offsets<'a>(
    tuples: impl IntoIterator<Item = (&'a ResponseTuple, Option<(usize, usize, usize, usize)>)>,
) -> String {
    sorted_lines(tuples.into_iter().map(|(t, o)| tuple_line(t, o.as_ref())).collect())
}

pub fn parse_tuples(text: &str, origin: &str) -> Result<Vec<ResponseTuple>, FormatError> {
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 && f.len() != 9 {
            return Err(FormatError::parse(origin, n, format!("expected 5 or 9 columns, got {}", f.len())));
        }
        let realis = Realis::parse(f[4]).ok_or_else(|| FormatError::parse(origin, n, format!("unknown realis {:?}", f[4])))?;
        if f[..4].iter().any(|c| c.is_empty()) {
            return Err(FormatError::parse(origin, n, "empty column"));
        }
        out.push(ResponseTuple {
            doc_id: f[0].to_string(),
            event_type: f[1].to_string(),
            role: f[2].to_string(),
            entity: f[3].to_string(),
            realis,
        });
    }
    Ok(out)
}

pub fn read_tuples(path: &Path) -> Result<Vec<ResponseTuple>, FormatError> {
    parse_tuples(&read_text(path)?, &origin(path))
}

// ---- coref map ----

pub fn parse_coref_map(text: &str, origin: &str) -> Result<BTreeMap<String, String>, FormatError> {
    let mut map = BTreeMap::new();
    for (n, line) in content_lines(text) {
        let Some((entity, cluster)) = line.split_once('\t') else {
            return Err(FormatError::parse(origin, n, "expected entity<TAB>cluster"));
        };
        if map.insert(entity.to_string(), cluster.to_string()).is_some() {
            return Err(FormatError::parse(origin, n, format!("entity {entity:?} listed twice")));
        }
    }
    Ok(map)
}

// ---- entity sidecar ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityLine {
    pub doc_id: String,
    /// Char spans `[start, end)`.
    pub spans: Vec<(usize, usize)>,
}

/// Projects sidecar spans onto tokens. Spans that do not align are dropped
/// and counted.
pub fn parse_entities(text: &str, origin: &str, docs: &DocumentSet) -> Result<(EntitySpans, usize), FormatError> {
    let mut out = EntitySpans::new();
    let mut unaligned = 0;
    for (n, line) in content_lines(text) {
        let e: EntityLine = serde_json::from_str(line).map_err(|err| FormatError::parse(origin, n, err))?;
        let doc = docs
            .get(&e.doc_id)
            .ok_or_else(|| FormatError::parse(origin, n, format!("unknown doc_id {:?}", e.doc_id)))?;
        let ranges: &mut Vec<TokenRange> = out.entry(e.doc_id.clone()).or_default();
        for (s, t) in e.spans {
            if t > doc.char_len() || s > t {
                return Err(FormatError::parse(origin, n, format!("span [{s}, {t}) out of bounds")));
            }
            match project_span(s, t, doc) {
                Ok(r) => ranges.push(r),
                Err(_) => unaligned += 1,
            }
        }
    }
    Ok((out, unaligned))
}

// ---- curves ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveLine {
    /// `overall` or an event type.
    pub series: String,
    pub checkpoint: usize,
    pub minutes: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

pub const OVERALL: &str = "overall";

pub fn curve_lines(rows: &[CurveRow]) -> Vec<CurveLine> {
    let mut out = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        out.push(CurveLine {
            series: OVERALL.to_string(),
            checkpoint: k,
            minutes: row.point.minutes,
            precision: row.point.precision,
            recall: row.point.recall,
            f1: row.point.f1,
            skipped: row.skipped.iter().map(|s| format!("{}: {}", kind_name(&s.kind), s.reason)).collect(),
        });
        for (t, p) in &row.per_type {
            out.push(CurveLine {
                series: t.clone(),
                checkpoint: k,
                minutes: p.minutes,
                precision: p.precision,
                recall: p.recall,
                f1: p.f1,
                skipped: Vec::new(),
            });
        }
    }
    out
}

pub fn kind_name(kind: &ModelKind) -> String {
    match kind {
        ModelKind::Trigger(t) => format!("trigger {t}"),
        ModelKind::Argument => "argument".to_string(),
        ModelKind::Genericity => "genericity".to_string(),
    }
}

pub fn curve_jsonl(rows: &[CurveRow]) -> String {
    to_jsonl(curve_lines(rows))
}

pub fn parse_curve(text: &str, origin: &str) -> Result<Vec<CurveLine>, FormatError> {
    parse_jsonl(text, origin)
}

// ---- score reports ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    /// An event type, `ALL` for pooled counts or `MACRO` for the mean of rates.
    pub event_type: String,
    pub tp: Option<usize>,
    pub fp: Option<usize>,
    #[serde(rename = "fn")]
    pub fn_: Option<usize>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn score_line(name: &str, p: &Prf) -> ScoreLine {
    ScoreLine {
        event_type: name.to_string(),
        tp: Some(p.tp),
        fp: Some(p.fp),
        fn_: Some(p.fn_),
        precision: p.precision,
        recall: p.recall,
        f1: p.f1,
    }
}

pub fn score_lines(report: &ScoreReport) -> Vec<ScoreLine> {
    let mut out: Vec<ScoreLine> = report.per_type.iter().map(|(t, p)| score_line(t, p)).collect();
    out.push(score_line("ALL", &report.overall));
    out.push(ScoreLine {
        event_type: "MACRO".to_string(),
        tp: None,
        fp: None,
        fn_: None,
        precision: report.macro_avg.precision,
        recall: report.macro_avg.recall,
        f1: report.macro_avg.f1,
    });
    out
}

pub fn score_jsonl(report: &ScoreReport) -> String {
    to_jsonl(score_lines(report))
}

pub fn score_table(report: &ScoreReport) -> String {
    let lines = score_lines(report);
    let width = lines.iter().map(|l| l.event_type.len()).max().unwrap_or(0).max(10);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>7}  {:>7}  {:>7}\n",
        "event_type", "tp", "fp", "fn", "P", "R", "F1"
    );
    let count = |c: Option<usize>| c.map_or_else(|| "-".to_string(), |v| v.to_string());
    for l in &lines {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>7.4}  {:>7.4}  {:>7.4}",
            l.event_type,
            count(l.tp),
            count(l.fp),
            count(l.fn_),
            l.precision,
            l.recall,
            l.f1
        );
    }
    out
}
