//! Sparse binary log-linear models.
//!
//! One trigger model per event type, one argument-attachment model shared
//! by all types (its features are conjoined with the role label) and an
//! optional genericity model. Training is deterministic full-batch gradient
//! descent on the L2-regularized average log loss from a zero start.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::{Document, DocumentSet};
use crate::fold::fold;
use crate::pipeline::Ontology;
use crate::projection::{EventMention, Projection, Realis, TokenRange};

pub const BOUNDARY_LEFT: &str = "<S>";
pub const BOUNDARY_RIGHT: &str = "</S>";

/// Sparse feature map. Zero values are never stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector(BTreeMap<String, f64>);

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, value: f64) {
        let id = id.into();
        if value == 0.0 {
            self.0.remove(&id);
        } else {
            self.0.insert(id, value);
        }
    }

    /// Sets a binary indicator feature.
    pub fn set(&mut self, id: impl Into<String>) {
        self.insert(id, 1.0);
    }

    pub fn get(&self, id: &str) -> f64 {
        self.0.get(id).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        let mut fv = FeatureVector::new();
        for (k, v) in iter {
            fv.insert(k, v);
        }
        fv
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelKind {
    Trigger(String),
    Argument,
    Genericity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub bias: f64,
    pub weights: BTreeMap<String, f64>,
}

impl LinearModel {
    pub fn zero(kind: ModelKind) -> Self {
        LinearModel {
            kind,
            bias: 0.0,
            weights: BTreeMap::new(),
        }
    }

    pub fn score(&self, features: &FeatureVector) -> f64 {
        self.bias
            + features
                .iter()
                .map(|(id, v)| self.weights.get(id).copied().unwrap_or(0.0) * v)
                .sum::<f64>()
    }

    /// Probability of the positive class.
    pub fn predict(&self, features: &FeatureVector) -> f64 {
        logistic(self.score(features))
    }
}

pub fn predict(model: &LinearModel, features: &FeatureVector) -> f64 {
    model.predict(features)
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

// log(1 + e^x) without overflow
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub features: FeatureVector,
    pub label: bool,
}

impl TrainExample {
    pub fn new(features: FeatureVector, label: bool) -> Self {
        TrainExample { features, label }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub tolerance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_lambda: 0.1,
            learning_rate: 0.1,
            epochs: 200,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrainError {
    #[error("degenerate training set: {positives} positive and {negatives} negative examples")]
    Degenerate { positives: usize, negatives: usize },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Loss before the first step and after every accepted step.
    pub losses: Vec<f64>,
    /// Times the step size was halved because a step raised the loss.
    pub step_halvings: usize,
    pub converged: bool,
}

/// Regularized average log loss (the negated training objective).
pub fn loss(model: &LinearModel, examples: &[TrainExample], l2_lambda: f64) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let nll: f64 = examples
        .iter()
        .map(|ex| {
            let z = model.score(&ex.features);
            if ex.label {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    let norm: f64 = model.weights.values().map(|w| w * w).sum();
    nll / examples.len() as f64 + 0.5 * l2_lambda * norm
}

/// Analytic gradient of [`loss`]: `(d/d bias, d/d weight)`.
///
/// Features absent from the model are included with weight zero.
pub fn gradient(model: &LinearModel, examples: &[TrainExample], l2_lambda: f64) -> (f64, BTreeMap<String, f64>) {
    let n = examples.len().max(1) as f64;
    let mut grad: BTreeMap<String, f64> = model
        .weights
        .iter()
        .map(|(k, w)| (k.clone(), l2_lambda * w))
        .collect();
    let mut grad_bias = 0.0;
    for ex in examples {
        let err = model.predict(&ex.features) - if ex.label { 1.0 } else { 0.0 };
        grad_bias += err / n;
        for (id, v) in ex.features.iter() {
            *grad.entry(id.to_string()).or_insert(0.0) += err * v / n;
        }
    }
    (grad_bias, grad)
}

struct DenseSet {
    rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<f64>,
}

impl DenseSet {
    fn loss(&self, w: &[f64], b: f64, l2_lambda: f64) -> f64 {
        let n = self.rows.len() as f64;
        let mut nll = 0.0;
        for (row, &y) in self.rows.iter().zip(&self.labels) {
            let z = b + row.iter().map(|&(j, v)| w[j] * v).sum::<f64>();
            nll += if y > 0.5 { softplus(-z) } else { softplus(z) };
        }
        nll / n + 0.5 * l2_lambda * w.iter().map(|x| x * x).sum::<f64>()
    }

    fn gradient(&self, w: &[f64], b: f64, l2_lambda: f64, gw: &mut [f64]) -> f64 {
        let n = self.rows.len() as f64;
        for (g, wj) in gw.iter_mut().zip(w) {
            *g = l2_lambda * wj;
        }
        let mut gb = 0.0;
        for (row, &y) in self.rows.iter().zip(&self.labels) {
            let z = b + row.iter().map(|&(j, v)| w[j] * v).sum::<f64>();
            let err = logistic(z) - y;
            gb += err / n;
            for &(j, v) in row {
                gw[j] += err * v / n;
            }
        }
        gb
    }
}

const MAX_HALVINGS_PER_EPOCH: usize = 40;

/// Trains a binary model by full-batch gradient descent.
///
/// Stops after `config.epochs` steps or once the loss improves by less than
/// `config.tolerance`. A step that would raise the loss is retried with half
/// the step size, so the recorded losses never increase.
pub fn train(
    examples: &[TrainExample],
    kind: ModelKind,
    config: &TrainConfig,
) -> Result<(LinearModel, TrainReport), TrainError> {
    let positives = examples.iter().filter(|e| e.label).count();
    let negatives = examples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(TrainError::Degenerate {
            positives,
            negatives,
        });
    }

    let names: Vec<&str> = examples
        .iter()
        .flat_map(|e| e.features.iter().map(|(k, _)| k))
        .collect::<BTreeSet<&str>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let data = DenseSet {
        rows: examples
            .iter()
            .map(|e| e.features.iter().map(|(k, v)| (index[k], v)).collect())
            .collect(),
        labels: examples
            .iter()
            .map(|e| if e.label { 1.0 } else { 0.0 })
            .collect(),
    };

    let lambda = config.l2_lambda;
    let mut w = alloc::vec![0.0; names.len()];
    let mut b = 0.0;
    let mut gw = alloc::vec![0.0; names.len()];
    let mut trial = alloc::vec![0.0; names.len()];
    let mut step = config.learning_rate;
    let mut current = data.loss(&w, b, lambda);
    let mut report = TrainReport {
        losses: alloc::vec![current],
        ..TrainReport::default()
    };

    'epochs: for _ in 0..config.epochs {
        let gb = data.gradient(&w, b, lambda, &mut gw);
        let mut halvings = 0;
        let (next_b, next) = loop {
            for ((t, wj), g) in trial.iter_mut().zip(&w).zip(&gw) {
                *t = wj - step * g;
            }
            let tb = b - step * gb;
            let l = data.loss(&trial, tb, lambda);
            if l <= current {
                break (tb, l);
            }
            halvings += 1;
            report.step_halvings += 1;
            step *= 0.5;
            if halvings > MAX_HALVINGS_PER_EPOCH {
                report.converged = true;
                break 'epochs;
            }
        };
        core::mem::swap(&mut w, &mut trial);
        b = next_b;
        report.epochs_run += 1;
        report.losses.push(next);
        let improvement = current - next;
        current = next;
        if improvement < config.tolerance {
            report.converged = true;
            break;
        }
    }

    let weights = names
        .iter()
        .zip(&w)
        .filter(|(_, &v)| v != 0.0)
        .map(|(n, &v)| (n.to_string(), v))
        .collect();
    Ok((LinearModel { kind, bias: b, weights }, report))
}

// ---- feature templates ----

/// Capitalization and digit pattern of a token.
pub fn shape(token: &str) -> &'static str {
    let alpha = token.chars().filter(|c| c.is_alphabetic()).count();
    let digit = token.chars().filter(|c| c.is_numeric()).count();
    let total = token.chars().count();
    if alpha == 0 && digit == 0 {
        return "punct";
    }
    if alpha == 0 && digit == total {
        return "digit";
    }
    if digit > 0 {
        return "alnum";
    }
    let mut chars = token.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    let rest: Vec<char> = chars.collect();
    if !first_upper && token.chars().all(|c| !c.is_uppercase()) {
        "lower"
    } else if token.chars().filter(|c| c.is_alphabetic()).all(char::is_uppercase) {
        "upper"
    } else if first_upper && rest.iter().all(|c| !c.is_uppercase()) {
        "title"
    } else {
        "mixed"
    }
}

fn length_bucket(len: usize) -> &'static str {
    match len {
        0..=5 => "1-5",
        6..=10 => "6-10",
        11..=20 => "11-20",
        _ => "21+",
    }
}

/// Token-level features for trigger detection. Context stops at sentence
/// boundaries.
pub fn trigger_features(doc: &Document, token: usize) -> FeatureVector {
    let sentence = doc.sentences()[doc.sentence_of_token(token)];
    let word = |offset: isize| -> String {
        let i = token as isize + offset;
        if i < sentence.first_token as isize {
            BOUNDARY_LEFT.to_string()
        } else if i >= sentence.last_token as isize {
            BOUNDARY_RIGHT.to_string()
        } else {
            fold(doc.token_text(i as usize))
        }
    };
    let w0 = word(0);
    let prev = word(-1);
    let mut fv = FeatureVector::new();
    fv.set(format!("shape0={}", shape(doc.token_text(token))));
    fv.set(format!("w-2={}", word(-2)));
    fv.set(format!("w+1={}", word(1)));
    fv.set(format!("w+2={}", word(2)));
    fv.set(format!("w-1,0={}|{}", prev, w0));
    fv.set(format!("slen={}", length_bucket(sentence.len())));
    fv.set(format!("w-1={}", prev));
    fv.set(format!("w0={}", w0));
    fv
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("candidate tokens [{start}, {end}) lie outside the mention's sentence")]
    CandidateOutsideSentence { start: usize, end: usize },
}

fn distance_bucket(d: isize) -> String {
    match d {
        -3..=3 => format!("{}", d),
        4..=7 => "4..7".to_string(),
        -7..=-4 => "-4..-7".to_string(),
        d if d > 0 => ">7".to_string(),
        _ => "<-7".to_string(),
    }
}

/// Features for attaching `candidate` to a mention with `role`. Every
/// template is conjoined with the role label.
pub fn argument_features(
    doc: &Document,
    sentence: usize,
    anchor: TokenRange,
    candidate: TokenRange,
    role: &str,
) -> Result<FeatureVector, FeatureError> {
    let s = doc.sentences()[sentence];
    if candidate.is_empty() || candidate.start < s.first_token || candidate.end > s.last_token {
        return Err(FeatureError::CandidateOutsideSentence {
            start: candidate.start,
            end: candidate.end,
        });
    }
    let head = candidate.end - 1;
    let (distance, order) = if candidate.start >= anchor.end {
        ((candidate.start - (anchor.end - 1)) as isize, "after")
    } else if candidate.end <= anchor.start {
        (-((anchor.start - head) as isize), "before")
    } else {
        (0, "overlap")
    };
    let mut fv = FeatureVector::new();
    fv.set(format!("role={}", role));
    for t in anchor.start..anchor.end {
        fv.set(format!("role={}∧anchor={}", role, fold(doc.token_text(t))));
    }
    fv.set(format!("role={}∧head={}", role, fold(doc.token_text(head))));
    fv.set(format!("role={}∧dist={}", role, distance_bucket(distance)));
    fv.set(format!("role={}∧order={}", role, order));
    fv.set(format!("role={}∧shape={}", role, shape(doc.token_text(head))));
    Ok(fv)
}

/// Features for the genericity model: the trigger context of the anchor head.
pub fn genericity_features(doc: &Document, anchor: TokenRange) -> FeatureVector {
    trigger_features(doc, anchor.end - 1)
}

// ---- candidate argument spans ----

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "before", "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has",
    "have", "he", "her", "his", "i", "if", "in", "into", "is", "it", "its", "may", "more",
    "most", "no", "not", "of", "on", "one", "or", "other", "our", "out", "over", "said", "she",
    "so", "some", "than", "that", "the", "their", "them", "then", "there", "these", "they",
    "this", "those", "to", "up", "was", "we", "were", "what", "when", "which", "while", "who",
    "will", "with", "would", "you",
];

fn is_stopword(folded: &str) -> bool {
    STOPWORDS.binary_search(&folded).is_ok()
}

fn is_capitalized(token: &str) -> bool {
    token.chars().next().is_some_and(char::is_uppercase)
}

/// Candidate argument spans in a sentence: maximal runs of capitalized
/// tokens, single alphabetic non-stopword tokens, and externally supplied
/// entity spans. Sorted, deduplicated, excluding spans overlapping `exclude`.
pub fn candidate_spans(
    doc: &Document,
    sentence: usize,
    extra: &[TokenRange],
    exclude: Option<TokenRange>,
) -> Vec<TokenRange> {
    let s = doc.sentences()[sentence];
    let mut out: BTreeSet<TokenRange> = BTreeSet::new();
    let mut run: Option<usize> = None;
    for t in s.first_token..=s.last_token {
        let cap = t < s.last_token && is_capitalized(doc.token_text(t));
        match (cap, run) {
            (true, None) => run = Some(t),
            (false, Some(start)) => {
                out.insert(TokenRange::new(start, t));
                run = None;
            }
            _ => {}
        }
        if t < s.last_token {
            let text = doc.token_text(t);
            if text.chars().all(char::is_alphabetic) && !is_stopword(&fold(text)) {
                out.insert(TokenRange::new(t, t + 1));
            }
        }
    }
    for r in extra {
        if !r.is_empty() && r.start >= s.first_token && r.end <= s.last_token {
            out.insert(*r);
        }
    }
    out.into_iter()
        .filter(|r| exclude.is_none_or(|x| !x.overlaps(r)))
        .collect()
}

/// Entity spans from an optional sidecar, by doc id.
pub type EntitySpans = BTreeMap<String, Vec<TokenRange>>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingSets {
    pub trigger: BTreeMap<String, Vec<TrainExample>>,
    pub argument: Vec<TrainExample>,
    pub genericity: Vec<TrainExample>,
}

/// Builds per-model example sets from projected annotations.
///
/// Trigger positives are anchor tokens; negatives are all other tokens of
/// that type's annotated sentences, so each type sees its own negatives.
/// Argument examples pair every candidate span with every role of the type.
pub fn build_training_sets(
    projection: &Projection,
    docs: &DocumentSet,
    ontology: &Ontology,
    entities: &EntitySpans,
) -> TrainingSets {
    let mut sets = TrainingSets::default();
    for t in ontology.event_types() {
        sets.trigger.entry(t.to_string()).or_default();
    }

    // (type, doc, sentence) -> anchor tokens
    let mut present: BTreeMap<(&str, &str, usize), BTreeSet<usize>> = BTreeMap::new();
    for m in &projection.mentions {
        present
            .entry((&m.event_type, &m.doc_id, m.sentence))
            .or_default()
            .extend(m.anchor.start..m.anchor.end);
    }
    let mut negative_sentences: BTreeSet<(&str, &str, usize)> = BTreeSet::new();
    for n in &projection.negatives {
        if !present.contains_key(&(n.event_type.as_str(), n.doc_id.as_str(), n.sentence)) {
            negative_sentences.insert((&n.event_type, &n.doc_id, n.sentence));
        }
    }

    for ((event_type, doc_id, sentence), anchors) in &present {
        let Some(doc) = docs.get(doc_id) else { continue };
        let s = doc.sentences()[*sentence];
        let bucket = sets.trigger.entry(event_type.to_string()).or_default();
        for t in s.first_token..s.last_token {
            bucket.push(TrainExample::new(trigger_features(doc, t), anchors.contains(&t)));
        }
    }
    for (event_type, doc_id, sentence) in &negative_sentences {
        let Some(doc) = docs.get(doc_id) else { continue };
        let s = doc.sentences()[*sentence];
        let bucket = sets.trigger.entry(event_type.to_string()).or_default();
        for t in s.first_token..s.last_token {
            bucket.push(TrainExample::new(trigger_features(doc, t), false));
        }
    }

    for m in projection.argument_mentions() {
        let Some(doc) = docs.get(&m.doc_id) else { continue };
        let extra = entities.get(&m.doc_id).map(Vec::as_slice).unwrap_or(&[]);
        let mut candidates = candidate_spans(doc, m.sentence, extra, Some(m.anchor));
        for a in &m.arguments {
            if !candidates.contains(&a.range) {
                candidates.push(a.range);
            }
        }
        let roles = mention_roles(m, ontology);
        for c in &candidates {
            for role in &roles {
                let label = m.arguments.iter().any(|a| a.range == *c && &a.role == role);
                if let Ok(fv) = argument_features(doc, m.sentence, m.anchor, *c, role) {
                    sets.argument.push(TrainExample::new(fv, label));
                }
            }
        }
    }

    for m in &projection.mentions {
        let Some(doc) = docs.get(&m.doc_id) else { continue };
        sets.genericity.push(TrainExample::new(
            genericity_features(doc, m.anchor),
            m.realis == Realis::Actual,
        ));
    }
    sets
}

fn mention_roles(m: &EventMention, ontology: &Ontology) -> Vec<String> {
    let mut roles: Vec<String> = ontology.roles(&m.event_type).to_vec();
    for a in &m.arguments {
        if !roles.contains(&a.role) {
            roles.push(a.role.clone());
        }
    }
    roles
}

/// Trained models for the whole pipeline.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelSet {
    pub triggers: BTreeMap<String, LinearModel>,
    pub argument: Option<LinearModel>,
    pub genericity: Option<LinearModel>,
}

/// A model that could not be trained at this point, and why.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkippedModel {
    pub kind: ModelKind,
    pub reason: TrainError,
}

/// Trains every model that has both classes; the rest are reported as skipped.
pub fn train_all(sets: &TrainingSets, config: &TrainConfig) -> (ModelSet, Vec<SkippedModel>) {
    let mut models = ModelSet::default();
    let mut skipped = Vec::new();
    for (event_type, examples) in &sets.trigger {
        let kind = ModelKind::Trigger(event_type.clone());
        match train(examples, kind.clone(), config) {
            Ok((m, _)) => {
                models.triggers.insert(event_type.clone(), m);
            }
            Err(reason) => skipped.push(SkippedModel { kind, reason }),
        }
    }
    match train(&sets.argument, ModelKind::Argument, config) {
        Ok((m, _)) => models.argument = Some(m),
        Err(reason) => skipped.push(SkippedModel {
            kind: ModelKind::Argument,
            reason,
        }),
    }
    match train(&sets.genericity, ModelKind::Genericity, config) {
        Ok((m, _)) => models.genericity = Some(m),
        Err(reason) => skipped.push(SkippedModel {
            kind: ModelKind::Genericity,
            reason,
        }),
    }
    (models, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn fv(pairs: &[(&str, f64)]) -> FeatureVector {
        pairs.iter().map(|&(k, v)| (k, v)).collect()
    }

    #[test]
    fn feature_vector_drops_zeros() {
        let mut v = fv(&[("a", 1.0), ("b", 0.0)]);
        assert_eq!(v.len(), 1);
        v.insert("a", 0.0);
        assert!(v.is_empty());
    }

    #[test]
    fn predict_examples() {
        let zero = LinearModel::zero(ModelKind::Argument);
        assert_eq!(zero.predict(&fv(&[("x", 1.0), ("y", 3.0)])), 0.5);

        let mut m = LinearModel::zero(ModelKind::Argument);
        m.weights.insert("f".into(), libm::log(3.0));
        assert!((m.predict(&fv(&[("f", 1.0)])) - 0.75).abs() < 1e-12);

        let mut m = LinearModel::zero(ModelKind::Argument);
        m.bias = 0.5;
        m.weights.insert("a".into(), 2.0);
        m.weights.insert("b".into(), -1.0);
        let p = m.predict(&fv(&[("a", 1.0), ("b", 2.0)]));
        assert!((p - 0.622_459_331_201_854_6).abs() < 1e-12);
        // unseen features contribute nothing
        assert_eq!(m.predict(&fv(&[("zzz", 5.0)])), logistic(0.5));
    }

    #[test]
    fn logistic_is_stable_at_extremes() {
        assert_eq!(logistic(-1000.0), 0.0);
        assert_eq!(logistic(1000.0), 1.0);
        assert!(softplus(1000.0).is_finite());
    }

    #[test]
    fn train_rejects_single_class() {
        let only_neg = vec![TrainExample::new(fv(&[("x", 1.0)]), false)];
        assert_eq!(
            train(&only_neg, ModelKind::Argument, &TrainConfig::default()).unwrap_err(),
            TrainError::Degenerate {
                positives: 0,
                negatives: 1
            }
        );
        assert!(train(&[], ModelKind::Argument, &TrainConfig::default()).is_err());
    }

    #[test]
    fn separable_toy_set() {
        let mut examples = Vec::new();
        for _ in 0..5 {
            examples.push(TrainExample::new(fv(&[("x", 1.0)]), true));
            examples.push(TrainExample::new(FeatureVector::new(), false));
        }
        let (model, report) = train(&examples, ModelKind::Argument, &TrainConfig::default()).unwrap();
        for ex in &examples {
            assert_eq!(model.predict(&ex.features) >= 0.5, ex.label);
        }
        assert!(report.losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(model.weights["x"].is_finite());
    }

    #[test]
    fn trigger_feature_templates() {
        let doc = Document::new("d", "Troops marched .");
        let f = trigger_features(&doc, 1);
        for id in ["w0=marched", "w-1=troops", "w+1=.", "shape0=lower", "w-1,0=troops|marched", "w+2=</S>"] {
            assert!(f.contains(id), "{id}");
        }
        assert_eq!(f, trigger_features(&doc, 1));
        let f0 = trigger_features(&doc, 0);
        assert!(f0.contains("w-1=<S>") && f0.contains("w-2=<S>"));
        assert!(f0.contains("shape0=title"));
    }

    #[test]
    fn argument_feature_templates() {
        let doc = Document::new("d", "Troops marched in Paris .");
        let anchor = TokenRange::new(1, 2);
        let f = argument_features(&doc, 0, anchor, TokenRange::new(0, 1), "Agent").unwrap();
        assert!(f.contains("role=Agent∧dist=-1"));
        assert!(f.contains("role=Agent∧head=troops"));
        assert!(f.contains("role=Agent∧order=before"));
        assert!(f.contains("role=Agent∧anchor=marched"));
        assert_eq!(f, argument_features(&doc, 0, anchor, TokenRange::new(0, 1), "Agent").unwrap());

        let g = argument_features(&doc, 0, anchor, TokenRange::new(3, 4), "Place").unwrap();
        assert!(g.contains("role=Place∧order=after"));
        assert!(g.contains("role=Place∧dist=2"));

        let two = Document::new("d", "Troops marched . Police watched .");
        assert!(argument_features(&two, 0, anchor, TokenRange::new(3, 4), "Agent").is_err());
    }

    #[test]
    fn shapes() {
        assert_eq!(shape("marched"), "lower");
        assert_eq!(shape("Paris"), "title");
        assert_eq!(shape("NATO"), "upper");
        assert_eq!(shape("iPhone"), "mixed");
        assert_eq!(shape("1999"), "digit");
        assert_eq!(shape("F16"), "alnum");
        assert_eq!(shape("."), "punct");
    }

    #[test]
    fn candidates_cover_capitalized_runs_and_nouns() {
        let doc = Document::new("d", "Protesters in New York marched on the city hall .");
        let c = candidate_spans(&doc, 0, &[], Some(TokenRange::new(4, 5)));
        assert!(c.contains(&TokenRange::new(2, 4)));
        assert!(c.contains(&TokenRange::new(0, 1)));
        assert!(c.contains(&TokenRange::new(7, 8)));
        assert!(!c.contains(&TokenRange::new(1, 2)));
        assert!(!c.iter().any(|r| r.overlaps(&TokenRange::new(4, 5))));
        let stop_sorted = STOPWORDS.windows(2).all(|w| w[0] < w[1]);
        assert!(stop_sorted);
    }
}
