//! Document-to-tuple extraction in high-recall mode.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::Document;
use crate::fold::canonical;
use crate::learning::{
    argument_features, candidate_spans, genericity_features, trigger_features, EntitySpans,
    LinearModel, ModelSet,
};
use crate::projection::TokenRange;

pub use crate::projection::Realis;

pub const DEFAULT_THRESHOLD: f64 = 0.10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OntologyError {
    #[error("line {line}: expected `Type: Role Role ...`")]
    Malformed { line: usize },
    #[error("line {line}: event type {event_type} listed twice")]
    DuplicateType { line: usize, event_type: String },
}

/// Event types and the role inventory of each.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ontology {
    types: BTreeMap<String, Vec<String>>,
}

impl Ontology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_type<S: Into<String>>(mut self, event_type: impl Into<String>, roles: impl IntoIterator<Item = S>) -> Self {
        self.insert(event_type, roles);
        self
    }

    pub fn insert<S: Into<String>>(&mut self, event_type: impl Into<String>, roles: impl IntoIterator<Item = S>) {
        let mut list: Vec<String> = Vec::new();
        for r in roles {
            let r = r.into();
            if !list.contains(&r) {
                list.push(r);
            }
        }
        self.types.insert(event_type.into(), list);
    }

    /// One type per line: `Conflict.Demonstrate: Entity Place`. Blank lines
    /// and lines starting with `#` are ignored. Roles may be separated by
    /// whitespace or commas.
    pub fn parse(text: &str) -> Result<Self, OntologyError> {
        let mut ontology = Ontology::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((name, roles)) = line.split_once(':') else {
                return Err(OntologyError::Malformed { line: i + 1 });
            };
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(OntologyError::Malformed { line: i + 1 });
            }
            if ontology.contains(name) {
                return Err(OntologyError::DuplicateType {
                    line: i + 1,
                    event_type: name.to_string(),
                });
            }
            let roles = roles
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|r| !r.is_empty());
            ontology.insert(name, roles);
        }
        Ok(ontology)
    }

    pub fn contains(&self, event_type: &str) -> bool {
        self.types.contains_key(event_type)
    }

    pub fn event_types(&self) -> impl Iterator<Item = &str> + '_ {
        self.types.keys().map(String::as_str)
    }

    /// Roles of a type; empty for unknown types.
    pub fn roles(&self, event_type: &str) -> &[String] {
        self.types.get(event_type).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_role(&self, event_type: &str, role: &str) -> bool {
        self.roles(event_type).iter().any(|r| r == role)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

/// A scored `(t, r, e, m)` tuple, qualified by its document.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResponseTuple {
    pub doc_id: String,
    pub event_type: String,
    pub role: String,
    pub entity: String,
    pub realis: Realis,
}

/// Where a tuple came from and the per-stage probabilities behind it.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Justification {
    pub anchor: TokenRange,
    pub argument: TokenRange,
    pub trigger_probability: f64,
    pub argument_probability: f64,
    pub realis_probability: Option<f64>,
}

impl Justification {
    fn better_than(&self, other: &Justification) -> bool {
        (self.trigger_probability, self.argument_probability) > (other.trigger_probability, other.argument_probability)
    }
}

/// Extraction output: a tuple set with one justification per tuple.
pub type TupleSet = BTreeMap<ResponseTuple, Justification>;

fn insert_tuple(set: &mut TupleSet, tuple: ResponseTuple, just: Justification) {
    match set.get(&tuple) {
        Some(existing) if !just.better_than(existing) => {}
        _ => {
            set.insert(tuple, just);
        }
    }
}

/// A token proposed as an event anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateMention {
    pub event_type: String,
    pub sentence: usize,
    pub anchor: TokenRange,
    pub probability: f64,
}

/// Every (token, type) pair whose trigger probability is at least `threshold`.
pub fn detect_triggers(
    doc: &Document,
    trigger_models: &BTreeMap<String, LinearModel>,
    threshold: f64,
) -> Vec<CandidateMention> {
    let mut out = Vec::new();
    for (sentence, span) in doc.sentences().iter().enumerate() {
        for t in span.first_token..span.last_token {
            let features = trigger_features(doc, t);
            for (event_type, model) in trigger_models {
                let probability = model.predict(&features);
                if probability >= threshold {
                    out.push(CandidateMention {
                        event_type: event_type.clone(),
                        sentence,
                        anchor: TokenRange::new(t, t + 1),
                        probability,
                    });
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Attachment {
    pub role: String,
    pub range: TokenRange,
    pub probability: f64,
}

/// Every (candidate, role) pair scoring at least `threshold`. Candidates
/// outside the mention's sentence are ignored.
pub fn attach_arguments(
    doc: &Document,
    mention: &CandidateMention,
    candidates: &[TokenRange],
    roles: &[String],
    arg_model: &LinearModel,
    threshold: f64,
) -> Vec<Attachment> {
    let mut out = Vec::new();
    for c in candidates {
        for role in roles {
            let Ok(fv) = argument_features(doc, mention.sentence, mention.anchor, *c, role) else {
                continue;
            };
            let probability = arg_model.predict(&fv);
            if probability >= threshold {
                out.push(Attachment {
                    role: role.clone(),
                    range: *c,
                    probability,
                });
            }
        }
    }
    out
}

/// ACTUAL when the genericity model gives at least 0.5 (or there is no
/// model), GENERIC otherwise.
pub fn assign_realis(doc: &Document, anchor: TokenRange, model: Option<&LinearModel>) -> (Realis, Option<f64>) {
    match model {
        None => (Realis::Actual, None),
        Some(m) => {
            let p = m.predict(&genericity_features(doc, anchor));
            (realis_for(p), Some(p))
        }
    }
}

pub fn realis_for(probability: f64) -> Realis {
    if probability >= 0.5 {
        Realis::Actual
    } else {
        Realis::Generic
    }
}

// ---- inference rules ----

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TuplePattern {
    pub event_type: Option<String>,
    pub role: Option<String>,
    pub entity: Option<String>,
    pub realis: Option<Realis>,
}

impl TuplePattern {
    pub fn matches(&self, t: &ResponseTuple) -> bool {
        self.event_type.as_ref().is_none_or(|v| *v == t.event_type)
            && self.role.as_ref().is_none_or(|v| *v == t.role)
            && self.entity.as_ref().is_none_or(|v| *v == t.entity)
            && self.realis.is_none_or(|v| v == t.realis)
    }

    fn rewrite(&self, t: &ResponseTuple) -> ResponseTuple {
        ResponseTuple {
            doc_id: t.doc_id.clone(),
            event_type: self.event_type.clone().unwrap_or_else(|| t.event_type.clone()),
            role: self.role.clone().unwrap_or_else(|| t.role.clone()),
            entity: self.entity.clone().unwrap_or_else(|| t.entity.clone()),
            realis: self.realis.unwrap_or(t.realis),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RuleAction {
    /// Drop matching tuples.
    Remove,
    /// Add a copy of each matching tuple with the given fields replaced.
    Add(TuplePattern),
    /// Scale the argument probability of matching tuples, clamped to [0, 1].
    Rescore(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceRule {
    pub pattern: TuplePattern,
    pub action: RuleAction,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("line {line}: unknown action {action:?}")]
    UnknownAction { line: usize, action: String },
    #[error("line {line}: expected field=value, got {token:?}")]
    BadField { line: usize, token: String },
    #[error("line {line}: unknown realis {value:?}")]
    BadRealis { line: usize, value: String },
    #[error("line {line}: {action} needs `=>` followed by its argument")]
    MissingTarget { line: usize, action: &'static str },
    #[error("line {line}: remove takes no `=>` argument")]
    UnexpectedTarget { line: usize },
    #[error("line {line}: bad rescore factor {value:?}")]
    BadFactor { line: usize, value: String },
}

fn parse_pattern(text: &str, line: usize) -> Result<TuplePattern, RuleError> {
    let mut p = TuplePattern::default();
    for token in text.split_whitespace() {
        let bad = || RuleError::BadField {
            line,
            token: token.to_string(),
        };
        let (key, value) = token.split_once('=').ok_or_else(bad)?;
        if value.is_empty() {
            return Err(bad());
        }
        // entity values use `_` for spaces so a rule stays one token per field
        match key {
            "type" => p.event_type = Some(value.to_string()),
            "role" => p.role = Some(value.to_string()),
            "entity" => p.entity = Some(canonical(&value.replace('_', " "))),
            "realis" => {
                p.realis = Some(Realis::parse(value).ok_or_else(|| RuleError::BadRealis {
                    line,
                    value: value.to_string(),
                })?)
            }
            _ => return Err(bad()),
        }
    }
    Ok(p)
}

/// Parses rules, one per line:
///
/// ```text
/// remove type=Justice.Arrest role=Place
/// add type=Conflict.Demonstrate role=Entity => role=Agent
/// rescore entity=police => 0.5
/// ```
///
/// Blank lines and `#` comments are skipped. Errors surface here, never
/// when the rules are applied.
pub fn parse_rules(text: &str) -> Result<Vec<InferenceRule>, RuleError> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, target) = match line.split_once("=>") {
            Some((h, t)) => (h.trim(), Some(t.trim())),
            None => (line, None),
        };
        let (action, rest) = head.split_once(char::is_whitespace).unwrap_or((head, ""));
        let pattern = parse_pattern(rest, line_no)?;
        let action = match (action, target) {
            ("remove", None) => RuleAction::Remove,
            ("remove", Some(_)) => return Err(RuleError::UnexpectedTarget { line: line_no }),
            ("add", Some(t)) if !t.is_empty() => RuleAction::Add(parse_pattern(t, line_no)?),
            ("add", _) => {
                return Err(RuleError::MissingTarget {
                    line: line_no,
                    action: "add",
                })
            }
            ("rescore", Some(t)) => {
                let factor: f64 = t.parse().map_err(|_| RuleError::BadFactor {
                    line: line_no,
                    value: t.to_string(),
                })?;
                if !factor.is_finite() || factor < 0.0 {
                    return Err(RuleError::BadFactor {
                        line: line_no,
                        value: t.to_string(),
                    });
                }
                RuleAction::Rescore(factor)
            }
            ("rescore", None) => {
                return Err(RuleError::MissingTarget {
                    line: line_no,
                    action: "rescore",
                })
            }
            (other, _) => {
                return Err(RuleError::UnknownAction {
                    line: line_no,
                    action: other.to_string(),
                })
            }
        };
        rules.push(InferenceRule { pattern, action });
    }
    Ok(rules)
}

/// Applies rules in order. Each rule sees the output of the previous one.
pub fn apply_inference_rules(tuples: TupleSet, rules: &[InferenceRule]) -> TupleSet {
    let mut current = tuples;
    for rule in rules {
        match &rule.action {
            RuleAction::Remove => current.retain(|t, _| !rule.pattern.matches(t)),
            RuleAction::Add(target) => {
                let added: Vec<(ResponseTuple, Justification)> = current
                    .iter()
                    .filter(|(t, _)| rule.pattern.matches(t))
                    .map(|(t, j)| (target.rewrite(t), *j))
                    .collect();
                for (t, j) in added {
                    insert_tuple(&mut current, t, j);
                }
            }
            RuleAction::Rescore(factor) => {
                for (t, j) in current.iter_mut() {
                    if rule.pattern.matches(t) {
                        j.argument_probability = (j.argument_probability * factor).clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    current
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractConfig {
    pub trigger_threshold: f64,
    pub argument_threshold: f64,
    pub rules: Vec<InferenceRule>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            trigger_threshold: DEFAULT_THRESHOLD,
            argument_threshold: DEFAULT_THRESHOLD,
            rules: Vec::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("model for event type {0} is not in the ontology")]
    UnknownEventType(String),
}

/// Checks that every trigger model belongs to a configured type.
pub fn check_models(models: &ModelSet, ontology: &Ontology) -> Result<(), ConfigError> {
    match models.triggers.keys().find(|t| !ontology.contains(t)) {
        Some(t) => Err(ConfigError::UnknownEventType(t.clone())),
        None => Ok(()),
    }
}

/// detect → attach → realis → rules. Tuples whose (possibly rescored)
/// argument probability ends below the argument threshold are dropped.
pub fn extract(
    doc: &Document,
    models: &ModelSet,
    ontology: &Ontology,
    entities: &EntitySpans,
    config: &ExtractConfig,
) -> Result<TupleSet, ConfigError> {
    check_models(models, ontology)?;
    let mut tuples = TupleSet::new();
    let Some(arg_model) = models.argument.as_ref() else {
        return Ok(tuples);
    };
    let extra = entities.get(doc.doc_id()).map(Vec::as_slice).unwrap_or(&[]);
    let mut sentence_candidates: BTreeMap<usize, Vec<TokenRange>> = BTreeMap::new();
    for mention in detect_triggers(doc, &models.triggers, config.trigger_threshold) {
        let all = sentence_candidates
            .entry(mention.sentence)
            .or_insert_with(|| candidate_spans(doc, mention.sentence, extra, None));
        let candidates: Vec<TokenRange> = all.iter().copied().filter(|c| !c.overlaps(&mention.anchor)).collect();
        let roles = ontology.roles(&mention.event_type);
        let attachments = attach_arguments(doc, &mention, &candidates, roles, arg_model, config.argument_threshold);
        if attachments.is_empty() {
            continue;
        }
        let (realis, realis_probability) = assign_realis(doc, mention.anchor, models.genericity.as_ref());
        for a in attachments {
            let (s, e) = a.range.char_span(doc);
            let tuple = ResponseTuple {
                doc_id: doc.doc_id().to_string(),
                event_type: mention.event_type.clone(),
                role: a.role,
                entity: canonical(doc.slice(s, e)),
                realis,
            };
            let just = Justification {
                anchor: mention.anchor,
                argument: a.range,
                trigger_probability: mention.probability,
                argument_probability: a.probability,
                realis_probability,
            };
            insert_tuple(&mut tuples, tuple, just);
        }
    }
    let mut tuples = apply_inference_rules(tuples, &config.rules);
    tuples.retain(|_, j| j.argument_probability >= config.argument_threshold);
    Ok(tuples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::ModelKind;
    use alloc::vec;

    fn biased(kind: ModelKind, bias: f64) -> LinearModel {
        LinearModel {
            bias,
            ..LinearModel::zero(kind)
        }
    }

    fn logit(p: f64) -> f64 {
        libm::log(p / (1.0 - p))
    }

    fn tuple(t: &str, r: &str, e: &str) -> ResponseTuple {
        ResponseTuple {
            doc_id: "d".into(),
            event_type: t.into(),
            role: r.into(),
            entity: e.into(),
            realis: Realis::Actual,
        }
    }

    fn just() -> Justification {
        Justification {
            anchor: TokenRange::new(0, 1),
            argument: TokenRange::new(1, 2),
            trigger_probability: 0.5,
            argument_probability: 0.5,
            realis_probability: None,
        }
    }

    #[test]
    fn ontology_parse() {
        let o = Ontology::parse("# types\nConflict.Demonstrate: Entity Place\n\nJustice.Arrest: Agent, Person,Place\n").unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o.roles("Justice.Arrest"), ["Agent", "Person", "Place"]);
        assert!(o.roles("Nope").is_empty());
        assert_eq!(Ontology::parse("Conflict.Attack"), Err(OntologyError::Malformed { line: 1 }));
        assert!(matches!(Ontology::parse("A: x\nA: y"), Err(OntologyError::DuplicateType { line: 2, .. })));
    }

    #[test]
    fn threshold_is_inclusive() {
        let doc = Document::new("d", "Troops marched .");
        for (p, expected) in [(0.10, 3), (0.0999, 0)] {
            let mut models = BTreeMap::new();
            models.insert("T".to_string(), biased(ModelKind::Trigger("T".into()), logit(p)));
            let found = detect_triggers(&doc, &models, 0.10);
            assert_eq!(found.len(), expected, "p = {p}");
        }
    }

    #[test]
    fn zero_models_emit_every_token_for_every_type() {
        let doc = Document::new("d", "Troops marched .");
        let mut models = BTreeMap::new();
        models.insert("A".to_string(), LinearModel::zero(ModelKind::Trigger("A".into())));
        models.insert("B".to_string(), LinearModel::zero(ModelKind::Trigger("B".into())));
        let found = detect_triggers(&doc, &models, DEFAULT_THRESHOLD);
        assert_eq!(found.len(), 6);
        assert!(found.iter().all(|m| m.probability == 0.5));
    }

    #[test]
    fn attachment_examples() {
        let doc = Document::new("d", "Troops marched in Paris .");
        let mention = CandidateMention {
            event_type: "T".into(),
            sentence: 0,
            anchor: TokenRange::new(1, 2),
            probability: 0.9,
        };
        let roles = vec!["Agent".to_string(), "Place".to_string()];
        let cands = [TokenRange::new(0, 1)];
        let none = attach_arguments(&doc, &mention, &cands, &roles, &biased(ModelKind::Argument, -10.0), 0.1);
        assert!(none.is_empty());

        let mut m = LinearModel::zero(ModelKind::Argument);
        m.bias = -10.0;
        m.weights.insert("role=Agent∧head=troops".into(), 10.0 + logit(0.8));
        let one = attach_arguments(&doc, &mention, &cands, &roles, &m, 0.1);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].role, "Agent");
        assert!((one[0].probability - 0.8).abs() < 1e-12);

        let both = attach_arguments(&doc, &mention, &cands, &roles, &biased(ModelKind::Argument, 3.0), 0.1);
        assert_eq!(both.len(), 2);
    }

    #[test]
    fn realis_rule() {
        let doc = Document::new("d", "Troops marched .");
        let a = TokenRange::new(1, 2);
        assert_eq!(assign_realis(&doc, a, None).0, Realis::Actual);
        assert_eq!(assign_realis(&doc, a, Some(&biased(ModelKind::Genericity, logit(0.7)))).0, Realis::Actual);
        assert_eq!(assign_realis(&doc, a, Some(&biased(ModelKind::Genericity, logit(0.3)))).0, Realis::Generic);
    }

    #[test]
    fn rules() {
        let mut set = TupleSet::new();
        set.insert(tuple("A", "Agent", "troops"), just());
        set.insert(tuple("A", "Place", "paris"), just());
        set.insert(tuple("B", "Agent", "police"), just());
        assert_eq!(apply_inference_rules(set.clone(), &[]), set);

        let rm = parse_rules("remove type=A").unwrap();
        let out = apply_inference_rules(set.clone(), &rm);
        assert!(out.keys().all(|t| t.event_type != "A"));

        let dup = parse_rules("add type=B => role=Agent").unwrap();
        assert_eq!(apply_inference_rules(set.clone(), &dup).len(), 3);

        let add = parse_rules("add type=A role=Agent => role=Entity").unwrap();
        let out = apply_inference_rules(set.clone(), &add);
        assert!(out.contains_key(&tuple("A", "Entity", "troops")));

        let rescore = parse_rules("rescore entity=new_york => 0.5\n# c\n").unwrap();
        assert_eq!(rescore[0].pattern.entity.as_deref(), Some("new york"));
    }

    #[test]
    fn malformed_rules_fail_at_load() {
        assert!(matches!(parse_rules("zap type=A"), Err(RuleError::UnknownAction { line: 1, .. })));
        assert!(matches!(parse_rules("remove kind=A"), Err(RuleError::BadField { .. })));
        assert!(matches!(parse_rules("\nremove realis=MAYBE"), Err(RuleError::BadRealis { line: 2, .. })));
        assert!(matches!(parse_rules("add type=A"), Err(RuleError::MissingTarget { .. })));
        assert!(matches!(parse_rules("rescore type=A => lots"), Err(RuleError::BadFactor { .. })));
        assert!(matches!(parse_rules("remove type=A => role=B"), Err(RuleError::UnexpectedTarget { .. })));
    }

    #[test]
    fn extract_edge_cases() {
        let ontology = Ontology::new().with_type("T", ["Agent"]);
        let mut models = ModelSet::default();
        models.triggers.insert("T".into(), biased(ModelKind::Trigger("T".into()), -20.0));
        models.argument = Some(LinearModel::zero(ModelKind::Argument));
        let cfg = ExtractConfig::default();
        let empty = Document::new("e", "");
        assert!(extract(&empty, &models, &ontology, &EntitySpans::new(), &cfg).unwrap().is_empty());
        let doc = Document::new("d", "Troops marched .");
        assert!(extract(&doc, &models, &ontology, &EntitySpans::new(), &cfg).unwrap().is_empty());

        models.triggers.insert("U".into(), LinearModel::zero(ModelKind::Trigger("U".into())));
        assert_eq!(
            extract(&doc, &models, &ontology, &EntitySpans::new(), &cfg),
            Err(ConfigError::UnknownEventType("U".into()))
        );
    }

    #[test]
    fn extract_planted_pattern() {
        let ontology = Ontology::new().with_type("Conflict.Demonstrate", ["Entity"]);
        let mut trig = biased(ModelKind::Trigger("Conflict.Demonstrate".into()), -6.0);
        trig.weights.insert("w0=marched".into(), 12.0);
        let mut arg = biased(ModelKind::Argument, -6.0);
        arg.weights.insert("role=Entity∧dist=-1".into(), 12.0);
        let models = ModelSet {
            triggers: [("Conflict.Demonstrate".to_string(), trig)].into_iter().collect(),
            argument: Some(arg),
            genericity: None,
        };
        let doc = Document::new("d", "Angry  Students marched .");
        let out = extract(&doc, &models, &ontology, &EntitySpans::new(), &ExtractConfig::default()).unwrap();
        let planted = ResponseTuple {
            doc_id: "d".into(),
            event_type: "Conflict.Demonstrate".into(),
            role: "Entity".into(),
            entity: "angry students".into(),
            realis: Realis::Actual,
        };
        assert!(out.contains_key(&planted));
        assert!(out.keys().all(|t| t.entity != "marched"));
    }
}
