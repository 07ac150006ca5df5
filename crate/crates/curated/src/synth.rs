//! Synthetic fixture with planted trigger and argument patterns, and a
//! scripted teacher that works through the annotation protocol over any
//! [`Desk`].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use curated_core::projection::TokenRange;
use curated_core::search::phrase_tokens;
use curated_core::workflow::SkipReason;
use curated_core::{Document, DocumentSet, Ontology, Realis, RecordKind, ResponseTuple, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::server::{
    Abandon, Accepted, AnnotationRequest, ApiError, AppState, Brainstorm, Committed, CreateSession, DecisionKind,
    DecisionRequest, DocView, ManualClock, NextIndicator, Promote, Promoted, SearchParams, SearchResults, StateView,
};

pub const DEMONSTRATE: &str = "Conflict.Demonstrate";
pub const ARREST: &str = "Justice.Arrest";

const GROUPS: &[&str] = &[
    "Students", "Farmers", "Workers", "Teachers", "Nurses", "Miners", "Activists", "Doctors", "Pilots", "Drivers",
];
const PLACES: &[&str] = &[
    "Paris", "Lyon", "Berlin", "Madrid", "Rome", "Cairo", "Lagos", "Lima", "Oslo", "Delhi", "Tokyo", "Seoul",
];
const AGENTS: &[&str] = &["Police", "Troops", "Officers", "Guards", "Agents", "Soldiers"];
const PEOPLE: &[&str] = &[
    "Smith", "Jones", "Garcia", "Chen", "Kumar", "Novak", "Silva", "Okafor", "Haddad", "Ivanov",
];
const DAYS: &[&str] = &["Monday", "Tuesday", "Friday", "Sunday"];

/// A planted event: anchors and role-labeled arguments as token ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldMention {
    pub event_type: String,
    pub anchors: Vec<TokenRange>,
    pub arguments: Vec<(String, TokenRange)>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub ontology: Ontology,
    pub train: DocumentSet,
    pub eval: DocumentSet,
    /// Planted events by `(doc_id, sentence)`, for both corpora.
    pub gold: BTreeMap<(String, usize), Vec<GoldMention>>,
    /// Gold tuples for the evaluation corpus.
    pub key: Vec<ResponseTuple>,
    /// What a teacher would brainstorm for each type.
    pub brainstorm: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub seed: u64,
    pub train_docs: usize,
    pub eval_docs: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 7,
            train_docs: 200,
            eval_docs: 60,
        }
    }
}

pub const ONTOLOGY_TEXT: &str = "Conflict.Demonstrate: Entity Place\nJustice.Arrest: Agent Person Place\n";

/// Training settings used for fixture learning curves.
pub const FIXTURE_TRAINING: TrainConfig = TrainConfig {
    l2_lambda: 1e-4,
    learning_rate: 4.0,
    epochs: 2000,
    tolerance: 1e-6,
};

/// `FIXTURE_TRAINING` as a config file.
pub fn fixture_config_text() -> String {
    let t = FIXTURE_TRAINING;
    format!(
        "[training]\nl2_lambda = {:?}\nlearning_rate = {:?}\nepochs = {}\ntolerance = {:?}\n",
        t.l2_lambda, t.learning_rate, t.epochs, t.tolerance
    )
}

type Planted = (String, Vec<usize>, Vec<(String, usize)>);

/// Tokens plus the planted events of one sentence, with token indices local
/// to the sentence.
struct Sentence {
    tokens: Vec<String>,
    events: Vec<Planted>,
}

fn pick<'a>(rng: &mut ChaCha8Rng, list: &[&'a str]) -> &'a str {
    list.choose(rng).expect("non-empty list")
}

fn words(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn plain(items: &[&str]) -> Sentence {
    Sentence {
        tokens: words(items),
        events: Vec::new(),
    }
}

fn demonstrate(rng: &mut ChaCha8Rng) -> Sentence {
    let g = pick(rng, GROUPS);
    let p = pick(rng, PLACES);
    let (mut tokens, anchors, place) = match rng.gen_range(0..5) {
        0 => (words(&[g, "protested", "in", p, "."]), vec![1], 3),
        1 => (words(&[g, "marched", "in", p, "."]), vec![1], 3),
        2 => (words(&[g, "rallied", "in", p, "."]), vec![1], 3),
        3 => (words(&[g, "marched", "and", "rallied", "in", p, "."]), vec![1, 3], 5),
        _ => (words(&[g, "protested", "outside", "the", "parliament", "in", p, "."]), vec![1], 6),
    };
    let mut offset = 0;
    if rng.gen_bool(0.25) {
        let prefix = words(&["On", pick(rng, DAYS), ","]);
        offset = prefix.len();
        tokens.splice(0..0, prefix);
    }
    Sentence {
        tokens,
        events: vec![(
            DEMONSTRATE.to_string(),
            anchors.iter().map(|a| a + offset).collect(),
            vec![("Entity".to_string(), offset), ("Place".to_string(), place + offset)],
        )],
    }
}

fn arrest(rng: &mut ChaCha8Rng) -> Sentence {
    let a = pick(rng, AGENTS);
    let who = pick(rng, PEOPLE);
    let p = pick(rng, PLACES);
    let (mut tokens, anchors, person, place) = match rng.gen_range(0..3) {
        0 => (words(&[a, "arrested", who, "in", p, "."]), vec![1], 2, 4),
        1 => (words(&[a, "detained", who, "in", p, "."]), vec![1], 2, 4),
        _ => (words(&[a, "arrested", "and", "detained", who, "in", p, "."]), vec![1, 3], 4, 6),
    };
    let mut offset = 0;
    if rng.gen_bool(0.25) {
        let prefix = words(&["On", pick(rng, DAYS), ","]);
        offset = prefix.len();
        tokens.splice(0..0, prefix);
    }
    Sentence {
        tokens,
        events: vec![(
            ARREST.to_string(),
            anchors.iter().map(|x| x + offset).collect(),
            vec![
                ("Agent".to_string(), offset),
                ("Person".to_string(), person + offset),
                ("Place".to_string(), place + offset),
            ],
        )],
    }
}

/// One sentence reporting both an arrest and a demonstration.
fn mixed(rng: &mut ChaCha8Rng) -> Sentence {
    let g = pick(rng, GROUPS);
    let a = pick(rng, AGENTS);
    let who = pick(rng, PEOPLE);
    let p = pick(rng, PLACES);
    let role = |r: &str, i: usize| (r.to_string(), i);
    if rng.gen_bool(0.5) {
        let verb = if rng.gen_bool(0.5) { "arrested" } else { "detained" };
        let protest = if rng.gen_bool(0.5) { "protested" } else { "marched" };
        Sentence {
            tokens: words(&[a, verb, who, "in", p, "as", g, protest, "nearby", "."]),
            events: vec![
                (ARREST.to_string(), vec![1], vec![role("Agent", 0), role("Person", 2), role("Place", 4)]),
                (DEMONSTRATE.to_string(), vec![7], vec![role("Entity", 6)]),
            ],
        }
    } else {
        let protest = if rng.gen_bool(0.5) { "rallied" } else { "marched" };
        let verb = if rng.gen_bool(0.5) { "arrested" } else { "detained" };
        Sentence {
            tokens: words(&[g, protest, "in", p, "until", a, verb, who, "."]),
            events: vec![
                (DEMONSTRATE.to_string(), vec![1], vec![role("Entity", 0), role("Place", 3)]),
                (ARREST.to_string(), vec![6], vec![role("Agent", 5), role("Person", 7)]),
            ],
        }
    }
}

/// A filler sentence that mentions `protest` or `arrest` without reporting
/// an event.
fn confuser(rng: &mut ChaCha8Rng) -> Sentence {
    let p = pick(rng, PLACES);
    let who = pick(rng, PEOPLE);
    let day = pick(rng, DAYS);
    let noun = if rng.gen_bool(0.5) { "protest" } else { "arrest" };
    match rng.gen_range(0..5) {
        0 => plain(&["Officials", "met", "in", p, "to", "discuss", "the", noun, "."]),
        1 => plain(&["The", "weather", "in", p, "was", "mild", "during", "the", noun, "."]),
        2 => plain(&["Markets", "rose", "slightly", "on", day, "after", "the", noun, "report", "."]),
        3 => plain(&[who, "visited", p, "after", "the", noun, "warrant", "was", "signed", "."]),
        _ => plain(&["Critics", "said", "the", noun, "song", "was", "popular", "last", "week", "."]),
    }
}

fn filler(rng: &mut ChaCha8Rng) -> Sentence {
    let p = pick(rng, PLACES);
    let who = pick(rng, PEOPLE);
    let day = pick(rng, DAYS);
    match rng.gen_range(0..5) {
        0 => plain(&["Officials", "met", "in", p, "to", "discuss", "trade", "."]),
        1 => plain(&["The", "weather", "in", p, "was", "mild", "."]),
        2 => plain(&["Markets", "rose", "slightly", "on", day, "."]),
        3 => plain(&[who, "visited", p, "last", "week", "."]),
        _ => plain(&["Critics", "said", "the", "song", "was", "popular", "."]),
    }
}

fn document(rng: &mut ChaCha8Rng, doc_id: String, gold: &mut BTreeMap<(String, usize), Vec<GoldMention>>) -> Document {
    let n = rng.gen_range(3..=6);
    let mut text = String::new();
    let mut token_base = 0;
    for s in 0..n {
        let sentence = match rng.gen_range(0..20) {
            0..=4 => demonstrate(rng),
            5..=9 => arrest(rng),
            10..=11 => mixed(rng),
            12..=15 => confuser(rng),
            _ => filler(rng),
        };
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(&sentence.tokens.join(" "));
        let at = |i: usize| TokenRange::new(token_base + i, token_base + i + 1);
        let planted: Vec<GoldMention> = sentence
            .events
            .into_iter()
            .map(|(event_type, anchors, args)| GoldMention {
                event_type,
                anchors: anchors.into_iter().map(at).collect(),
                arguments: args.into_iter().map(|(r, i)| (r, at(i))).collect(),
            })
            .collect();
        if !planted.is_empty() {
            gold.insert((doc_id.clone(), s), planted);
        }
        token_base += sentence.tokens.len();
    }
    Document::new(doc_id, text)
}

impl Fixture {
    pub fn generate(spec: FixtureSpec) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut gold = BTreeMap::new();
        let mut train = DocumentSet::new();
        for i in 0..spec.train_docs {
            let doc = document(&mut rng, format!("train-{i:04}"), &mut gold);
            train.push(doc).expect("unique ids");
        }
        let mut eval = DocumentSet::new();
        for i in 0..spec.eval_docs {
            let doc = document(&mut rng, format!("eval-{i:04}"), &mut gold);
            eval.push(doc).expect("unique ids");
        }
        let key = key_tuples(&eval, &gold);
        let brainstorm = [
            (DEMONSTRATE.to_string(), words(&["protested", "protest", "marched"])),
            (ARREST.to_string(), words(&["arrested", "arrest"])),
        ]
        .into_iter()
        .collect();
        Fixture {
            ontology: Ontology::parse(ONTOLOGY_TEXT).expect("valid ontology"),
            train,
            eval,
            gold,
            key,
            brainstorm,
        }
    }

    /// Planted events of one sentence.
    pub fn gold_for(&self, doc_id: &str, sentence: usize) -> &[GoldMention] {
        self.gold.get(&(doc_id.to_string(), sentence)).map_or(&[], Vec::as_slice)
    }

    /// Gold mentions per type in the training corpus.
    pub fn train_mention_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for ((doc_id, _), planted) in &self.gold {
            if self.train.get(doc_id).is_some() {
                for g in planted {
                    *counts.entry(g.event_type.clone()).or_default() += 1;
                }
            }
        }
        counts
    }
}

/// Gold tuples of every planted event in `docs`.
pub fn key_tuples(docs: &DocumentSet, gold: &BTreeMap<(String, usize), Vec<GoldMention>>) -> Vec<ResponseTuple> {
    let mut out = BTreeSet::new();
    for ((doc_id, _), g) in gold.iter().flat_map(|(k, v)| v.iter().map(move |g| (k, g))) {
        let Some(doc) = docs.get(doc_id) else { continue };
        for (role, range) in &g.arguments {
            let (s, e) = range.char_span(doc);
            out.insert(ResponseTuple {
                doc_id: doc_id.clone(),
                event_type: g.event_type.clone(),
                role: role.clone(),
                entity: doc.slice(s, e).to_lowercase(),
                realis: Realis::Actual,
            });
        }
    }
    out.into_iter().collect()
}

// ---- the desk a teacher works at ----

/// The service operations a teacher uses, independent of transport.
pub trait Desk {
    fn create_session(&mut self, req: CreateSession) -> Result<StateView, ApiError>;
    fn brainstorm(&mut self, session_id: &str, req: Brainstorm) -> Result<StateView, ApiError>;
    fn next_indicator(&mut self, session_id: &str) -> Result<NextIndicator, ApiError>;
    fn search(&mut self, params: &SearchParams) -> Result<SearchResults, ApiError>;
    fn document(&mut self, doc_id: &str) -> Result<DocView, ApiError>;
    fn decide(&mut self, session_id: &str, req: DecisionRequest) -> Result<Accepted, ApiError>;
    fn annotate(&mut self, req: AnnotationRequest) -> Result<Accepted, ApiError>;
    fn promote(&mut self, session_id: &str, req: Promote) -> Result<Promoted, ApiError>;
    fn commit(&mut self, session_id: &str) -> Result<Committed, ApiError>;
    fn abandon(&mut self, session_id: &str, req: Abandon) -> Result<StateView, ApiError>;
    fn done(&mut self, session_id: &str) -> Result<StateView, ApiError>;
    fn state(&mut self, session_id: &str) -> Result<StateView, ApiError>;
    /// Lets `secs` of wall-clock time pass.
    fn wait(&mut self, secs: f64);
}

/// Calls the application state directly, with a manual clock.
pub struct LocalDesk {
    pub app: Arc<AppState>,
    pub clock: Arc<ManualClock>,
}

impl Desk for LocalDesk {
    fn create_session(&mut self, req: CreateSession) -> Result<StateView, ApiError> {
        self.app.create_session(req)
    }
    fn brainstorm(&mut self, session_id: &str, req: Brainstorm) -> Result<StateView, ApiError> {
        self.app.brainstorm(session_id, req)
    }
    fn next_indicator(&mut self, session_id: &str) -> Result<NextIndicator, ApiError> {
        self.app.next_indicator(session_id)
    }
    fn search(&mut self, params: &SearchParams) -> Result<SearchResults, ApiError> {
        self.app.search(params)
    }
    fn document(&mut self, doc_id: &str) -> Result<DocView, ApiError> {
        self.app.document(doc_id)
    }
    fn decide(&mut self, session_id: &str, req: DecisionRequest) -> Result<Accepted, ApiError> {
        self.app.decide(session_id, req)
    }
    fn annotate(&mut self, req: AnnotationRequest) -> Result<Accepted, ApiError> {
        self.app.annotate(req)
    }
    fn promote(&mut self, session_id: &str, req: Promote) -> Result<Promoted, ApiError> {
        self.app.promote(session_id, req)
    }
    fn commit(&mut self, session_id: &str) -> Result<Committed, ApiError> {
        self.app.commit(session_id)
    }
    fn abandon(&mut self, session_id: &str, req: Abandon) -> Result<StateView, ApiError> {
        self.app.abandon(session_id, req)
    }
    fn done(&mut self, session_id: &str) -> Result<StateView, ApiError> {
        self.app.done(session_id)
    }
    fn state(&mut self, session_id: &str) -> Result<StateView, ApiError> {
        self.app.state(session_id)
    }
    fn wait(&mut self, secs: f64) {
        self.clock.advance(secs);
    }
}

// ---- the scripted teacher ----

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherSpec {
    pub seed: u64,
    pub search_limit: usize,
    /// Seconds of effective time after which the teacher stops.
    pub budget_secs: f64,
    /// Every n-th visit is skipped as unclear (0 disables).
    pub skip_every: usize,
    pub long_break_probability: f64,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        TeacherSpec {
            seed: 11,
            search_limit: 50,
            budget_secs: curated_core::workflow::SESSION_BUDGET_SECS,
            skip_every: 17,
            long_break_probability: 0.03,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TeacherReport {
    pub session_id: String,
    pub visits: usize,
    pub event_present: usize,
    pub negative: usize,
    pub skipped: usize,
    pub promoted: Vec<String>,
    pub abandoned: usize,
}

struct Teacher<'a, D: Desk> {
    desk: &'a mut D,
    fixture: &'a Fixture,
    rng: ChaCha8Rng,
    spec: TeacherSpec,
    session: String,
    next_id: usize,
    docs: BTreeMap<String, DocView>,
    seen: BTreeSet<(String, usize)>,
}

impl<D: Desk> Teacher<'_, D> {
    fn pause(&mut self) {
        let mut secs = self.rng.gen_range(3.0..25.0);
        if self.rng.gen_bool(self.spec.long_break_probability) {
            secs += self.rng.gen_range(300.0..900.0);
        }
        self.desk.wait(secs);
    }

    fn record_id(&mut self) -> String {
        self.next_id += 1;
        format!("{}-r{:04}", self.session, self.next_id)
    }

    fn doc(&mut self, doc_id: &str) -> Result<DocView, ApiError> {
        if let Some(d) = self.docs.get(doc_id) {
            return Ok(d.clone());
        }
        let d = self.desk.document(doc_id)?;
        self.docs.insert(doc_id.to_string(), d.clone());
        Ok(d)
    }

    /// First unvisited sentence among the hits that contains `phrase`.
    fn find_sentence(&mut self, hits: &[String], phrase: &[String]) -> Result<Option<(String, usize)>, ApiError> {
        for doc_id in hits {
            let doc = self.doc(doc_id)?;
            let chars: Vec<char> = doc.text.chars().collect();
            for (i, s) in doc.sentences.iter().enumerate() {
                if self.seen.contains(&(doc_id.clone(), i)) {
                    continue;
                }
                let words: Vec<String> = doc.tokens[s.span.first_token..s.span.last_token]
                    .iter()
                    .map(|t| chars[t.start..t.end].iter().collect::<String>().to_lowercase())
                    .collect();
                if words.windows(phrase.len()).any(|w| w == phrase) {
                    return Ok(Some((doc_id.clone(), i)));
                }
            }
        }
        Ok(None)
    }

    fn span_request(&mut self, doc: &DocView, kind: RecordKind, range: TokenRange, role: Option<String>) -> AnnotationRequest {
        AnnotationRequest {
            session_id: self.session.clone(),
            record_id: self.record_id(),
            doc_id: doc.doc_id.clone(),
            kind,
            start: doc.tokens[range.start].start,
            end: doc.tokens[range.end - 1].end,
            role,
            client_timestamp: None,
        }
    }

    fn visit(&mut self, doc_id: &str, sentence: usize, event_type: &str, report: &mut TeacherReport) -> Result<(), ApiError> {
        self.seen.insert((doc_id.to_string(), sentence));
        report.visits += 1;
        self.pause();
        let planted: Vec<GoldMention> = self
            .fixture
            .gold_for(doc_id, sentence)
            .iter()
            .filter(|g| g.event_type == event_type)
            .cloned()
            .collect();
        let record_id = self.record_id();
        let unclear = self.spec.skip_every > 0 && report.visits.is_multiple_of(self.spec.skip_every);
        let (decision, skip_reason) = match (planted.len(), unclear) {
            (_, true) => (DecisionKind::Skip, Some(SkipReason::Unclear)),
            (0, false) => (DecisionKind::Negative, None),
            (1, false) => (DecisionKind::EventPresent, None),
            (_, false) => (DecisionKind::Skip, Some(SkipReason::MultipleInstances)),
        };
        let gold = planted.into_iter().next();
        self.desk.decide(
            &self.session.clone(),
            DecisionRequest {
                record_id,
                doc_id: doc_id.to_string(),
                sentence,
                decision,
                skip_reason,
                client_timestamp: None,
            },
        )?;
        match decision {
            DecisionKind::Skip => report.skipped += 1,
            DecisionKind::Negative => report.negative += 1,
            DecisionKind::EventPresent => report.event_present += 1,
        }
        if let (DecisionKind::EventPresent, Some(g)) = (decision, gold) {
            let doc = self.doc(doc_id)?;
            for anchor in &g.anchors {
                self.pause();
                let req = self.span_request(&doc, RecordKind::Anchor, *anchor, None);
                self.desk.annotate(req)?;
            }
            for (role, range) in &g.arguments {
                self.pause();
                let req = self.span_request(&doc, RecordKind::Argument, *range, Some(role.clone()));
                self.desk.annotate(req)?;
            }
            for anchor in &g.anchors {
                let chars: Vec<char> = doc.text.chars().collect();
                let (s, e) = (doc.tokens[anchor.start].start, doc.tokens[anchor.end - 1].end);
                let phrase: String = chars[s..e].iter().collect();
                let promoted = self.desk.promote(&self.session.clone(), Promote { phrase: phrase.clone() })?;
                if promoted.added {
                    report.promoted.push(phrase);
                }
            }
            self.pause();
        }
        self.desk.commit(&self.session.clone())?;
        Ok(())
    }
}

/// Runs one full session for `event_type`: brainstorm, then serve, search,
/// classify and annotate until the indicators or the time budget run out.
pub fn run_teacher<D: Desk>(
    desk: &mut D,
    fixture: &Fixture,
    teacher_id: &str,
    event_type: &str,
    spec: TeacherSpec,
) -> Result<TeacherReport, ApiError> {
    let opened = desk.create_session(CreateSession {
        teacher_id: teacher_id.to_string(),
        event_type: event_type.to_string(),
        session_id: None,
    })?;
    let session = opened.session_id.clone();
    let mut t = Teacher {
        desk,
        fixture,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        spec,
        session: session.clone(),
        next_id: 0,
        docs: BTreeMap::new(),
        seen: BTreeSet::new(),
    };
    let mut report = TeacherReport {
        session_id: session.clone(),
        ..TeacherReport::default()
    };
    let phrases = fixture.brainstorm.get(event_type).cloned().unwrap_or_default();
    t.pause();
    t.desk.brainstorm(&session, Brainstorm { phrases })?;
    loop {
        let next = t.desk.next_indicator(&session)?;
        let Some(indicator) = next.indicator else { break };
        if next.should_stop || next.elapsed_secs >= spec.budget_secs {
            break;
        }
        t.pause();
        let hits = t.desk.search(&SearchParams {
            q: indicator.phrase.join(" "),
            limit: Some(spec.search_limit),
            session: Some(session.clone()),
        })?;
        match t.find_sentence(&hits.doc_ids, &phrase_tokens(&indicator.phrase.join(" ")))? {
            Some((doc_id, sentence)) => t.visit(&doc_id, sentence, event_type, &mut report)?,
            None => {
                t.desk.abandon(&session, Abandon { priority: indicator.priority })?;
                report.abandoned += 1;
            }
        }
    }
    t.pause();
    t.desk.done(&session)?;
    Ok(report)
}

/// One session per event type of the fixture, teacher `i` seeded with
/// `seed + i`.
pub fn run_teachers<D: Desk>(desk: &mut D, fixture: &Fixture, seed: u64) -> Result<Vec<TeacherReport>, ApiError> {
    let mut reports = Vec::new();
    for (i, event_type) in fixture.ontology.event_types().enumerate() {
        let spec = TeacherSpec {
            seed: seed.wrapping_add(i as u64),
            ..TeacherSpec::default()
        };
        reports.push(run_teacher(desk, fixture, &format!("teacher-{i}"), event_type, spec)?);
    }
    Ok(reports)
}
