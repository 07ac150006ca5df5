use std::collections::BTreeMap;

use curated_core::learning::{train, EntitySpans, ModelSet, TrainExample};
use curated_core::pipeline::{extract, ExtractConfig};
use curated_core::projection::project_records;
use curated_core::scoring::{neutralize, score};
use curated_core::{
    AnnotationRecord, Document, DocumentSet, FeatureVector, InvertedIndex, LinearModel, ModelKind, Ontology,
    PhraseQuery, Realis, RecordKind, ResponseTuple, ScoreOptions, TrainConfig,
};
use proptest::prelude::*;

const WORDS: [&str; 8] = ["protest", "Protest", "police", "the", "rally", "Paris", "in", "."];

fn corpus() -> impl Strategy<Value = DocumentSet> {
    prop::collection::vec(prop::collection::vec(prop::sample::select(&WORDS[..]), 1..25), 1..30).prop_map(|docs| {
        let mut set = DocumentSet::new();
        for (i, words) in docs.iter().enumerate() {
            set.push(Document::new(format!("doc{i:02}"), words.join(" "))).unwrap();
        }
        set
    })
}

fn tuples() -> impl Strategy<Value = Vec<ResponseTuple>> {
    let realis = prop_oneof![Just(Realis::Actual), Just(Realis::Generic), Just(Realis::Other)];
    let tuple = (prop::sample::select(vec!["Life.Die", "Conflict.Attack"]), prop::sample::select(vec!["a", "b", "c"]), realis)
        .prop_map(|(t, e, m)| ResponseTuple {
            doc_id: "d".into(),
            event_type: t.into(),
            role: "Place".into(),
            entity: e.into(),
            realis: m,
        });
    prop::collection::vec(tuple, 0..8)
}

proptest! {
    #[test]
    fn limit_truncation_is_a_prefix(docs in corpus(), words in prop::collection::vec(prop::sample::select(&WORDS[..]), 1..3), k in 1usize..10) {
        let index = InvertedIndex::build(&docs);
        let phrase: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
        let all = index.query_phrase(&PhraseQuery::new(phrase.clone(), usize::MAX).unwrap());
        let some = index.query_phrase(&PhraseQuery::new(phrase, k).unwrap());
        prop_assert_eq!(&some[..], &all[..k.min(all.len())]);
    }

    #[test]
    fn postings_are_sorted_and_reference_documents(docs in corpus()) {
        let index = InvertedIndex::build(&docs);
        for word in WORDS {
            let postings: Vec<(&str, usize)> = index.postings(&word.to_lowercase()).collect();
            prop_assert!(postings.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(postings.iter().all(|(d, _)| docs.get(d).is_some()));
        }
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall(system in tuples(), key in tuples()) {
        let a = score(&system, &key, &ScoreOptions::default()).overall;
        let b = score(&key, &system, &ScoreOptions::default()).overall;
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert_eq!(a.f1, b.f1);
    }

    #[test]
    fn realis_neutralization_keeps_every_strict_match(system in tuples(), key in tuples()) {
        let options = ScoreOptions::realis_neutralized();
        let strict: Vec<&ResponseTuple> = system.iter().filter(|t| key.contains(t)).collect();
        let (sys, k) = (neutralize(&system, &options), neutralize(&key, &options));
        for t in neutralize(strict, &options) {
            prop_assert!(sys.contains(&t) && k.contains(&t));
        }
        let loose = score(&system, &key, &options).overall.tp;
        prop_assert_eq!(loose, sys.intersection(&k).count());
    }

    #[test]
    fn duplicates_do_not_change_scores(system in tuples(), key in tuples()) {
        let doubled: Vec<ResponseTuple> = system.iter().chain(system.iter()).cloned().collect();
        let a = score(&system, &key, &ScoreOptions::default());
        let b = score(&doubled, &key, &ScoreOptions::default());
        prop_assert_eq!(a.overall, b.overall);
    }

    #[test]
    fn predict_ignores_feature_order(pairs in prop::collection::btree_map("[a-e]", -3.0f64..3.0, 0..5), seed in any::<u64>()) {
        let pairs: Vec<(String, f64)> = pairs.into_iter().collect();
        let model = LinearModel {
            kind: ModelKind::Argument,
            bias: 0.3,
            weights: ["a", "b", "c", "d"].iter().map(|k| (k.to_string(), 0.7)).collect(),
        };
        let mut forward = FeatureVector::new();
        for (k, v) in &pairs {
            forward.insert(k.clone(), *v);
        }
        let mut shuffled = pairs.clone();
        let n = shuffled.len().max(1);
        shuffled.rotate_left(seed as usize % n);
        let mut other = FeatureVector::new();
        for (k, v) in &shuffled {
            other.insert(k.clone(), *v);
        }
        prop_assert_eq!(model.predict(&forward), model.predict(&other));
    }

    #[test]
    fn regularized_weights_stay_finite_on_separable_data(n in 2usize..20) {
        let examples: Vec<TrainExample> = (0..n)
            .map(|i| {
                let mut f = FeatureVector::new();
                f.set(if i % 2 == 0 { "pos" } else { "neg" });
                TrainExample::new(f, i % 2 == 0)
            })
            .collect();
        let config = TrainConfig { learning_rate: 5.0, epochs: 2000, tolerance: 0.0, ..TrainConfig::default() };
        let (model, _) = train(&examples, ModelKind::Argument, &config).unwrap();
        prop_assert!(model.bias.is_finite());
        prop_assert!(model.weights.values().all(|w| w.is_finite() && w.abs() < 1e3));
    }

    #[test]
    fn projection_counts_are_bounded(offsets in prop::collection::vec((0usize..40, 1usize..6, 0u8..3), 1..8)) {
        let text = "Students protested in Paris . Police arrested Smith in Lyon .";
        let mut docs = DocumentSet::new();
        docs.push(Document::new("d", text)).unwrap();
        let mut records = vec![
            record("e0", RecordKind::EventPresent, 0, 29, None),
            record("e1", RecordKind::EventPresent, 30, 61, None),
        ];
        for (i, (start, len, kind)) in offsets.iter().enumerate() {
            let (kind, role) = match kind {
                0 => (RecordKind::Anchor, None),
                _ => (RecordKind::Argument, Some("Place")),
            };
            let end = (start + len).min(text.chars().count());
            if *start < end {
                records.push(record(&format!("r{i}"), kind, *start, end, role));
            }
        }
        let refs: Vec<&AnnotationRecord> = records.iter().collect();
        let p = project_records(&docs, &refs).unwrap();
        let anchors = records.iter().filter(|r| r.kind == RecordKind::Anchor).count();
        prop_assert!(p.report.is_consistent());
        prop_assert!(p.report.mentions_built <= anchors);
        prop_assert!(p.mentions.len() >= p.argument_mentions().count());
        for m in &p.mentions {
            prop_assert!(m.provenance.iter().all(|id| records.iter().any(|r| &r.record_id == id)));
        }
    }

    #[test]
    fn extracted_tuples_trace_to_confident_triggers(bias in -5.0f64..2.0, arg_bias in -3.0f64..3.0, threshold in 0.0f64..0.9) {
        let doc = Document::new("d", "Police arrested Smith in Lyon on Monday .");
        let ontology = Ontology::new().with_type("Justice.Arrest", ["Agent", "Person", "Place"]);
        let mut trigger = LinearModel::zero(ModelKind::Trigger("Justice.Arrest".into()));
        trigger.bias = bias;
        trigger.weights.insert("w0=arrested".into(), 4.0);
        let mut argument = LinearModel::zero(ModelKind::Argument);
        argument.bias = arg_bias;
        let models = ModelSet {
            triggers: BTreeMap::from([("Justice.Arrest".to_string(), trigger.clone())]),
            argument: Some(argument),
            genericity: None,
        };
        let config = ExtractConfig { trigger_threshold: threshold, argument_threshold: threshold, rules: Vec::new() };
        let tuples = extract(&doc, &models, &ontology, &EntitySpans::new(), &config).unwrap();
        for (t, j) in &tuples {
            prop_assert!(j.trigger_probability >= threshold);
            prop_assert!(j.argument_probability >= threshold);
            prop_assert!(ontology.has_role(&t.event_type, &t.role));
        }
    }
}

fn record(id: &str, kind: RecordKind, start: usize, end: usize, role: Option<&str>) -> AnnotationRecord {
    AnnotationRecord {
        record_id: id.into(),
        session_id: "s".into(),
        teacher_id: "t".into(),
        event_type: "Justice.Arrest".into(),
        doc_id: "d".into(),
        kind,
        start,
        end,
        role: role.map(str::to_string),
        timestamp: 0.0,
    }
}

#[test]
fn realis_neutralization_can_merge_matches() {
    let t = |m| ResponseTuple {
        doc_id: "d".into(),
        event_type: "Conflict.Attack".into(),
        role: "Place".into(),
        entity: "b".into(),
        realis: m,
    };
    let both = [t(Realis::Actual), t(Realis::Other)];
    assert_eq!(score(&both, &both, &ScoreOptions::default()).overall.tp, 2);
    let merged = score(&both, &both, &ScoreOptions::realis_neutralized()).overall;
    assert_eq!((merged.tp, merged.f1), (1, 1.0));
}
