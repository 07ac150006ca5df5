use std::collections::BTreeMap;

use curated::formats::{
    corpus_jsonl, log_line, model_text, parse_corpus, parse_log, parse_models, parse_tuples, tuples_tsv_with_offsets,
    LogWriter,
};
use curated_core::annotation::IndicatorOrigin;
use curated_core::{AnnotationRecord, Document, DocumentSet, LinearModel, LogEvent, ModelKind, Realis, RecordKind, ResponseTuple};
use proptest::prelude::*;

fn realis() -> impl Strategy<Value = Realis> {
    prop_oneof![Just(Realis::Actual), Just(Realis::Generic), Just(Realis::Other), Just(Realis::Neutralized)]
}

fn tuple() -> impl Strategy<Value = ResponseTuple> {
    ("d[0-9]{1,2}", "[A-Z][a-z]{2,6}\\.[A-Z][a-z]{2,6}", "[A-Z][a-z]{2,8}", "[a-zé ]{0,10}[a-z]", realis()).prop_map(
        |(doc_id, event_type, role, entity, realis)| ResponseTuple {
            doc_id,
            event_type,
            role,
            entity,
            realis,
        },
    )
}

fn event() -> impl Strategy<Value = LogEvent> {
    let phrase = prop::collection::vec("[a-zà-ÿ]{1,8}", 1..3);
    let ts = 0.0..1e5f64;
    prop_oneof![
        (phrase.clone(), -50i64..50, any::<bool>(), ts.clone()).prop_map(|(phrase, priority, promoted, timestamp)| {
            LogEvent::IndicatorAdded {
                phrase,
                priority,
                origin: if promoted { IndicatorOrigin::Promoted } else { IndicatorOrigin::Brainstormed },
                timestamp,
            }
        }),
        (phrase, 1usize..100, ts.clone()).prop_map(|(phrase, limit, timestamp)| LogEvent::Searched {
            phrase,
            limit,
            timestamp
        }),
        ("r[0-9]{1,4}", 0usize..500, 0usize..20, prop::option::of("[A-Z][a-z]{1,6}"), ts).prop_map(
            |(record_id, start, len, role, timestamp)| {
                LogEvent::Record(AnnotationRecord {
                    record_id,
                    session_id: "s".into(),
                    teacher_id: "t \"quoted\"".into(),
                    event_type: "Conflict.Attack".into(),
                    doc_id: "d\t1".into(),
                    kind: if role.is_some() { RecordKind::Argument } else { RecordKind::Anchor },
                    start,
                    end: start + len + 1,
                    role,
                    timestamp,
                })
            }
        ),
    ]
}

proptest! {
    #[test]
    fn model_text_round_trips_bit_exactly(
        bias in any::<f64>().prop_filter("finite", |v| v.is_finite()),
        weights in prop::collection::btree_map("[a-z0-9=|_.-]{1,12}", any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..20),
    ) {
        let model = LinearModel { kind: ModelKind::Trigger("Conflict.Attack".into()), bias, weights };
        let parsed = parse_models(&model_text(&model), "m").unwrap();
        prop_assert_eq!(parsed.len(), 1);
        prop_assert_eq!(parsed[0].bias.to_bits(), model.bias.to_bits());
        let bits = |m: &LinearModel| m.weights.iter().map(|(k, v)| (k.clone(), v.to_bits())).collect::<BTreeMap<_, _>>();
        prop_assert_eq!(bits(&parsed[0]), bits(&model));
    }

    #[test]
    fn tuples_round_trip_in_sorted_order(tuples in prop::collection::vec(tuple(), 0..12)) {
        let text = tuples_tsv_with_offsets(tuples.iter().map(|t| (t, None)));
        let parsed = parse_tuples(&text, "t").unwrap();
        let mut expected = tuples.clone();
        expected.sort();
        expected.dedup();
        let mut got = parsed.clone();
        got.dedup();
        prop_assert_eq!(&got, &expected);
        prop_assert!(parsed.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn log_lines_round_trip(events in prop::collection::vec(event(), 0..15)) {
        let text: String = events.iter().map(log_line).collect();
        prop_assert_eq!(text.lines().count(), events.len());
        prop_assert_eq!(parse_log(&text, "log").unwrap(), events);
    }

    #[test]
    fn corpus_round_trips(texts in prop::collection::vec("[A-Za-zé日本 .,\"\\\\]{0,40}", 1..6)) {
        let mut docs = DocumentSet::new();
        for (i, text) in texts.iter().enumerate() {
            docs.push(Document::new(format!("doc-{i}"), text.clone())).unwrap();
        }
        let parsed = parse_corpus(&corpus_jsonl(&docs), "c").unwrap();
        let texts_of = |d: &DocumentSet| d.iter().map(|d| (d.doc_id().to_string(), d.text().to_string())).collect::<Vec<_>>();
        prop_assert_eq!(texts_of(&parsed), texts_of(&docs));
    }
}

#[test]
fn log_writer_appends_and_refuses_to_clobber() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let events = vec![LogEvent::Searched {
        phrase: vec!["protest".into()],
        limit: 10,
        timestamp: 1.5,
    }];
    LogWriter::create(&path).unwrap().append(&events).unwrap();
    assert!(LogWriter::create(&path).is_err());
    LogWriter::open_append(&path).unwrap().append(&events).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(parse_log(&text, "s").unwrap().len(), 2);
    assert!(text.ends_with('\n'));
}

#[test]
fn malformed_lines_report_their_line_number() {
    let good = log_line(&LogEvent::Searched {
        phrase: vec!["a".into()],
        limit: 1,
        timestamp: 0.0,
    });
    let err = parse_log(&format!("{good}{{\"event\":\"nope\"}}\n"), "x.jsonl").unwrap_err();
    assert!(err.to_string().starts_with("x.jsonl:2:"), "{err}");
    let err = parse_tuples("d1\tA.B\tRole\tx\n", "k.tsv").unwrap_err();
    assert!(err.to_string().starts_with("k.tsv:1:"), "{err}");
}
