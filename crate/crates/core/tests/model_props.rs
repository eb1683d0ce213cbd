use std::collections::BTreeMap;

use driftqa_core::llm::tasks::{parse_fact_line, parse_fact_lines, parse_quadruple};
use driftqa_core::llm::{TaskId, TemplateSet};
use driftqa_core::model::{parse_benchmark, parse_benchmark_bytes, serialize_benchmark};
use driftqa_core::{normalize_key, TemporalFact};
use proptest::prelude::*;
use serde_json::Value;

const SAMPLE: &str = include_str!("fixtures/appendix_sample.json");

#[test]
fn appendix_sample_round_trips_structurally() {
    let events = parse_benchmark(SAMPLE).unwrap();
    assert_eq!(events[0].event_id, 6);
    let inc = &events[0].incidents["2010"];
    assert_eq!(inc.answer[0].name, "Tottenham Hotspur F.C.");
    assert_eq!(inc.answer[0].wikidata_id, "Q18741");
    assert!(inc.dump.body_par.starts_with("Luka Modrić"));

    let written = serialize_benchmark(&events).unwrap();
    assert_eq!(parse_benchmark(&written).unwrap(), events);
    let original: Value = serde_json::from_str(SAMPLE).unwrap();
    let rewritten: Value = serde_json::from_str(&written).unwrap();
    assert_eq!(rewritten, Value::Array(vec![original]));
    assert_eq!(
        serialize_benchmark(&parse_benchmark(&written).unwrap()).unwrap(),
        written
    );
}

#[test]
fn unknown_keys_survive_round_trip() {
    let text = SAMPLE.replacen("\"event_id\": 6,", "\"event_id\": 6, \"future\": {\"k\": [1, 2]},", 1);
    let events = parse_benchmark(&text).unwrap();
    let written = serialize_benchmark(&events).unwrap();
    let v: Value = serde_json::from_str(&written).unwrap();
    assert_eq!(v[0]["future"]["k"][1], 2);
}

#[derive(Debug, Clone)]
enum Mutation {
    Flip(usize, u8),
    Insert(usize, u8),
    Delete(usize),
    Truncate(usize),
    Splice(usize, &'static str),
}

fn mutation() -> impl Strategy<Value = Mutation> {
    let tokens = prop::sample::select(vec![
        "{", "}", "[", "]", "\"", ":", ",", "null", "-1", "1e999", "\"2010\"", "\\u0000", "\u{FFFF}",
    ]);
    prop_oneof![
        (any::<usize>(), any::<u8>()).prop_map(|(i, b)| Mutation::Flip(i, b)),
        (any::<usize>(), any::<u8>()).prop_map(|(i, b)| Mutation::Insert(i, b)),
        any::<usize>().prop_map(Mutation::Delete),
        any::<usize>().prop_map(Mutation::Truncate),
        (any::<usize>(), tokens).prop_map(|(i, t)| Mutation::Splice(i, t)),
    ]
}

fn apply(bytes: &mut Vec<u8>, m: &Mutation) {
    let n = bytes.len().max(1);
    match *m {
        Mutation::Flip(i, b) => {
            if !bytes.is_empty() {
                bytes[i % n] ^= b;
            }
        }
        Mutation::Insert(i, b) => bytes.insert(i % (bytes.len() + 1), b),
        Mutation::Delete(i) => {
            if !bytes.is_empty() {
                bytes.remove(i % n);
            }
        }
        Mutation::Truncate(i) => bytes.truncate(i % n),
        Mutation::Splice(i, t) => {
            let at = i % (bytes.len() + 1);
            bytes.splice(at..at, t.bytes());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mutated_samples_never_panic(ms in prop::collection::vec(mutation(), 1..6)) {
        let mut bytes = SAMPLE.as_bytes().to_vec();
        for m in &ms {
            apply(&mut bytes, m);
        }
        if let Ok(events) = parse_benchmark_bytes(&bytes) {
            if let Ok(text) = serialize_benchmark(&events) {
                prop_assert_eq!(parse_benchmark(&text).unwrap(), events);
            }
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = parse_benchmark_bytes(&bytes);
    }

    #[test]
    fn normalize_key_is_idempotent(s in "\\PC*") {
        let once = normalize_key(&s);
        prop_assert_eq!(normalize_key(&once), once);
    }

    #[test]
    fn reply_parsers_are_total(s in "[ -~|\\n]{0,200}|\\PC{0,80}") {
        let _ = parse_quadruple(&s);
        let _ = parse_fact_line(&s);
        let e = parse_fact_lines(&s);
        prop_assert!(e.facts.len() + e.skipped_lines <= s.lines().count().max(1));
    }

    #[test]
    fn fact_lines_round_trip(
        s in "[A-Za-z][A-Za-z .'-]{0,20}",
        r in "[a-z][a-z ]{0,15}",
        o in "[A-Za-zé0-9][A-Za-zé0-9 .,&'-]{0,30}",
        start in prop::option::of(1900i32..2100),
        len in prop::option::of(0i32..50),
    ) {
        let end = start.zip(len).map(|(a, l)| a + l).or(if start.is_none() { len.map(|l| 1950 + l) } else { None });
        let fact = TemporalFact::new(&s, &r, &o, start, end).unwrap();
        let parsed = parse_fact_line(&fact.to_line()).expect("expressible fact parses");
        prop_assert!(parsed.content_eq(&fact), "{} vs {}", parsed.to_line(), fact.to_line());
    }

    #[test]
    fn rendering_is_pure_and_single_pass(values in prop::collection::vec("\\PC{0,40}|\\{\\{[a-z]+\\}\\}", 4)) {
        let templates = TemplateSet::default();
        let names = ["question", "subject", "document", "facts"];
        let bindings: BTreeMap<String, String> = names.iter().map(|n| n.to_string()).zip(values.iter().cloned()).collect();
        for task in [TaskId::QuestionToQuadruple, TaskId::ExtractFacts, TaskId::FormulateAnswer] {
            let a = templates.render(task, &bindings).unwrap();
            let b = templates.render(task, &bindings).unwrap();
            prop_assert_eq!(&a, &b);
            let user = a.last_user();
            for name in templates.get(task).placeholders() {
                prop_assert!(user.contains(&bindings[&name]) || a.messages.iter().any(|m| m.content.contains(&bindings[&name])));
            }
        }
    }
}

#[test]
fn quadruple_reply_examples() {
    let (q, all) = parse_quadruple("LeBron James | play for | ? | 2010").unwrap();
    assert_eq!(
        (q.subject.as_str(), q.relation.as_str(), q.q_year, all),
        ("lebron james", "play for", Some(2010), false)
    );
    let (q, all) = parse_quadruple("Luka Modrić | play for | ? | ALL").unwrap();
    assert_eq!((q.q_year, all), (None, true));
    assert!(parse_quadruple("no pipes here").is_err());
}

#[test]
fn open_range_fact_line() {
    let f = parse_fact_line("Luka Modrić | play for | Tottenham Hotspur | 2008 | -").unwrap();
    assert_eq!((f.start_year(), f.end_year()), (Some(2008), None));
    assert_eq!(f.object(), "Tottenham Hotspur");
}
