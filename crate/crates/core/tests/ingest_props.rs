use chrono::NaiveDate;
use driftqa_core::ingest::{
    build_unified_document, clean_document, standardize_characters, strip_structured, surface_answer_check,
    PatternTable, TimestampedArticle,
};
use driftqa_core::{normalize_key, GoldAnswer};
use proptest::prelude::*;

fn markup_piece() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => "[A-Za-z ]{1,20}",
        1 => "[A-Za-z]{1,8}".prop_map(|t| format!("[[{t}]]")),
        1 => ("[A-Za-z]{1,8}", "[A-Za-z ]{1,8}").prop_map(|(a, b)| format!("[[{a}|{b}]]")),
        1 => "[A-Za-z]{1,8}".prop_map(|t| format!("<ref>{t}</ref>")),
        1 => "[a-z]{1,8}".prop_map(|t| format!("https://{t}.org/x")),
        1 => Just("{|\n| a || b\n|-\n| c\n|}".to_string()),
        1 => "[A-Za-z ]{1,10}".prop_map(|t| format!("\n* {t}\n")),
        1 => "[A-Za-z ]{1,10}".prop_map(|t| format!("'''{t}'''")),
        1 => Just("&amp; &nbsp; \\n [1] [citation needed]".to_string()),
        1 => Just("\n".to_string()),
        1 => "[{}|\\[\\]<>'*#]{1,4}",
    ]
}

fn wiki_text() -> impl Strategy<Value = String> {
    prop::collection::vec(markup_piece(), 0..40).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn cleaning_is_idempotent_and_shrinking(t in wiki_text()) {
        let (s1, r1) = strip_structured(&t);
        let (s2, _) = strip_structured(&s1);
        prop_assert_eq!(&s1, &s2);
        prop_assert!(r1.output_chars <= r1.input_chars);

        let (c1, r2) = standardize_characters(&t);
        let (c2, _) = standardize_characters(&c1);
        prop_assert_eq!(&c1, &c2);
        prop_assert!(r2.output_chars <= r2.input_chars);
        prop_assert_eq!(r2.output_chars, c1.chars().count());

        let table = PatternTable::default();
        let (d1, r3) = clean_document(&table, &t);
        let (d2, _) = clean_document(&table, &d1);
        prop_assert_eq!(&d1, &d2);
        prop_assert!(d1.chars().count() <= t.chars().count());
        prop_assert_eq!(r3.input_chars, t.chars().count());
    }

    #[test]
    fn surface_spans_slice_to_an_alias(
        pre in "[a-z ]{0,20}",
        post in "[a-z ]{0,20}",
        name in prop::sample::select(vec!["Tottenham Hotspur F.C.", "Inter Miami CF", "Acme Inc.", "Real Madrid CF"]),
        drop_suffix in any::<bool>(),
        upper in any::<bool>(),
    ) {
        let mut mention = if drop_suffix { name.rsplit_once(' ').unwrap().0.to_string() } else { name.to_string() };
        if upper {
            mention = mention.to_uppercase();
        }
        let doc = format!("{pre} {mention} {post}");
        let gold = [GoldAnswer::new(name, "Q1")];
        let m = surface_answer_check(&doc, &gold);
        prop_assert!(m.found);
        let chars: Vec<char> = doc.chars().collect();
        let full = normalize_key(name);
        let short = normalize_key(name.rsplit_once(' ').unwrap().0);
        for span in &m.spans {
            let slice: String = chars[span.start..span.end].iter().collect();
            let key = normalize_key(&slice);
            prop_assert!(key == full || key == short, "span text {:?}", slice);
        }
    }

    #[test]
    fn unified_document_ignores_input_order(
        items in prop::collection::vec((0u32..400, "[a-z ]{1,30}"), 1..12),
        rotate in 0usize..12,
    ) {
        let mut seen = std::collections::HashSet::new();
        let articles: Vec<TimestampedArticle> = items
            .into_iter()
            .filter(|(d, _)| seen.insert(*d))
            .map(|(d, text)| TimestampedArticle {
                entity: "Entity".into(),
                timestamp: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap() + chrono::Days::new(u64::from(d)),
                text,
            })
            .collect();
        let mut permuted = articles.clone();
        permuted.reverse();
        let k = rotate % permuted.len();
        permuted.rotate_left(k);
        let a = build_unified_document(&articles).unwrap();
        let b = build_unified_document(&permuted).unwrap();
        prop_assert_eq!(a.render(), b.render());
        prop_assert_eq!(a.total_chars(), articles.iter().map(|x| x.text.chars().count()).sum::<usize>());
    }
}

#[test]
fn appendix_answer_found_through_suffix_alias() {
    let doc = "He joined Tottenham Hotspur in 2008.";
    let m = surface_answer_check(doc, &[GoldAnswer::new("Tottenham Hotspur F.C.", "Q18741")]);
    assert!(m.found);
    assert_eq!((m.spans[0].start, m.spans[0].end), (10, 27));
}

#[test]
fn mixed_entities_are_rejected() {
    let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let a = |e: &str| TimestampedArticle {
        entity: e.into(),
        timestamp: d,
        text: "t".into(),
    };
    assert!(build_unified_document(&[a("x"), a("y")]).is_err());
    assert!(build_unified_document(&[]).is_err());
}
