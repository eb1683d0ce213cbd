use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate};
use driftqa_core::model::EvidenceMode;
use driftqa_core::snapshot::{Snapshot, SnapshotError, SnapshotTimeline};
use proptest::prelude::*;

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn timeline_strategy() -> impl Strategy<Value = SnapshotTimeline> {
    prop::collection::btree_set((2000i32..2025, 1u32..=12, 1u32..=28), 1..30).prop_map(|dates: BTreeSet<_>| {
        let snapshots = dates
            .into_iter()
            .map(|(y, m, d)| Snapshot {
                capture_date: date(y, m, d),
                text: format!("page as of {y}-{m:02}-{d:02}"),
            })
            .collect();
        SnapshotTimeline::new("entity", snapshots).unwrap()
    })
}

/// Earliest snapshot captured in `q_year + 1`; failing that, the earliest
/// captured strictly after December 31 of `q_year`.
fn oracle_closest(snaps: &[Snapshot], q_year: i32) -> Option<&Snapshot> {
    let in_next_year = snaps
        .iter()
        .filter(|s| s.capture_date.year() == q_year + 1)
        .min_by_key(|s| s.capture_date);
    in_next_year.or_else(|| {
        let year_end = date(q_year, 12, 31);
        snaps
            .iter()
            .filter(|s| s.capture_date > year_end)
            .min_by_key(|s| s.capture_date)
    })
}

fn oracle_latest(snaps: &[Snapshot]) -> &Snapshot {
    snaps.iter().max_by_key(|s| s.capture_date).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn selectors_agree_with_scans(t in timeline_strategy(), q_year in 1998i32..2027) {
        let snaps = t.snapshots();
        match (t.select_closest(q_year), oracle_closest(snaps, q_year)) {
            (Ok((got, map_year)), Some(want)) => {
                prop_assert_eq!(got, want);
                prop_assert_eq!(map_year, want.capture_date.year());
                prop_assert!(got.capture_date > date(q_year, 12, 31));
                prop_assert!(!snaps.iter().any(|s| s.capture_date > date(q_year, 12, 31) && s.capture_date < got.capture_date));

                let cumulative = t.select_cumulative(q_year).unwrap();
                let want_prefix: Vec<&Snapshot> = snaps.iter().filter(|s| s.capture_date <= want.capture_date).collect();
                prop_assert_eq!(cumulative.texts().len(), want_prefix.len());
                for (a, b) in cumulative.texts().iter().zip(&want_prefix) {
                    prop_assert_eq!(a.date, b.capture_date);
                    prop_assert_eq!(&a.text, &b.text);
                }
                let sum: usize = want_prefix.iter().map(|s| s.text.chars().count()).sum();
                prop_assert_eq!(cumulative.total_chars(), sum);
                prop_assert_eq!(cumulative.mode(), EvidenceMode::Cumulative);
            }
            (Err(SnapshotError::NoFollowingSnapshot { q_year: y, latest }), None) => {
                prop_assert_eq!(y, q_year);
                prop_assert_eq!(latest, oracle_latest(snaps).capture_date);
                let cumulative_err = matches!(t.select_cumulative(q_year), Err(SnapshotError::NoFollowingSnapshot { .. }));
                prop_assert!(cumulative_err);
            }
            (got, want) => prop_assert!(false, "selector {:?} vs oracle {:?}", got.map(|g| g.0.capture_date), want.map(|w| w.capture_date)),
        }
        let latest = t.select_latest();
        prop_assert_eq!(latest, oracle_latest(snaps));
        prop_assert!(snaps.iter().all(|s| s.capture_date <= latest.capture_date));
        prop_assert_eq!(t.evidence(EvidenceMode::Latest, q_year).unwrap().texts().len(), 1);
        prop_assert_eq!(format!("{:?}", t.select_closest(q_year)), format!("{:?}", t.select_closest(q_year)));
    }
}

#[test]
fn january_2015_for_a_2014_question() {
    let snaps = [
        date(2013, 1, 1),
        date(2014, 6, 1),
        date(2015, 1, 1),
        date(2015, 7, 1),
        date(2016, 1, 1),
    ]
    .into_iter()
    .map(|d| Snapshot {
        capture_date: d,
        text: d.to_string(),
    })
    .collect();
    let t = SnapshotTimeline::new("e", snaps).unwrap();
    let (s, map_year) = t.select_closest(2014).unwrap();
    assert_eq!(s.capture_date, date(2015, 1, 1));
    assert_eq!(map_year, 2015);
    let c = t.select_cumulative(2014).unwrap();
    assert_eq!(c.texts().last().unwrap().date, date(2015, 1, 1));
    assert_eq!(c.texts().len(), 3);
}

#[test]
fn gap_year_falls_forward() {
    let snaps = [date(2012, 3, 1), date(2017, 2, 1)]
        .into_iter()
        .map(|d| Snapshot {
            capture_date: d,
            text: String::new(),
        })
        .collect();
    let t = SnapshotTimeline::new("e", snaps).unwrap();
    assert_eq!(t.select_closest(2014).unwrap().1, 2017);
    assert!(matches!(
        t.select_closest(2017),
        Err(SnapshotError::NoFollowingSnapshot { .. })
    ));
}

#[test]
fn malformed_timelines_are_rejected() {
    let s = |d| Snapshot {
        capture_date: d,
        text: String::new(),
    };
    assert!(matches!(
        SnapshotTimeline::new("e", vec![]),
        Err(SnapshotError::Empty { .. })
    ));
    assert!(matches!(
        SnapshotTimeline::new("e", vec![s(date(2015, 1, 1)), s(date(2015, 1, 1))]),
        Err(SnapshotError::DuplicateDate { .. })
    ));
    assert!(matches!(
        SnapshotTimeline::new("e", vec![s(date(2016, 1, 1)), s(date(2015, 1, 1))]),
        Err(SnapshotError::Unsorted { .. })
    ));
}
