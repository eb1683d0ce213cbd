//! Choosing dated page snapshots as evidence for a question year.
//!
//! - *closest*: the earliest snapshot captured after the question year ends
//!   (ideally in January of the following year).
//! - *latest*: the most recent snapshot.
//! - *cumulative*: every snapshot up to and including the closest one.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BenchmarkEvent, EvidenceBundle, EvidenceMode, EvidenceText};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("timeline for `{entity}` has no snapshots")]
    Empty { entity: String },
    #[error("timeline for `{entity}` is not strictly ascending at {prev} -> {next}")]
    Unsorted {
        entity: String,
        prev: NaiveDate,
        next: NaiveDate,
    },
    #[error("timeline for `{entity}` has two snapshots captured on {date}")]
    DuplicateDate { entity: String, date: NaiveDate },
    #[error("no snapshot after {q_year}; latest available is {latest}")]
    NoFollowingSnapshot { q_year: i32, latest: NaiveDate },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub capture_date: NaiveDate,
    pub text: String,
}

/// An entity's snapshots, strictly ascending by capture date.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SnapshotTimeline {
    entity: String,
    snapshots: Vec<Snapshot>,
}

impl SnapshotTimeline {
    pub fn new(entity: impl Into<String>, snapshots: Vec<Snapshot>) -> Result<Self, SnapshotError> {
        let entity = entity.into();
        if snapshots.is_empty() {
            return Err(SnapshotError::Empty { entity });
        }
        for pair in snapshots.windows(2) {
            let (prev, next) = (pair[0].capture_date, pair[1].capture_date);
            if prev == next {
                return Err(SnapshotError::DuplicateDate { entity, date: prev });
            }
            if prev > next {
                return Err(SnapshotError::Unsorted { entity, prev, next });
            }
        }
        Ok(Self { entity, snapshots })
    }

    /// One snapshot per distinct `map_year`, dated January 1 of that year.
    /// When several incidents share a `map_year`, the dump of the one with
    /// the earliest year key is used.
    pub fn from_event(event: &BenchmarkEvent) -> Result<Self, SnapshotError> {
        let mut by_year: BTreeMap<i32, &str> = BTreeMap::new();
        for incident in event.incidents.values() {
            by_year.entry(incident.map_year).or_insert(&incident.dump.body_par);
        }
        let snapshots = by_year
            .into_iter()
            .filter_map(|(year, text)| {
                NaiveDate::from_ymd_opt(year, 1, 1).map(|capture_date| Snapshot {
                    capture_date,
                    text: text.to_string(),
                })
            })
            .collect();
        let entity = event
            .incidents
            .values()
            .next()
            .map(|i| i.dump.url.clone())
            .unwrap_or_else(|| format!("event-{}", event.event_id));
        Self::new(entity, snapshots)
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    fn closest_index(&self, q_year: i32) -> Result<usize, SnapshotError> {
        // First snapshot captured in a year after q_year. Because dates are
        // sorted this is both "earliest in q_year + 1" when such a snapshot
        // exists and "earliest after q_year" otherwise.
        let idx = self.snapshots.partition_point(|s| s.capture_date.year() <= q_year);
        if idx == self.snapshots.len() {
            return Err(SnapshotError::NoFollowingSnapshot {
                q_year,
                latest: self.snapshots[self.snapshots.len() - 1].capture_date,
            });
        }
        Ok(idx)
    }

    /// The snapshot paired with a question from `q_year`, and its capture year.
    pub fn select_closest(&self, q_year: i32) -> Result<(&Snapshot, i32), SnapshotError> {
        let s = &self.snapshots[self.closest_index(q_year)?];
        Ok((s, s.capture_date.year()))
    }

    pub fn select_latest(&self) -> &Snapshot {
        &self.snapshots[self.snapshots.len() - 1]
    }

    /// Every snapshot from the first through the closest one for `q_year`.
    pub fn select_cumulative(&self, q_year: i32) -> Result<EvidenceBundle, SnapshotError> {
        let end = self.closest_index(q_year)?;
        let texts = self.snapshots[..=end].iter().map(to_text).collect();
        Ok(
            EvidenceBundle::new(EvidenceMode::Cumulative, self.entity.clone(), texts)
                .expect("timeline prefix is non-empty and ascending"),
        )
    }

    /// Evidence for one question under `mode`. Unified mode does not apply
    /// to page timelines and is rejected by the caller.
    pub fn evidence(&self, mode: EvidenceMode, q_year: i32) -> Result<EvidenceBundle, SnapshotError> {
        let single =
            |s: &Snapshot, mode| EvidenceBundle::new(mode, self.entity.clone(), vec![to_text(s)]).expect("one text");
        match mode {
            EvidenceMode::Closest => Ok(single(self.select_closest(q_year)?.0, EvidenceMode::Closest)),
            EvidenceMode::Latest => Ok(single(self.select_latest(), EvidenceMode::Latest)),
            EvidenceMode::Cumulative | EvidenceMode::Unified => self.select_cumulative(q_year),
        }
    }
}

fn to_text(s: &Snapshot) -> EvidenceText {
    EvidenceText {
        date: s.capture_date,
        text: s.text.clone(),
    }
}

/// Read `{entity, capture_date: "YYYY-MM-DD", text}` JSON lines into one
/// timeline per entity. Lines may come in any order.
pub fn read_timelines_jsonl(text: &str) -> Result<Vec<SnapshotTimeline>, String> {
    #[derive(Deserialize)]
    struct Line {
        entity: String,
        capture_date: NaiveDate,
        text: String,
    }
    let mut groups: BTreeMap<String, Vec<Snapshot>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        groups.entry(l.entity).or_default().push(Snapshot {
            capture_date: l.capture_date,
            text: l.text,
        });
    }
    groups
        .into_iter()
        .map(|(entity, mut snaps)| {
            snaps.sort_by_key(|s| s.capture_date);
            SnapshotTimeline::new(entity, snaps).map_err(|e| e.to_string())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn timeline(dates: &[&str]) -> SnapshotTimeline {
        SnapshotTimeline::new(
            "e",
            dates
                .iter()
                .map(|s| Snapshot {
                    capture_date: d(s),
                    text: format!("text {s}"),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn closest_prefers_january_of_next_year() {
        let t = timeline(&["2015-01-03", "2015-07-01"]);
        let (s, year) = t.select_closest(2014).unwrap();
        assert_eq!(s.capture_date, d("2015-01-03"));
        assert_eq!(year, 2015);
    }

    #[test]
    fn closest_falls_forward_then_errors() {
        let t = timeline(&["2017-03-01", "2017-09-01"]);
        let (s, year) = t.select_closest(2014).unwrap();
        assert_eq!((s.capture_date, year), (d("2017-03-01"), 2017));

        let t = timeline(&["2018-05-05", "2019-12-31"]);
        assert_eq!(
            t.select_closest(2020).unwrap_err(),
            SnapshotError::NoFollowingSnapshot {
                q_year: 2020,
                latest: d("2019-12-31")
            }
        );
    }

    #[test]
    fn latest_examples() {
        let t = timeline(&["2011-01-01", "2013-01-01", "2015-01-01"]);
        assert_eq!(t.select_latest().capture_date, d("2015-01-01"));
        let t = timeline(&["2012-04-04"]);
        assert_eq!(t.select_latest().capture_date, d("2012-04-04"));
        let t = timeline(&["2012-04-04", "2012-04-05"]);
        assert_eq!(t.select_latest().capture_date, d("2012-04-05"));
    }

    #[test]
    fn cumulative_examples() {
        let t = timeline(&["2011-06-01", "2013-06-01", "2015-01-10"]);
        let b = t.select_cumulative(2014).unwrap();
        let dates: Vec<_> = b.texts().iter().map(|x| x.date).collect();
        assert_eq!(dates, vec![d("2011-06-01"), d("2013-06-01"), d("2015-01-10")]);
        assert_eq!(b.mode(), EvidenceMode::Cumulative);

        let t = timeline(&["2016-02-02"]);
        assert_eq!(t.select_cumulative(2014).unwrap().texts().len(), 1);
        assert!(matches!(
            t.select_cumulative(2016),
            Err(SnapshotError::NoFollowingSnapshot { .. })
        ));
    }

    #[test]
    fn construction_rejects_bad_timelines() {
        let snap = |s: &str| Snapshot {
            capture_date: d(s),
            text: String::new(),
        };
        assert!(matches!(
            SnapshotTimeline::new("e", vec![snap("2015-01-01"), snap("2013-01-01")]),
            Err(SnapshotError::Unsorted { .. })
        ));
        assert!(matches!(
            SnapshotTimeline::new("e", vec![snap("2015-01-01"), snap("2015-01-01")]),
            Err(SnapshotError::DuplicateDate { .. })
        ));
        assert!(matches!(
            SnapshotTimeline::new("e", vec![]),
            Err(SnapshotError::Empty { .. })
        ));
    }

    #[test]
    fn jsonl_timelines_group_and_sort() {
        let text = r#"{"entity":"b","capture_date":"2015-01-01","text":"x"}
{"entity":"a","capture_date":"2016-01-01","text":"y"}
{"entity":"a","capture_date":"2014-01-01","text":"z"}"#;
        let ts = read_timelines_jsonl(text).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0].entity(), "a");
        assert_eq!(ts[0].snapshots()[0].text, "z");
    }
}
