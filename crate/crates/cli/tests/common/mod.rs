//! Synthetic corpora and helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use driftqa_core::model::{serialize_benchmark, Dump, Incident};
use driftqa_core::{BenchmarkEvent, GoldAnswer};
use serde_json::json;

pub const TEAMS: [&str; 6] = [
    "Red Hawks",
    "Blue Comets",
    "Green Tides",
    "Gold Lions",
    "Iron Owls",
    "Sea Wolves",
];
pub const YEARS: std::ops::Range<i32> = 2010..2014;

pub fn first_team(p: usize) -> &'static str {
    TEAMS[p % TEAMS.len()]
}

pub fn second_team(p: usize) -> &'static str {
    TEAMS[(p + 3) % TEAMS.len()]
}

/// Team of player `p` in `year`: the first stint ends in 2011.
pub fn team_in(p: usize, year: i32) -> &'static str {
    if year <= 2011 {
        first_team(p)
    } else {
        second_team(p)
    }
}

/// Players with a two-stint career, one question per year, and each
/// snapshot taken the year after the question.
pub fn snapshot_events(players: usize) -> Vec<BenchmarkEvent> {
    (0..players)
        .map(|p| {
            let name = format!("Player {p}");
            let mut incidents = BTreeMap::new();
            for year in YEARS {
                let mut lines = vec![format!("{name} plays for {} from 2005 to 2011.", first_team(p))];
                if year + 1 >= 2012 {
                    lines.push(format!("{name} plays for {} since 2012.", second_team(p)));
                }
                incidents.insert(
                    year.to_string(),
                    Incident {
                        q_year: year,
                        map_year: year + 1,
                        question: format!("Which team did {name} play for in {year}?"),
                        answer: vec![GoldAnswer::new(team_in(p, year), format!("Q{}", 100 + p))],
                        dump: Dump {
                            url: format!("https://example.org/wiki/Player_{p}"),
                            body_par: lines.join("\n"),
                            ..Dump::default()
                        },
                        ans_comp: None,
                        llm_resp: None,
                        extra: Default::default(),
                    },
                );
            }
            BenchmarkEvent {
                event_id: p as i64,
                incidents,
                extra: Default::default(),
            }
        })
        .collect()
}

pub fn write_benchmark(dir: &Path, name: &str, events: &[BenchmarkEvent]) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serialize_benchmark(events).unwrap()).unwrap();
    path
}

fn line(task: &str, reply: &str) -> String {
    json!({"task_id": task, "reply": reply}).to_string() + "\n"
}

/// Replies for a sequential ko run in `(event, year)` order: a quadruple
/// and then the correct answer for every incident.
pub fn ko_script(players: usize) -> String {
    let mut s = String::new();
    for p in 0..players {
        for year in YEARS {
            s += &line("question_to_quadruple", &format!("Player {p} | play for | ? | {year}"));
        }
    }
    for p in 0..players {
        for year in YEARS {
            s += &line("formulate_answer", team_in(p, year));
        }
    }
    s
}

/// A context-answering script that is right only for even players.
pub fn icl_script(players: usize) -> String {
    let mut s = String::new();
    for p in 0..players {
        for year in YEARS {
            let reply = if p % 2 == 0 { team_in(p, year) } else { "Nobody" };
            s += &line("answer_with_context", reply);
        }
    }
    s
}

/// The same reply to every task of kind `task`.
pub fn constant_script(task: &str, reply: &str) -> String {
    json!({"task_id": task, "reply": reply, "repeat": true}).to_string() + "\n"
}

pub const RULES: &str = "# phrase => relation\nplays for => play for\n";

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_driftqa"));
    for (k, _) in std::env::vars() {
        if k.starts_with("DRIFTQA_") {
            c.env_remove(k);
        }
    }
    c.env("SOURCE_DATE_EPOCH", "1700000000");
    c
}

pub fn run_ok(mut c: Command) -> Output {
    let out = c.output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn code(mut c: Command) -> (i32, String) {
    let out = c.output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}
