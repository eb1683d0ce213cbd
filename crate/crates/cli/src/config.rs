//! Layered run settings: flags over environment over config file over
//! defaults. Every resolved leaf records the layer it came from.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use clap::parser::ValueSource;
use clap::ArgMatches;
use driftqa_core::pipeline::RunConfig;
use serde_json::{Map, Value};

use crate::usage;

/// Flag id to config key. Keys with a dot address a nested table.
const FLAG_KEYS: [(&str, &str); 13] = [
    ("pipeline", "pipeline"),
    ("snapshot_mode", "snapshot_mode"),
    ("kb_scope", "kb_scope"),
    ("top_k", "retrieval.top_k"),
    ("chunk_size", "retrieval.chunk_size"),
    ("chunk_overlap", "retrieval.overlap"),
    ("embed_dim", "retrieval.dim"),
    ("context_budget", "context_budget_chars"),
    ("extraction_window", "extraction_window_chars"),
    ("parametric_memory", "use_parametric_memory"),
    ("subject_fallback", "ko_subject_fallback"),
    ("seed", "seed"),
    ("jobs", "jobs"),
];

#[derive(Debug, Clone)]
pub struct Resolved {
    pub run: RunConfig,
    pub jobs: usize,
    /// `key -> "value (source)"`, for the manifest.
    pub sources: BTreeMap<String, String>,
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Merge the layers for the flags present in `matches`.
pub fn resolve(matches: &ArgMatches, file: Option<&Path>) -> Result<Resolved> {
    let mut tree = serde_json::to_value(RunConfig::default())?;
    tree.as_object_mut()
        .expect("config is a table")
        .insert("jobs".into(), Value::from(default_jobs()));
    let mut sources: BTreeMap<String, &str> = BTreeMap::new();
    collect_leaves(&tree, "", &mut |k, _| {
        sources.insert(k.to_string(), "default");
    });

    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let layer = serde_json::to_value(table)?;
        let mut leaves = Vec::new();
        collect_leaves(&layer, "", &mut |k, v| leaves.push((k.to_string(), v.clone())));
        for (key, value) in leaves {
            if !sources.contains_key(&key) {
                return Err(usage(format!("{}: unknown setting `{key}`", path.display())));
            }
            set_path(&mut tree, &key, value);
            sources.insert(key, "file");
        }
    }

    for (id, key) in FLAG_KEYS {
        let Ok(Some(mut raw)) = matches.try_get_raw(id) else {
            continue;
        };
        let source = match matches.value_source(id) {
            Some(ValueSource::CommandLine) => "flag",
            Some(ValueSource::EnvVariable) => "env",
            _ => continue,
        };
        let text = raw.next().and_then(|s| s.to_str()).unwrap_or_default();
        set_path(&mut tree, key, scalar(text));
        sources.insert(key.to_string(), source);
    }

    let jobs = tree
        .as_object_mut()
        .and_then(|m| m.remove("jobs"))
        .and_then(|v| v.as_u64())
        .ok_or_else(|| usage("jobs must be a positive integer"))? as usize;
    if jobs == 0 {
        return Err(usage("jobs must be at least 1"));
    }
    let run: RunConfig = serde_json::from_value(tree.clone()).map_err(|e| usage(format!("invalid setting: {e}")))?;

    let mut final_tree = serde_json::to_value(&run)?;
    final_tree
        .as_object_mut()
        .expect("config is a table")
        .insert("jobs".into(), Value::from(jobs));
    let mut out = BTreeMap::new();
    collect_leaves(&final_tree, "", &mut |k, v| {
        let shown = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        out.insert(
            k.to_string(),
            format!("{shown} ({})", sources.get(k).copied().unwrap_or("default")),
        );
    });
    Ok(Resolved {
        run,
        jobs,
        sources: out,
    })
}

/// Typed JSON for a raw flag value that clap has already validated.
fn scalar(text: &str) -> Value {
    if let Ok(n) = text.parse::<u64>() {
        return Value::from(n);
    }
    match text {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => Value::String(text.to_string()),
    }
}

fn collect_leaves(v: &Value, prefix: &str, f: &mut dyn FnMut(&str, &Value)) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                collect_leaves(child, &key, f);
            }
        }
        leaf => f(prefix, leaf),
    }
}

fn set_path(tree: &mut Value, key: &str, value: Value) {
    let mut node = tree;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        let map = match node {
            Value::Object(m) => m,
            other => {
                *other = Value::Object(Map::new());
                other.as_object_mut().expect("just replaced")
            }
        };
        if parts.peek().is_none() {
            map.insert(part.to_string(), value);
            return;
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
}
