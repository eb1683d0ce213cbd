//! The five subcommands. Each validates every path and setting before
//! doing any work or sending any request.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ArgMatches;
use driftqa_core::eval::report::{report, Layout, Report, DEFAULT_LENGTH_EDGES};
use driftqa_core::eval::{
    evaluate, read_eval_records, split_by_zero_shot, write_eval_records, AccuracyBasis, Consensus, EvalError,
    EvalRecord,
};
use driftqa_core::ingest::{
    build_unified_events, curate_events, read_articles_jsonl, read_unified_questions_jsonl, unified_bundle,
    CurationOptions, PatternTable,
};
use driftqa_core::kb::{ingest_document, FactExtractor, KnowledgeBase};
use driftqa_core::llm::tasks::{question_to_quadruple, LlmFactExtractor};
use driftqa_core::llm::LlmBackend;
use driftqa_core::model::{parse_benchmark, serialize_benchmark, EvidenceMode};
use driftqa_core::pipeline::{
    read_records, timestamp_now, write_records, Pipeline, PipelineError, PipelineKind, RunManifest,
};
use driftqa_core::snapshot::SnapshotTimeline;
use driftqa_core::{BenchmarkEvent, EvidenceBundle, Exec};
use serde::Serialize;
use serde_json::json;

use crate::cli::{BuildKbArgs, EvaluateArgs, IngestArgs, ReportArgs, RunArgs};
use crate::{backends, config, paths, usage};

fn exec_for(jobs: usize) -> Exec {
    init_pool(jobs);
    if jobs <= 1 {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

#[cfg(feature = "parallel")]
fn init_pool(jobs: usize) {
    // Only the first call in a process takes effect.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
}

#[cfg(not(feature = "parallel"))]
fn init_pool(_jobs: usize) {}

fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkEvent>> {
    let text = paths::read_text(path)?;
    parse_benchmark(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot write {}", path.display()))?,
    ))
}

fn default_manifest(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let mut inputs: Vec<PathBuf> = Vec::new();
    for p in [
        &args.input,
        &args.articles,
        &args.questions,
        &args.patterns,
        &args.judge_mock_script,
    ]
    .into_iter()
    .flatten()
    {
        inputs.push(paths::input_file(p)?);
    }
    if let Some(d) = &args.templates {
        paths::input_dir(d)?;
    }
    let out_dir = paths::output_dir(&args.out_dir)?;
    let jobs = args.jobs.unwrap_or_else(config::default_jobs).max(1);

    let patterns = match &args.patterns {
        Some(p) => PatternTable::parse(&paths::read_text(p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => PatternTable::default(),
    };
    let templates = backends::templates(args.templates.as_deref())?;
    let judge: Option<Box<dyn LlmBackend>> = if args.semantic_check {
        let scripts: Vec<&PathBuf> = args.judge_mock_script.iter().collect();
        let mut all = backends::judges(&scripts, jobs)?;
        if all.is_empty() {
            return Err(usage(format!(
                "--semantic-check needs --judge-mock-script or {}",
                backends::JUDGE_URLS
            )));
        }
        Some(all.remove(0))
    } else {
        None
    };
    let events = match (&args.input, &args.articles, &args.questions) {
        (Some(input), _, _) => load_benchmark(input)?,
        (None, Some(a), Some(q)) => {
            let articles =
                read_articles_jsonl(&paths::read_text(a)?).map_err(|e| usage(format!("{}: {e}", a.display())))?;
            let questions = read_unified_questions_jsonl(&paths::read_text(q)?)
                .map_err(|e| usage(format!("{}: {e}", q.display())))?;
            build_unified_events(&articles, &questions).map_err(|e| usage(e.to_string()))?
        }
        _ => return Err(usage("pass --input, or --articles with --questions")),
    };

    let opts = CurationOptions {
        patterns,
        check_answers: args.check_answers,
        semantic_judge: judge.as_deref().map(|j| (j, &templates)),
        exec: exec_for(jobs),
        ..CurationOptions::default()
    };
    let pattern_version = opts.patterns.version;
    let (kept, entries) = curate_events(&events, &opts);
    let kept: Vec<BenchmarkEvent> = kept.into_iter().filter(|e| !e.incidents.is_empty()).collect();

    std::fs::write(out_dir.join("benchmark.json"), serialize_benchmark(&kept)? + "\n")
        .with_context(|| format!("cannot write into {}", out_dir.display()))?;
    let mut reports = String::new();
    for e in &entries {
        let line = json!({"event_id": e.event_id, "year": e.year, "report": e.report});
        let _ = writeln!(reports, "{line}");
    }
    std::fs::write(out_dir.join("clean_reports.jsonl"), reports)?;

    let passed = entries.iter().filter(|e| e.passed).count();
    if args.check_answers {
        write_json(
            &out_dir.join("answer_check.json"),
            &json!({
                "pattern_version": pattern_version,
                "check_stage": "after_cleaning",
                "semantic_check": args.semantic_check,
                "total": entries.len(),
                "passed": passed,
                "failed": entries.len() - passed,
                "entries": entries,
            }),
        )?;
        if passed == 0 {
            tracing::warn!("no document passed the answer check; the cleaned corpus is empty");
        }
    }
    eprintln!(
        "ingest: {} documents cleaned, {passed} kept, {} events written to {}",
        entries.len(),
        kept.len(),
        out_dir.display()
    );
    Ok(())
}

fn evidence_for(
    event: &BenchmarkEvent,
    timeline: Option<&SnapshotTimeline>,
    mode: EvidenceMode,
    q_year: i32,
    incident: &driftqa_core::model::Incident,
) -> Result<EvidenceBundle, String> {
    if event.is_unified() {
        return unified_bundle(event, incident).map_err(|e| e.to_string());
    }
    match timeline {
        Some(t) => t.evidence(mode, q_year).map_err(|e| e.to_string()),
        None => Err("no snapshot timeline".into()),
    }
}

pub fn build_kb(args: &BuildKbArgs, matches: &ArgMatches) -> Result<()> {
    let benchmark = paths::input_file(&args.benchmark)?;
    let mut inputs = vec![benchmark.clone()];
    for p in [&args.config, &args.mock_script, &args.extraction_rules]
        .into_iter()
        .flatten()
    {
        inputs.push(paths::input_file(p)?);
    }
    if let Some(d) = &args.templates {
        paths::input_dir(d)?;
    }
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let out = paths::output_file(&args.out, &input_refs)?;
    let manifest_path = paths::output_file(&default_manifest(&out), &input_refs)?;

    let mut resolved = config::resolve(matches, args.config.as_deref())?;
    resolved.run.pipeline = PipelineKind::Ko;
    let cfg = resolved.run.clone();
    let events = load_benchmark(&benchmark)?;
    let unified = events.first().is_some_and(BenchmarkEvent::is_unified);
    cfg.validate(unified).map_err(|e| usage(e.to_string()))?;

    let templates = backends::templates(args.templates.as_deref())?;
    let backend = backends::chat_backend(args.mock_script.as_deref(), None, 1)?;
    let rules = args
        .extraction_rules
        .as_deref()
        .map(backends::extraction_rules)
        .transpose()?;
    let llm_extractor = LlmFactExtractor::new(backend.as_ref(), &templates, cfg.extraction_window_chars);
    let extractor: &dyn FactExtractor = match &rules {
        Some(r) => r,
        None => &llm_extractor,
    };

    let mut ordered: Vec<&BenchmarkEvent> = events.iter().collect();
    ordered.sort_by_key(|e| e.event_id);
    let mut kb = KnowledgeBase::new();
    let mut log = Vec::new();
    let mut failures = 0usize;
    for event in ordered {
        let timeline = if unified {
            None
        } else {
            match SnapshotTimeline::from_event(event) {
                Ok(t) => Some(t),
                Err(e) => {
                    failures += event.incidents.len();
                    log.push(json!({"event_id": event.event_id, "error": e.to_string()}));
                    continue;
                }
            }
        };
        for (year, inc) in &event.incidents {
            let hint = (!unified).then_some(inc.q_year);
            let outcome = question_to_quadruple(&inc.question, hint, backend.as_ref(), &templates)
                .map_err(|e| e.to_string())
                .and_then(|quad| {
                    let bundle = evidence_for(event, timeline.as_ref(), cfg.snapshot_mode, inc.q_year, inc)?;
                    ingest_document(&mut kb, &bundle, &quad.subject, extractor)
                        .map(|delta| (quad.subject, delta))
                        .map_err(|e| e.to_string())
                });
            match outcome {
                Ok((subject, delta)) => {
                    log.push(json!({"event_id": event.event_id, "year": year, "subject": subject, "delta": delta}))
                }
                Err(e) => {
                    failures += 1;
                    log.push(json!({"event_id": event.event_id, "year": year, "error": e}));
                }
            }
        }
    }
    let created_at = timestamp_now();
    kb.save(&out, &created_at)
        .with_context(|| format!("cannot write {}", out.display()))?;
    write_json(
        &manifest_path,
        &json!({
            "tool_version": env!("CARGO_PKG_VERSION"),
            "config_hash": cfg.config_hash(),
            "config": cfg,
            "template_versions": templates.versions(),
            "backend": rules.as_ref().map_or_else(|| backend.name().to_string(), |_| "rules".to_string()),
            "created_at": created_at,
            "stats": kb.stats(),
            "failures": failures,
            "resolved": resolved.sources,
            "incidents": log,
        }),
    )?;
    let stats = kb.stats();
    eprintln!(
        "build-kb: {} facts over {} subjects, {failures} failed incidents, written to {}",
        stats.fact_count,
        stats.subject_count,
        out.display()
    );
    Ok(())
}

pub fn run(args: &RunArgs, matches: &ArgMatches) -> Result<()> {
    let benchmark = paths::input_file(&args.benchmark)?;
    let mut inputs = vec![benchmark.clone()];
    for p in [&args.config, &args.mock_script, &args.extraction_rules]
        .into_iter()
        .flatten()
    {
        inputs.push(paths::input_file(p)?);
    }
    if let Some(d) = &args.templates {
        paths::input_dir(d)?;
    }
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let out = paths::output_file(&args.out, &input_refs)?;
    let manifest_path = paths::output_file(
        &args.manifest.clone().unwrap_or_else(|| default_manifest(&out)),
        &input_refs,
    )?;
    if manifest_path == out {
        return Err(usage("--manifest and --out name the same file"));
    }
    let kb_out = args
        .kb_out
        .as_deref()
        .map(|p| paths::output_file(p, &input_refs))
        .transpose()?;

    let resolved = config::resolve(matches, args.config.as_deref())?;
    let cfg = resolved.run.clone();
    let events = load_benchmark(&benchmark)?;
    let unified = events.first().is_some_and(BenchmarkEvent::is_unified);
    cfg.validate(unified).map_err(|e| usage(e.to_string()))?;
    if kb_out.is_some() && cfg.pipeline != PipelineKind::Ko {
        return Err(usage("--kb-out needs the ko pipeline"));
    }

    let exec = exec_for(resolved.jobs);
    let templates = backends::templates(args.templates.as_deref())?;
    let backend = backends::chat_backend(args.mock_script.as_deref(), args.model_label.as_deref(), resolved.jobs)?;
    let embedder = backends::embedder(cfg.retrieval.dim, cfg.seed, exec)?;
    let rules = args
        .extraction_rules
        .as_deref()
        .map(backends::extraction_rules)
        .transpose()?;

    tracing::info!(pipeline = %cfg.pipeline, mode = %cfg.snapshot_mode, events = events.len(), "run started");
    let mut pipeline = Pipeline::new(&cfg, backend.as_ref(), &templates, embedder.as_ref());
    pipeline.extractor = rules.as_ref().map(|r| r as &dyn FactExtractor);
    pipeline.exec = exec;
    pipeline.measure_latency = args.measure_latency;
    let output = pipeline.run_benchmark(&events).map_err(|e| match e {
        PipelineError::Config(_) => usage(e.to_string()),
        other => anyhow::Error::new(other),
    })?;

    write_records(create(&out)?, &output.records).with_context(|| format!("cannot write {}", out.display()))?;
    let pattern_version = PatternTable::default().version;
    let manifest = RunManifest::new(
        &cfg,
        &templates,
        pattern_version,
        backend.name(),
        &output.records,
        resolved.sources,
    );
    write_json(&manifest_path, &manifest)?;
    if let (Some(path), Some(kb)) = (&kb_out, &output.kb) {
        kb.save(path, &manifest.created_at)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }

    let failed: usize = manifest.failures.values().sum();
    eprintln!(
        "run: {} records, {} answered, {failed} failed{}",
        output.records.len(),
        output.records.len() - failed,
        if manifest.failures.is_empty() {
            String::new()
        } else {
            format!(
                " ({})",
                manifest
                    .failures
                    .iter()
                    .map(|(k, n)| format!("{k}: {n}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        }
    );
    Ok(())
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let records_path = paths::input_file(&args.records)?;
    let benchmark = paths::input_file(&args.benchmark)?;
    let mut inputs = vec![records_path.clone(), benchmark.clone()];
    for p in &args.judge_mock_script {
        inputs.push(paths::input_file(p)?);
    }
    if let Some(d) = &args.templates {
        paths::input_dir(d)?;
    }
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let out = paths::output_file(&args.out, &input_refs)?;
    let jobs = args.jobs.unwrap_or_else(config::default_jobs).max(1);

    let records = read_records(&paths::read_text(&records_path)?)
        .map_err(|e| usage(format!("{}: {e}", records_path.display())))?;
    let events = load_benchmark(&benchmark)?;
    let templates = backends::templates(args.templates.as_deref())?;
    let judges = backends::judges(&args.judge_mock_script, jobs)?;
    let judge_refs: Vec<&dyn LlmBackend> = judges.iter().map(|j| j.as_ref()).collect();
    let evals = evaluate(&records, &events, &judge_refs, &templates, exec_for(jobs)).map_err(|e| match e {
        EvalError::Unmatched(_) => usage(e.to_string()),
        other => anyhow::Error::new(other),
    })?;
    write_eval_records(create(&out)?, &evals).with_context(|| format!("cannot write {}", out.display()))?;

    let em = evals.iter().filter(|r| r.verdict.em).count();
    let mut by_consensus: BTreeMap<String, usize> = BTreeMap::new();
    for r in &evals {
        let key = serde_json::to_value(r.verdict.consensus)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        *by_consensus.entry(key).or_default() += 1;
    }
    let judged = evals
        .iter()
        .filter(|r| r.verdict.consensus != Consensus::Unevaluated)
        .count();
    eprintln!(
        "evaluate: {} records, {em} exact matches, {} judges, {judged} judged ({})",
        evals.len(),
        judges.len(),
        by_consensus
            .iter()
            .map(|(k, n)| format!("{k}: {n}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn write_report(dir: &Path, r: &Report) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for (name, body) in [
        ("table.txt", &r.table_text),
        ("table.csv", &r.table_csv),
        ("consensus_counts.csv", &r.counts_csv),
        ("fact_changes.csv", &r.fact_change_csv),
        ("doc_length.csv", &r.doc_length_csv),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn read_evals(path: &Path) -> Result<Vec<EvalRecord>> {
    read_eval_records(&paths::read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn report_cmd(args: &ReportArgs) -> Result<()> {
    let zero_shot = match (args.split.as_deref(), &args.zs) {
        (None, None) => false,
        (Some("zero-shot"), Some(_)) => true,
        (Some("zero-shot"), None) => return Err(usage("--split zero-shot needs --zs <PATH>")),
        (Some(other), _) => return Err(usage(format!("unknown split `{other}` (expected zero-shot)"))),
        (None, Some(_)) => return Err(usage("--zs is only used with --split zero-shot")),
    };
    let mut files = Vec::new();
    for p in &args.eval {
        files.push(paths::input_file(p)?);
    }
    let zs_path = args.zs.as_deref().map(paths::input_file).transpose()?;
    let out_dir = paths::output_dir(&args.out_dir)?;
    let layout_flag = args
        .layout
        .as_deref()
        .map(str::parse::<Layout>)
        .transpose()
        .map_err(usage)?;
    let basis_flag = match args.basis.as_deref() {
        None => None,
        Some("consensus") => Some(AccuracyBasis::Consensus),
        Some("exact_match") => Some(AccuracyBasis::ExactMatch),
        Some(other) => {
            return Err(usage(format!(
                "unknown basis `{other}` (expected consensus or exact_match)"
            )))
        }
    };
    let edges = args
        .length_edges
        .clone()
        .unwrap_or_else(|| DEFAULT_LENGTH_EDGES.to_vec());

    let mut records = Vec::new();
    for f in &files {
        records.extend(read_evals(f)?);
    }
    let layout = layout_flag.unwrap_or_else(|| Layout::infer(&records));
    let basis = basis_flag.unwrap_or_else(|| AccuracyBasis::infer(&records));
    let render = |recs: &[EvalRecord]| {
        report(recs, layout, basis, &edges, args.min_n).map_err(|e| match e {
            EvalError::BadEdges(_) => usage(e.to_string()),
            other => anyhow::Error::new(other),
        })
    };
    write_report(&out_dir, &render(&records)?)?;

    if zero_shot {
        let zs = read_evals(zs_path.as_deref().expect("checked above"))?;
        let split = split_by_zero_shot(&records, &zs, basis);
        write_report(&out_dir.join("zs_correct"), &render(&split.correct)?)?;
        write_report(&out_dir.join("zs_incorrect"), &render(&split.incorrect)?)?;
        if !split.missing.is_empty() {
            tracing::warn!(
                count = split.missing.len(),
                "records without a zero-shot counterpart were left out of the split"
            );
        }
        eprintln!(
            "report: split {} records into {} zero-shot correct and {} zero-shot incorrect",
            records.len(),
            split.correct.len(),
            split.incorrect.len()
        );
    }
    eprintln!("report: {} records rendered into {}", records.len(), out_dir.display());
    Ok(())
}
