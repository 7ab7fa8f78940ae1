use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use codeverif_core::pipeline::{run_pipeline as run, PipelineConfig, RunReport};
use codeverif_core::sandbox::ProcessSandbox;
use codeverif_core::verifier::{Decision, VerifiedBundle, PASS_RATE_BUCKETS};

use crate::args::{usage_error, PipelineArgs, ReportArgs};
use crate::judge::read_json;
use crate::table::Table;

pub fn run_pipeline(args: PipelineArgs) -> Result<()> {
    let mut config = PipelineConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(mode) = args.mode.resolve() {
        config.mode = mode;
    }
    if let Err(e) = config.validate() {
        usage_error(e);
    }
    let provider = config.build_provider();
    let report = run(&config, &*provider, &ProcessSandbox::default(), &args.out)?;

    let mut tasks = Table::new(["task", "style", "decision", "golden", "validation", "proxy"]);
    for t in &report.tasks {
        tasks.row([
            t.task_id.clone(),
            format!("{:?}", t.style),
            t.decision.to_string(),
            t.golden_cases.to_string(),
            t.validation_cases.to_string(),
            t.pass_rate_bucket.clone().unwrap_or_else(|| "-".into()),
        ]);
    }
    tasks.print();
    println!();
    print_report(&report);
    println!("output: {}", args.out.display());
    if report.tasks_failed > 0 {
        for (id, message) in &report.failures {
            eprintln!("task {id} failed: {message}");
        }
        bail!("{} of {} tasks failed", report.tasks_failed, report.tasks_total);
    }
    Ok(())
}

fn print_counts(title: &str, counts: &BTreeMap<String, usize>, order: &[&str]) {
    let mut table = Table::new([title, "count"]);
    for key in order {
        table.row([key.to_string(), counts.get(*key).copied().unwrap_or(0).to_string()]);
    }
    table.print();
}

fn decision_order() -> Vec<String> {
    Decision::ALL.iter().map(Decision::to_string).collect()
}

fn print_report(report: &RunReport) {
    let a = &report.attrition;
    println!("tasks:     {} total, {} completed, {} failed", report.tasks_total, report.tasks_completed, report.tasks_failed);
    println!();
    let order = decision_order();
    print_counts("decision", &report.decisions, &order.iter().map(String::as_str).collect::<Vec<_>>());
    println!();
    let mut stages = Table::new(["stage", "value"]);
    stages.row(["solutions generated".to_string(), a.solutions_generated.to_string()]);
    stages.row(["solutions filtered".to_string(), a.solutions_filtered.to_string()]);
    for (reason, n) in &a.filter_reasons {
        stages.row([format!("  filtered: {reason}"), n.to_string()]);
    }
    stages.row(["inputs generated".to_string(), a.inputs_generated.to_string()]);
    stages.row(["inputs without consensus".to_string(), a.inputs_dropped_no_consensus.to_string()]);
    stages.row(["discard fraction".to_string(), format!("{:.4}", a.discard_fraction)]);
    stages.row(["solvability checked".to_string(), a.solvability_checked.to_string()]);
    stages.row(["solvability discarded".to_string(), a.solvability_discarded.to_string()]);
    stages.row(["solvability discard fraction".to_string(), format!("{:.4}", a.solvability_discard_fraction)]);
    stages.print();
    println!();
    print_counts("proxy pass rate (%)", &a.pass_rate_histogram, &PASS_RATE_BUCKETS);
}

fn bundle_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn run_report(args: ReportArgs) -> Result<()> {
    let dir = &args.corpus_dir;
    let report_path = dir.join("report.json");
    if report_path.exists() {
        let report: RunReport = read_json(&report_path)?;
        print_report(&report);
        return Ok(());
    }
    // A bare corpus: tally what the bundles record.
    let corpus = if dir.join("corpus").is_dir() { dir.join("corpus") } else { dir.clone() };
    let paths = bundle_files(&corpus)?;
    if paths.is_empty() {
        bail!("{} holds neither report.json nor bundle files", dir.display());
    }
    let mut decisions = BTreeMap::new();
    let mut histogram = BTreeMap::new();
    for path in &paths {
        let bundle: VerifiedBundle = read_json(path)?;
        *decisions.entry(bundle.decision.to_string()).or_insert(0) += 1;
        if let Some(s) = &bundle.solvability {
            *histogram.entry(s.bucket.clone()).or_insert(0) += 1;
        }
    }
    println!("bundles: {}", paths.len());
    println!();
    let order = decision_order();
    print_counts("decision", &decisions, &order.iter().map(String::as_str).collect::<Vec<_>>());
    println!();
    print_counts("proxy pass rate (%)", &histogram, &PASS_RATE_BUCKETS);
    Ok(())
}
