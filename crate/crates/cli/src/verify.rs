use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use codeverif_core::consensus::{
    build_candidate_suite, labelled_suite, CandidateSuite, ConsensusError, SuiteConfig, WeightingScheme,
};
use codeverif_core::sandbox::{ProcessSandbox, ResourceLimits};
use codeverif_core::testgen::{generate, load_corpus, Category, GeneratorSpec, TestInput};
use codeverif_core::verifier::{
    dual_verify, proxy_passes, solvability_filter, VerifiedBundle, VerifyConfig, VerifyMode, DEFAULT_SPLIT_SEED,
};
use codeverif_core::{CandidateSolution, OutputMatch, TaskSpec};

use crate::args::{usage_error, VerifyArgs};
use crate::judge::{read_json, write_json};
use crate::table::Table;

/// `--config` file; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Settings {
    mode: Option<VerifyMode>,
    golden_fraction: Option<f64>,
    split_seed: Option<u64>,
    matcher: Option<OutputMatch>,
    weighting: Option<WeightingScheme>,
    min_consensus: Option<f64>,
    limits: Option<ResourceLimits>,
}

#[derive(Debug, Deserialize)]
struct LabelledCase {
    input: String,
    expected: String,
}

enum Inputs {
    Labelled(Vec<TestInput>, Vec<String>),
    Voted(Vec<TestInput>),
}

fn load_inputs(dir: &Path) -> Result<Inputs> {
    let suite = dir.join("suite.json");
    if suite.exists() {
        let cases: Vec<LabelledCase> = read_json(&suite)?;
        let inputs = cases
            .iter()
            .enumerate()
            .map(|(i, c)| TestInput::new(format!("case-{i:02}"), Category::Nominal, c.input.clone()))
            .collect();
        return Ok(Inputs::Labelled(inputs, cases.into_iter().map(|c| c.expected).collect()));
    }
    let corpus = dir.join("inputs");
    if corpus.is_dir() {
        return Ok(Inputs::Voted(load_corpus(&corpus)?));
    }
    let generator = dir.join("generator.json");
    if generator.exists() {
        let text = fs::read_to_string(&generator)?;
        return Ok(Inputs::Voted(generate(&GeneratorSpec::from_json(&text)?)?));
    }
    bail!("{} has none of suite.json, inputs/ or generator.json", dir.display())
}

fn load_candidates(dir: &Path) -> Result<Vec<(String, String)>> {
    let dir = dir.join("candidates");
    let mut names: Vec<String> = fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| Ok((n.clone(), fs::read_to_string(dir.join(&n))?)))
        .collect()
}

pub fn run(args: VerifyArgs) -> Result<()> {
    let settings: Settings = match &args.config {
        Some(path) => read_json(path)?,
        None => Settings::default(),
    };
    let verify = VerifyConfig {
        mode: args.mode.resolve().or(settings.mode).unwrap_or_default(),
        golden_fraction: args.golden_fraction.or(settings.golden_fraction).unwrap_or(0.5),
        split_seed: args.seed.or(settings.split_seed).unwrap_or(DEFAULT_SPLIT_SEED),
        matcher: args.matcher.map(Into::into).or(settings.matcher).unwrap_or_default(),
    };
    if !(verify.golden_fraction > 0.0 && verify.golden_fraction < 1.0) {
        usage_error("golden fraction must lie strictly between 0 and 1");
    }
    let suite_config = SuiteConfig {
        weighting: args.weighting.map(Into::into).or(settings.weighting).unwrap_or_default(),
        min_consensus: args.min_consensus.or(settings.min_consensus).unwrap_or(SuiteConfig::default().min_consensus),
        matcher: verify.matcher,
        limits: args.limits.apply(settings.limits.unwrap_or_default()),
    };
    if !(0.0..=1.0).contains(&suite_config.min_consensus) {
        usage_error("min consensus must lie in [0, 1]");
    }

    let dir = &args.task_dir;
    let task: TaskSpec = read_json(&dir.join("task.json"))?;
    let files = load_candidates(dir)?;
    if files.is_empty() {
        bail!("{} holds no candidates", dir.join("candidates").display());
    }
    let candidates: Vec<CandidateSolution> =
        files.iter().enumerate().map(|(k, (_, raw))| CandidateSolution::from_response(k, raw)).collect();
    let sandbox = ProcessSandbox::default();
    let suite: Result<CandidateSuite, ConsensusError> = match load_inputs(dir)? {
        Inputs::Labelled(inputs, expected) => {
            labelled_suite(&sandbox, &task, &candidates, &inputs, &expected, &suite_config)
        }
        Inputs::Voted(inputs) => build_candidate_suite(&sandbox, &task, &candidates, &inputs, &suite_config),
    };
    let mut bundle = match suite {
        Ok(suite) => dual_verify(&task, &candidates, &suite, &verify),
        Err(ConsensusError::EmptySuite) => VerifiedBundle::discarded_empty(task, verify, "no input reached consensus"),
        Err(e) => return Err(e.into()),
    };
    let proxy = dir.join("proxy.txt");
    if bundle.is_accepted() && proxy.exists() {
        let reply = fs::read_to_string(&proxy)?;
        let passes = proxy_passes(&sandbox, &bundle, &reply, &suite_config.limits, verify.matcher)?;
        bundle = solvability_filter(bundle, Some(&passes))?;
    }

    print_bundle(&bundle, &files);
    if let Some(out) = &args.out {
        write_json(out, &bundle)?;
    }
    Ok(())
}

fn print_bundle(bundle: &VerifiedBundle, files: &[(String, String)]) {
    let mut table = Table::new(["candidate", "file", "golden_score", "validation_correct", "role"]);
    for (j, (name, _)) in files.iter().enumerate() {
        let mut role = Vec::new();
        if bundle.golden_index == Some(j) {
            role.push("selected");
        }
        if bundle.holdout_index == Some(j) {
            role.push("holdout-best");
        }
        let score = bundle.scores.get(j).map_or("-".into(), u64::to_string);
        let correct = bundle.validation_correct.get(j).map_or("-".into(), usize::to_string);
        table.row([j.to_string(), name.clone(), score, correct, role.join(",")]);
    }
    table.print();
    println!();
    let golden_weight: u64 = bundle.golden_suite.iter().map(|c| u64::from(c.weight)).sum();
    println!("mode:       {}", bundle.config.mode.label());
    println!("golden:     {} cases, weight {}", bundle.golden_suite.len(), golden_weight);
    println!("validation: {} cases", bundle.validation_suite.len());
    if let Some(s) = &bundle.solvability {
        println!("proxy:      {}/{} ({})", s.proxy_passed, s.proxy_total, s.bucket);
    }
    for w in &bundle.warnings {
        println!("warning:    {w}");
    }
    println!("decision:   {}", bundle.decision);
}
