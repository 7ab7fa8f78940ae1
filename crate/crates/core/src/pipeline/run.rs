//! Batch runner with per-task checkpoints.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! tasks/<task_id>.json     checkpoint, one TaskRecord per finished task
//! corpus/<task_id>.json    one VerifiedBundle per accepted task
//! inputs/<task_id>/*.in    generated inputs (toolspec mode)
//! report.json              RunReport
//! ```
//!
//! A task with a checkpoint is never run again, so an interrupted run can be
//! restarted with the same config and output directory. Failed tasks are not
//! checkpointed and are retried on the next run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{build_candidate_suite, AuditRow, ConsensusError, SuiteConfig, WeightingScheme};
use crate::output::OutputMatch;
use crate::sandbox::{ResourceLimits, Sandbox};
use crate::task::{CandidateSolution, Style, TaskSpec};
use crate::testgen::rng::derive_seed;
use crate::testgen::SplitMix64;
use crate::verifier::{
    dual_verify, filter_solutions, proxy_passes, recheck_acceptance, solvability_filter, Decision, FilterConfig, FilterReason,
    VerifiedBundle, VerifyConfig, VerifyMode, PASS_RATE_BUCKETS,
};

use super::feature_tree::{merge_trees, sample_subtree, FeatureTree};
use super::formulate::{formulate_task, generate_inputs, InputMethod, DEFAULT_MAX_ATTEMPTS};
use super::provider::{FixtureProvider, HttpProvider, HttpProviderConfig, Provider, ProviderError, ProviderRequest, RateLimited};
use super::PipelineError;

/// Relative odds of each task style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleMix {
    pub codeforces: u32,
    pub atcoder: u32,
    pub leetcode: u32,
}

impl Default for StyleMix {
    fn default() -> Self {
        StyleMix { codeforces: 70, atcoder: 15, leetcode: 15 }
    }
}

impl StyleMix {
    fn draw(&self, rng: &mut SplitMix64) -> Style {
        let total = u64::from(self.codeforces) + u64::from(self.atcoder) + u64::from(self.leetcode);
        let x = rng.below(total);
        if x < u64::from(self.codeforces) {
            Style::Codeforces
        } else if x < u64::from(self.codeforces) + u64::from(self.atcoder) {
            Style::AtCoder
        } else {
            Style::LeetCode
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderConfig {
    /// Recorded replies under `dir` (relative to the config file).
    Fixture { dir: PathBuf },
    /// OpenAI-compatible chat-completions endpoint.
    Openai(HttpProviderConfig),
}

fn default_seed() -> u64 {
    42
}
fn default_prefix() -> String {
    "task".into()
}
fn default_budget() -> usize {
    4
}
fn default_candidates() -> usize {
    4
}
fn default_inputs() -> usize {
    15
}
fn default_min_consensus() -> f64 {
    crate::consensus::DEFAULT_MIN_CONSENSUS
}
fn default_golden_fraction() -> f64 {
    crate::verifier::DEFAULT_GOLDEN_FRACTION
}
fn default_true() -> bool {
    true
}
fn default_in_flight() -> usize {
    4
}
fn default_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

/// Pipeline config file (JSON). Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Number of tasks, named `<task_prefix>-NNNN`. Ignored when `task_ids`
    /// is nonempty.
    #[serde(default)]
    pub tasks: usize,
    #[serde(default = "default_prefix")]
    pub task_prefix: String,
    #[serde(default)]
    pub task_ids: Vec<String>,
    /// Feature tree files, merged before sampling.
    #[serde(default)]
    pub feature_trees: Vec<PathBuf>,
    #[serde(default = "default_budget")]
    pub feature_budget: usize,
    #[serde(default)]
    pub style_mix: StyleMix,
    /// Candidate solutions per task.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    /// Test inputs requested per task.
    #[serde(default = "default_inputs")]
    pub inputs: usize,
    #[serde(default)]
    pub input_method: InputMethod,
    #[serde(default)]
    pub weighting: WeightingScheme,
    #[serde(default = "default_min_consensus")]
    pub min_consensus: f64,
    #[serde(default = "default_golden_fraction")]
    pub golden_fraction: f64,
    #[serde(default)]
    pub mode: VerifyMode,
    #[serde(default)]
    pub matcher: OutputMatch,
    #[serde(default)]
    pub limits: ResourceLimits,
    #[serde(default)]
    pub filter: FilterConfig,
    /// Run the proxy solver on accepted tasks.
    #[serde(default = "default_true")]
    pub solvability: bool,
    pub provider: ProviderConfig,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub min_request_interval_ms: u64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let mut config: PipelineConfig = serde_json::from_str(text)?;
        config.base_dir = base_dir.into();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: &str| Err(PipelineError::Config(msg.into()));
        if self.task_ids().is_empty() {
            return bad("no tasks: set `tasks` or `task_ids`");
        }
        if self.candidates == 0 || self.inputs == 0 {
            return bad("`candidates` and `inputs` must be positive");
        }
        if self.feature_budget == 0 {
            return bad("`feature_budget` must be positive");
        }
        if self.style_mix.codeforces == 0 && self.style_mix.atcoder == 0 && self.style_mix.leetcode == 0 {
            return bad("`style_mix` has no positive weight");
        }
        if !(self.golden_fraction > 0.0 && self.golden_fraction < 1.0) {
            return bad("`golden_fraction` must lie strictly between 0 and 1");
        }
        if !(0.0..=1.0).contains(&self.min_consensus) {
            return bad("`min_consensus` must lie in [0, 1]");
        }
        if let VerifyMode::Relaxed { epsilon } = self.mode {
            if !(0.0..=1.0).contains(&epsilon) {
                return bad("relaxed `epsilon` must lie in [0, 1]");
            }
        }
        if self.max_in_flight == 0 || self.max_attempts == 0 {
            return bad("`max_in_flight` and `max_attempts` must be positive");
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in self.task_ids() {
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) || id.starts_with('.') {
                return Err(PipelineError::Config(format!("invalid task id `{id}`")));
            }
            if !seen.insert(id.clone()) {
                return Err(PipelineError::Config(format!("duplicate task id `{id}`")));
            }
        }
        self.limits.validate()?;
        Ok(())
    }

    pub fn task_ids(&self) -> Vec<String> {
        if !self.task_ids.is_empty() {
            return self.task_ids.clone();
        }
        (0..self.tasks).map(|i| format!("{}-{i:04}", self.task_prefix)).collect()
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn load_features(&self) -> Result<FeatureTree, PipelineError> {
        let mut trees = Vec::new();
        for path in &self.feature_trees {
            let text = fs::read_to_string(self.resolve(path))?;
            trees.push(serde_json::from_str::<FeatureTree>(&text)?);
        }
        Ok(merge_trees(&trees))
    }

    /// Build the configured provider, rate-limited when
    /// `min_request_interval_ms` is set.
    pub fn build_provider(&self) -> Box<dyn Provider> {
        let inner: Box<dyn Provider> = match &self.provider {
            ProviderConfig::Fixture { dir } => Box::new(FixtureProvider::new(self.resolve(dir))),
            ProviderConfig::Openai(http) => Box::new(HttpProvider::new(http.clone())),
        };
        if self.min_request_interval_ms > 0 {
            Box::new(RateLimited::new(inner, Duration::from_millis(self.min_request_interval_ms)))
        } else {
            inner
        }
    }

    /// Style drawn for `task_id`; lets fixture authors match the run.
    pub fn planned_style(&self, task_id: &str) -> Style {
        let seeds = TaskSeeds::derive(self.seed, task_id);
        self.style_mix.draw(&mut SplitMix64::new(seeds.style))
    }

    fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            weighting: self.weighting,
            min_consensus: self.min_consensus,
            matcher: self.matcher,
            limits: self.limits,
        }
    }

    fn verify_config(&self, task_seed: u64) -> VerifyConfig {
        VerifyConfig {
            mode: self.mode,
            golden_fraction: self.golden_fraction,
            split_seed: derive_seed(task_seed, "split"),
            matcher: self.matcher,
        }
    }
}

/// Seeds derived for one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSeeds {
    pub task: u64,
    pub style: u64,
    pub features: u64,
    pub inputs: u64,
    pub split: u64,
}

impl TaskSeeds {
    fn derive(run_seed: u64, task_id: &str) -> Self {
        let task = derive_seed(run_seed, task_id);
        TaskSeeds {
            task,
            style: derive_seed(task, "style"),
            features: derive_seed(task, "features"),
            inputs: derive_seed(task, "inputs"),
            split: derive_seed(task, "split"),
        }
    }
}

/// Checkpoint for one finished task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub seeds: TaskSeeds,
    pub inputs_generated: usize,
    pub inputs_dropped: usize,
    pub solutions_generated: usize,
    pub filter_rejections: Vec<(usize, FilterReason)>,
    /// Indices (into the generated responses) of the kept candidates; bundle
    /// indices refer to positions in this list.
    pub kept_candidates: Vec<usize>,
    pub audit: Vec<AuditRow>,
    pub bundle: VerifiedBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub style: Style,
    pub decision: Decision,
    pub golden_cases: usize,
    pub validation_cases: usize,
    pub candidates_kept: usize,
    pub inputs_dropped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_rate_bucket: Option<String>,
    pub seeds: TaskSeeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Attrition {
    pub solutions_generated: usize,
    pub solutions_filtered: usize,
    pub filter_reasons: BTreeMap<String, usize>,
    pub inputs_generated: usize,
    pub inputs_dropped_no_consensus: usize,
    /// Non-accepted share of completed tasks.
    pub discard_fraction: f64,
    pub solvability_checked: usize,
    pub solvability_discarded: usize,
    /// Share of proxy-checked tasks discarded as unsolvable.
    pub solvability_discard_fraction: f64,
    pub pass_rate_histogram: BTreeMap<String, usize>,
}

/// `report.json`. Contains no timings so replays compare byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: serde_json::Value,
    pub tasks_total: usize,
    pub tasks_completed: usize,
    pub tasks_failed: usize,
    pub decisions: BTreeMap<String, usize>,
    pub attrition: Attrition,
    pub tasks: Vec<TaskSummary>,
    pub failures: BTreeMap<String, String>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn to_json(value: &impl Serialize) -> Result<Vec<u8>, PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn candidate_prompt(task: &TaskSpec) -> String {
    let starter = task
        .entry_signature
        .as_deref()
        .map(|s| format!("\n\nStarter code:\n```python\n{s}\n```"))
        .unwrap_or_default();
    format!(
        "Solve the following problem in Python 3.{starter}\n\n{}\n\n\
         Think it through inside <think> and </think>, then give the complete solution in a \
         single ```python code block.",
        task.statement
    )
}

/// Golden-suite pass vector of the proxy solver, or `None` when the provider
/// has no proxy reply.
fn proxy_outcomes<S: Sandbox>(
    sandbox: &S,
    provider: &dyn Provider,
    bundle: &VerifiedBundle,
    config: &PipelineConfig,
) -> Result<Option<Vec<bool>>, PipelineError> {
    let prompt = candidate_prompt(&bundle.task);
    let request = ProviderRequest { task_key: &bundle.task.task_id, kind: "proxy", attempt: 0, prompt: &prompt };
    let reply = match provider.complete(&request) {
        Ok(reply) => reply,
        Err(ProviderError::MissingFixture { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    Ok(Some(proxy_passes(sandbox, bundle, &reply, &config.limits, config.matcher)?))
}

fn run_task<S: Sandbox>(
    task_id: &str,
    config: &PipelineConfig,
    features: &FeatureTree,
    provider: &dyn Provider,
    sandbox: &S,
    out_dir: &Path,
) -> Result<TaskRecord, PipelineError> {
    let seeds = TaskSeeds::derive(config.seed, task_id);
    let style = config.planned_style(task_id);
    let subtree = if features.is_leaf() {
        FeatureTree::default()
    } else {
        sample_subtree(features, config.feature_budget, seeds.features)?
    };
    let task = formulate_task(task_id, &subtree, style, provider, config.max_attempts)?;

    let corpus_dir = out_dir.join("inputs").join(task_id);
    let corpus_dir = (config.input_method == InputMethod::Toolspec).then_some(corpus_dir.as_path());
    let inputs = generate_inputs(
        &task,
        config.input_method,
        provider,
        config.inputs,
        seeds.inputs,
        config.max_attempts,
        corpus_dir,
    )?;

    let prompt = candidate_prompt(&task);
    let responses = (0..config.candidates)
        .map(|j| {
            let kind = format!("candidate-{j}");
            provider.complete(&ProviderRequest { task_key: task_id, kind: &kind, attempt: 0, prompt: &prompt })
        })
        .collect::<Result<Vec<String>, ProviderError>>()?;
    let report = filter_solutions(sandbox, &task, &responses, &config.filter)?;
    let candidates: Vec<CandidateSolution> = report
        .kept
        .iter()
        .enumerate()
        .map(|(k, &j)| CandidateSolution::from_response(k, &responses[j]))
        .collect();

    let verify_config = config.verify_config(seeds.task);
    let mut record = TaskRecord {
        task_id: task_id.into(),
        seeds,
        inputs_generated: inputs.len(),
        inputs_dropped: 0,
        solutions_generated: responses.len(),
        filter_rejections: report.rejected.clone(),
        kept_candidates: report.kept.clone(),
        audit: Vec::new(),
        bundle: VerifiedBundle::discarded_empty(task.clone(), verify_config, ""),
    };
    if candidates.is_empty() {
        record.bundle = VerifiedBundle::discarded_empty(task, verify_config, "every candidate was filtered out");
        record.inputs_dropped = inputs.len();
        return Ok(record);
    }
    let suite = match build_candidate_suite(sandbox, &task, &candidates, &inputs, &config.suite_config()) {
        Ok(suite) => suite,
        Err(ConsensusError::EmptySuite) => {
            record.bundle = VerifiedBundle::discarded_empty(task, verify_config, "no input reached consensus");
            record.inputs_dropped = inputs.len();
            return Ok(record);
        }
        Err(e) => return Err(e.into()),
    };
    record.inputs_dropped = suite.dropped_inputs;
    record.audit = suite.audit.clone();
    let mut bundle = dual_verify(&task, &candidates, &suite, &verify_config);
    if config.solvability && bundle.is_accepted() {
        let passes = proxy_outcomes(sandbox, provider, &bundle, config)?;
        bundle = solvability_filter(bundle, passes.as_deref())?;
    }
    record.bundle = bundle;
    Ok(record)
}

fn load_checkpoint(path: &Path) -> Option<TaskRecord> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Run every task in `config`, writing checkpoints, the accepted corpus and
/// `report.json` under `out_dir`. Per-task failures are collected in the
/// report; only output-directory errors abort the run.
pub fn run_pipeline<S: Sandbox>(
    config: &PipelineConfig,
    provider: &dyn Provider,
    sandbox: &S,
    out_dir: &Path,
) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let features = config.load_features()?;
    let tasks_dir = out_dir.join("tasks");
    let corpus_dir = out_dir.join("corpus");
    fs::create_dir_all(&tasks_dir)?;
    fs::create_dir_all(&corpus_dir)?;

    let ids = config.task_ids();
    let write_lock = Mutex::new(());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let results: Vec<Result<TaskRecord, PipelineError>> = pool.install(|| {
        ids.par_iter()
            .map(|id| {
                let checkpoint = tasks_dir.join(format!("{id}.json"));
                let record = match load_checkpoint(&checkpoint) {
                    Some(record) => {
                        tracing::info!(task = %id, "resuming from checkpoint");
                        record
                    }
                    None => {
                        let record = run_task(id, config, &features, provider, sandbox, out_dir)?;
                        if let Err(e) = recheck_acceptance(&record.bundle) {
                            return Err(PipelineError::Config(format!("bundle failed recheck: {e}")));
                        }
                        let _guard = write_lock.lock().expect("poisoned");
                        if record.bundle.is_accepted() {
                            write_atomic(&corpus_dir.join(format!("{id}.json")), &to_json(&record.bundle)?)?;
                        }
                        write_atomic(&checkpoint, &to_json(&record)?)?;
                        record
                    }
                };
                let bundle_path = corpus_dir.join(format!("{id}.json"));
                if record.bundle.is_accepted() && !bundle_path.exists() {
                    let _guard = write_lock.lock().expect("poisoned");
                    write_atomic(&bundle_path, &to_json(&record.bundle)?)?;
                }
                Ok(record)
            })
            .collect()
    });

    let report = build_report(config, &ids, results);
    write_atomic(&out_dir.join("report.json"), &to_json(&report)?)?;
    Ok(report)
}

fn build_report(config: &PipelineConfig, ids: &[String], results: Vec<Result<TaskRecord, PipelineError>>) -> RunReport {
    let mut decisions: BTreeMap<String, usize> = Decision::ALL.iter().map(|d| (d.to_string(), 0)).collect();
    let mut attrition = Attrition {
        pass_rate_histogram: PASS_RATE_BUCKETS.iter().map(|b| (b.to_string(), 0)).collect(),
        ..Attrition::default()
    };
    let mut tasks = Vec::new();
    let mut failures = BTreeMap::new();
    for (id, result) in ids.iter().zip(results) {
        let record = match result {
            Ok(record) => record,
            Err(e) => {
                tracing::warn!(task = %id, error = %e, "task failed");
                failures.insert(id.clone(), e.to_string());
                continue;
            }
        };
        let bundle = &record.bundle;
        *decisions.entry(bundle.decision.to_string()).or_default() += 1;
        attrition.solutions_generated += record.solutions_generated;
        attrition.solutions_filtered += record.filter_rejections.len();
        for (_, reason) in &record.filter_rejections {
            *attrition.filter_reasons.entry(format!("{reason:?}")).or_default() += 1;
        }
        attrition.inputs_generated += record.inputs_generated;
        attrition.inputs_dropped_no_consensus += record.inputs_dropped;
        if let Some(s) = &bundle.solvability {
            attrition.solvability_checked += 1;
            if bundle.decision == Decision::DiscardedUnsolvable {
                attrition.solvability_discarded += 1;
            }
            *attrition.pass_rate_histogram.entry(s.bucket.clone()).or_default() += 1;
        }
        tasks.push(TaskSummary {
            task_id: record.task_id.clone(),
            style: bundle.task.style,
            decision: bundle.decision,
            golden_cases: bundle.golden_suite.len(),
            validation_cases: bundle.validation_suite.len(),
            candidates_kept: record.kept_candidates.len(),
            inputs_dropped: record.inputs_dropped,
            pass_rate_bucket: bundle.solvability.as_ref().map(|s| s.bucket.clone()),
            seeds: record.seeds,
        });
    }
    let completed = tasks.len();
    let accepted = decisions.get("Accepted").copied().unwrap_or(0);
    if completed > 0 {
        attrition.discard_fraction = (completed - accepted) as f64 / completed as f64;
    }
    if attrition.solvability_checked > 0 {
        attrition.solvability_discard_fraction =
            attrition.solvability_discarded as f64 / attrition.solvability_checked as f64;
    }
    RunReport {
        seed: config.seed,
        config: serde_json::to_value(config).unwrap_or_default(),
        tasks_total: ids.len(),
        tasks_completed: completed,
        tasks_failed: failures.len(),
        decisions,
        attrition,
        tasks,
        failures,
    }
}
