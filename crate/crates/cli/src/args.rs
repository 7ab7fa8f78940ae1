use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use codeverif_core::consensus::WeightingScheme;
use codeverif_core::sandbox::ResourceLimits;
use codeverif_core::verifier::VerifyMode;
use codeverif_core::OutputMatch;
use codeverif_gateway::Granularity;

#[derive(Debug, Parser)]
#[command(name = "codeverif", version, about = "Synthesize, judge and verify programming tasks")]
pub struct Cli {
    /// Log filter for stderr, overridden by RUST_LOG.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit a test-input corpus from a generator spec.
    GenTests(GenTestsArgs),
    /// Judge one solution against a suite of cases.
    Judge(JudgeArgs),
    /// Vote a suite from a task directory and run dual verification.
    Verify(VerifyArgs),
    /// Recompute rewards from judge output records.
    Reward(RewardArgs),
    /// Run the HTTP gateway.
    Serve(ServeArgs),
    /// Run sandbox workers against a broker.
    Work(WorkArgs),
    /// Run the synthesis pipeline from a config file.
    Pipeline(PipelineArgs),
    /// Print attrition and pass-rate histograms of a pipeline run.
    Report(ReportArgs),
}

/// Abort with a usage error (exit status 2).
pub fn usage_error(message: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ArgumentConflict, message).exit()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Strict,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatcherArg {
    Exact,
    Numeric,
}

impl From<MatcherArg> for OutputMatch {
    fn from(m: MatcherArg) -> Self {
        match m {
            MatcherArg::Exact => OutputMatch::Exact,
            MatcherArg::Numeric => OutputMatch::numeric(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Size,
    Semantic,
    Uniform,
}

impl From<WeightingArg> for WeightingScheme {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Size => WeightingScheme::Size,
            WeightingArg::Semantic => WeightingScheme::Semantic,
            WeightingArg::Uniform => WeightingScheme::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Request,
    Case,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Request => Granularity::Request,
            GranularityArg::Case => Granularity::Case,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModeArgs {
    /// Hold-out confirmation rule.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Tolerance for relaxed mode [default: 0.2].
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl ModeArgs {
    /// The selected mode, or `None` when `--mode` was not given.
    pub fn resolve(&self) -> Option<VerifyMode> {
        if let Some(eps) = self.epsilon {
            if !(0.0..=1.0).contains(&eps) {
                usage_error(format!("--epsilon must lie in [0, 1], got {eps}"));
            }
            if self.mode != Some(ModeArg::Relaxed) {
                usage_error("--epsilon requires --mode relaxed");
            }
        }
        self.mode.map(|m| match m {
            ModeArg::Strict => VerifyMode::Strict,
            ModeArg::Relaxed => VerifyMode::Relaxed { epsilon: self.epsilon.unwrap_or(0.2) },
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct LimitArgs {
    /// Wall-clock limit per run.
    #[arg(long, value_name = "MS")]
    pub wall_ms: Option<u64>,
    /// CPU-time limit per run.
    #[arg(long, value_name = "MS")]
    pub cpu_ms: Option<u64>,
    /// Address-space cap per run.
    #[arg(long, value_name = "MIB")]
    pub memory_mb: Option<u64>,
    /// Captured stdout cap per run.
    #[arg(long, value_name = "MIB")]
    pub output_cap_mb: Option<u64>,
}

impl LimitArgs {
    pub fn apply(&self, mut limits: ResourceLimits) -> ResourceLimits {
        if let Some(ms) = self.wall_ms {
            limits.wall_time_ms = ms;
        }
        if let Some(ms) = self.cpu_ms {
            limits.cpu_time_ms = ms;
        }
        if let Some(mb) = self.memory_mb {
            limits.memory_bytes = mb << 20;
        }
        if let Some(mb) = self.output_cap_mb {
            limits.output_cap_bytes = mb << 20;
        }
        if let Err(e) = limits.validate() {
            usage_error(e);
        }
        limits
    }
}

#[derive(Debug, Args)]
pub struct GenTestsArgs {
    /// Generator spec (JSON).
    pub spec: PathBuf,
    /// Directory that receives one `<label>.in` file per case.
    pub out_dir: PathBuf,
    /// Override the generator's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace `.in` files already in the output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    /// Solution file: Python source, or a raw model response with `--response`.
    #[arg(long)]
    pub solution: PathBuf,
    /// Treat the solution file as a raw response and extract its code block.
    #[arg(long)]
    pub response: bool,
    /// Suite file: JSON array of `{"input", "expected", "weight"?}`.
    #[arg(long)]
    pub suite: PathBuf,
    /// Task file (JSON); needed for entry-point tasks.
    #[arg(long)]
    pub task: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    pub matcher: MatcherArg,
    /// Compute the reward over case weights instead of counts.
    #[arg(long)]
    pub weighted: bool,
    #[command(flatten)]
    pub limits: LimitArgs,
    /// Write the judge record (JSON) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Task directory: `task.json`, `candidates/`, and `suite.json`,
    /// `inputs/` or `generator.json`; optionally `proxy.txt`.
    pub task_dir: PathBuf,
    #[command(flatten)]
    pub mode: ModeArgs,
    /// Split seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Verification settings (JSON); flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub golden_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
    #[arg(long)]
    pub min_consensus: Option<f64>,
    #[arg(long, value_enum)]
    pub matcher: Option<MatcherArg>,
    #[command(flatten)]
    pub limits: LimitArgs,
    /// Write the verified bundle (JSON) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    /// Judge output: one record, an array of records, or JSON lines.
    pub judge_output: PathBuf,
    /// Write `[{"job_id", "reward"}]` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BrokerArgs {
    /// `mem`, or `redis://host:port` for a shared store.
    #[arg(long, default_value = "mem")]
    pub broker: String,
    /// Worker lease lifetime.
    #[arg(long, default_value_t = 10_000, value_name = "MS")]
    pub lease_ttl_ms: u64,
    /// Requeues before a job is dead-lettered.
    #[arg(long, default_value_t = codeverif_broker::DEFAULT_MAX_RETRIES)]
    pub max_retries: u32,
    /// Result channel lifetime.
    #[arg(long, default_value_t = 3_600_000, value_name = "MS")]
    pub result_ttl_ms: u64,
}

impl BrokerArgs {
    pub fn config(&self) -> codeverif_broker::BrokerConfig {
        if self.lease_ttl_ms == 0 {
            usage_error("--lease-ttl-ms must be positive");
        }
        codeverif_broker::BrokerConfig {
            max_retries: self.max_retries,
            result_ttl_ms: self.result_ttl_ms,
            lease_ttl_ms: self.lease_ttl_ms,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    #[command(flatten)]
    pub broker: BrokerArgs,
    /// Start an embedded store on this address and use it as the broker.
    #[arg(long, value_name = "ADDR", conflicts_with = "broker")]
    pub embedded_store: Option<String>,
    /// In-process sandbox workers [default: 4 with `--broker mem`, else 0].
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum, default_value = "request")]
    pub granularity: GranularityArg,
    /// Directory of task files addressed by `task_ref`.
    #[arg(long)]
    pub task_dir: Option<PathBuf>,
    /// Append-only audit log (JSON lines).
    #[arg(long)]
    pub audit: Option<PathBuf>,
    /// Reap dead workers this often.
    #[arg(long, default_value_t = 1000, value_name = "MS")]
    pub sweep_ms: u64,
    /// Concurrent blocking fetches.
    #[arg(long, default_value_t = 256)]
    pub max_waiters: usize,
    #[command(flatten)]
    pub limits: LimitArgs,
}

#[derive(Debug, Args)]
pub struct WorkArgs {
    #[command(flatten)]
    pub broker: BrokerArgs,
    /// Parallel sandbox executors.
    #[arg(long, default_value_t = 1)]
    pub parallelism: usize,
    /// Worker id prefix [default: `worker-<pid>`].
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pipeline config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for checkpoints, corpus and report.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub mode: ModeArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Pipeline output directory, or a directory of bundle files.
    pub corpus_dir: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn relaxed_defaults_epsilon() {
        let m = ModeArgs { mode: Some(ModeArg::Relaxed), epsilon: None };
        assert_eq!(m.resolve(), Some(VerifyMode::Relaxed { epsilon: 0.2 }));
        let m = ModeArgs { mode: None, epsilon: None };
        assert_eq!(m.resolve(), None);
    }

    #[test]
    fn limits_override_defaults() {
        let a = LimitArgs { wall_ms: Some(9000), cpu_ms: None, memory_mb: Some(64), output_cap_mb: None };
        let l = a.apply(ResourceLimits::default());
        assert_eq!(l.wall_time_ms, 9000);
        assert_eq!(l.memory_bytes, 64 << 20);
        assert_eq!(l.cpu_time_ms, ResourceLimits::default().cpu_time_ms);
        assert_eq!(l.output_cap_bytes, ResourceLimits::default().output_cap_bytes);
    }
}
