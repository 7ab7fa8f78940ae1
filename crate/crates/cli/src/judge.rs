use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use codeverif_core::reward::{compute_reward, RewardInput};
use codeverif_core::sandbox::{extract_code, ProcessSandbox, ProgramSource, ResourceLimits, Verdict};
use codeverif_core::TaskSpec;
use codeverif_gateway::{judge_locally, JudgeRequest, JudgeResponse, Mode, ResolvedRequest, SolutionInput, SuiteCase};

use crate::args::{JudgeArgs, RewardArgs};
use crate::table::Table;

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn run_judge(args: JudgeArgs) -> Result<()> {
    let limits = args.limits.apply(ResourceLimits::default());
    let text = fs::read_to_string(&args.solution).with_context(|| format!("reading {}", args.solution.display()))?;
    let source = if args.response { extract_code(&text) } else { ProgramSource::from_code(text) };
    let suite: Vec<SuiteCase> = read_json(&args.suite)?;
    if suite.is_empty() {
        bail!("{} holds no cases", args.suite.display());
    }
    let task: Option<TaskSpec> = args.task.as_deref().map(read_json).transpose()?;
    let request = JudgeRequest {
        task_ref: None,
        task: None,
        solution: SolutionInput::Program(source),
        suite,
        limits: None,
        mode: Mode::Both,
        matcher: args.matcher.into(),
        weighted_reward: args.weighted,
        granularity: None,
    };
    let resolved = ResolvedRequest::new(request, task, limits);
    let response = judge_locally(&ProcessSandbox::default(), "local", &resolved)?;

    let mut table = Table::new(["case", "verdict", "code", "wall_ms"]);
    for (i, (v, ms)) in response.verdicts.iter().zip(&response.wall_time_ms).enumerate() {
        table.row([i.to_string(), v.label().to_string(), v.code().to_string(), ms.to_string()]);
    }
    table.print();
    println!();
    let mut tally = Table::new(["category", "count"]);
    for v in Verdict::ALL {
        tally.row([v.label().to_string(), response.verdicts.iter().filter(|&&x| x == v).count().to_string()]);
    }
    tally.print();
    println!();
    println!("passed: {}/{}", response.passed, response.total);
    if let Some(r) = response.reward {
        println!("reward: {}", r.value);
    }
    if let Some(out) = &args.out {
        write_json(out, &response)?;
    }
    Ok(())
}

/// Judge records in `text`: one object, an array, or JSON lines. Gateway
/// audit lines contribute their `result` records and skip the rest.
fn parse_records(text: &str) -> Result<Vec<JudgeResponse>> {
    let values: Vec<Value> = match serde_json::from_str::<Value>(text) {
        Ok(Value::Array(items)) => items,
        Ok(v) => vec![v],
        Err(_) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("line {}", i + 1)))
            .collect::<Result<_>>()?,
    };
    let mut records = Vec::new();
    for v in values {
        let v = match v.get("event").and_then(Value::as_str) {
            Some("result") => v["response"].clone(),
            Some(_) => continue,
            None => v,
        };
        records.push(serde_json::from_value(v).context("not a judge record")?);
    }
    Ok(records)
}

#[derive(Debug, Serialize)]
struct RewardRecord {
    job_id: String,
    reward: f64,
}

pub fn run_reward(args: RewardArgs) -> Result<()> {
    let text = fs::read_to_string(&args.judge_output)
        .with_context(|| format!("reading {}", args.judge_output.display()))?;
    let records = parse_records(&text).with_context(|| format!("parsing {}", args.judge_output.display()))?;
    if records.is_empty() {
        bail!("{} holds no judge records", args.judge_output.display());
    }
    let mut table = Table::new(["job", "passed", "total", "reward", "stored"]);
    let mut out = Vec::with_capacity(records.len());
    for r in &records {
        let reward = compute_reward(&RewardInput {
            extraction_status: r.extraction_status,
            syntax_ok: r.syntax_ok,
            passed: r.passed,
            total: r.total,
        })
        .with_context(|| format!("job {}", r.job_id))?;
        let stored = r.reward.map_or("-".to_string(), |s| s.value.to_string());
        table.row([r.job_id.clone(), r.passed.to_string(), r.total.to_string(), reward.value.to_string(), stored]);
        out.push(RewardRecord { job_id: r.job_id.clone(), reward: reward.value });
    }
    table.print();
    if let Some(path) = &args.out {
        write_json(path, &out)?;
    }
    Ok(())
}
