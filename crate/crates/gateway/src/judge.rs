//! Running one request's suite in a sandbox and turning the verdicts into a
//! response.

use codeverif_core::reward::{compute_reward, RewardInput};
use codeverif_core::sandbox::{
    classify_failure, ClassifyContext, ExtractionStatus, Sandbox, SandboxError, Verdict,
};

use crate::schema::{CaseResults, JudgeResponse, ResolvedRequest};

/// Judge every case of `request.suite`. Programs that were not extracted,
/// do not parse or miss the required entry point are not run; every case
/// gets that verdict.
pub fn judge<S: Sandbox + ?Sized>(
    sandbox: &S,
    request: &ResolvedRequest,
    first_case: usize,
) -> Result<CaseResults, SandboxError> {
    let source = &request.source;
    let n = request.suite.len();
    let entry = request.task.as_ref().and_then(|t| t.required_entry());
    let mut ctx = ClassifyContext { syntax: None, required_entry: entry.as_ref(), matcher: request.matcher };
    let base = |verdicts, syntax_ok| CaseResults {
        first_case,
        verdicts,
        weights: request.suite.iter().map(|c| c.weight).collect(),
        wall_time_ms: vec![0; n],
        extraction_status: source.extraction_status,
        syntax_ok,
        mode: request.mode,
        weighted_reward: request.weighted_reward,
    };

    if source.extraction_status != ExtractionStatus::Extracted {
        let v = classify_failure(Some(source), None, None, &ctx);
        return Ok(base(vec![v; n], false));
    }
    let syntax = sandbox.check_syntax(source)?;
    ctx.syntax = Some(syntax);
    let static_verdict = classify_failure(Some(source), None, None, &ctx);
    if static_verdict != Verdict::Pass {
        return Ok(base(vec![static_verdict; n], syntax == Verdict::Pass));
    }

    let program = match &request.task {
        Some(task) => task.executable(source),
        None => source.clone(),
    };
    let mut out = base(Vec::with_capacity(n), true);
    for (i, case) in request.suite.iter().enumerate() {
        let run = sandbox.run_one(&program, &case.input, &request.limits)?;
        out.verdicts.push(classify_failure(Some(source), Some(&run), Some(&case.expected), &ctx));
        out.wall_time_ms[i] = run.wall_time_ms;
    }
    Ok(out)
}

/// Merge judged slices (in any order) into the response for `job_id`.
pub fn assemble(job_id: &str, mut parts: Vec<CaseResults>) -> Result<JudgeResponse, String> {
    parts.sort_by_key(|p| p.first_case);
    let first = parts.first().ok_or("no results to assemble")?;
    let (extraction_status, mode, weighted) = (first.extraction_status, first.mode, first.weighted_reward);
    let syntax_ok = parts.iter().all(|p| p.syntax_ok);
    let mut verdicts = Vec::new();
    let mut weights = Vec::new();
    let mut wall_time_ms = Vec::new();
    for p in parts {
        if p.first_case != verdicts.len() {
            return Err(format!("case {} missing from results", verdicts.len()));
        }
        verdicts.extend(p.verdicts);
        weights.extend(p.weights);
        wall_time_ms.extend(p.wall_time_ms);
    }
    let passed = verdicts.iter().filter(|v| v.is_pass()).count() as u64;
    let total = verdicts.len() as u64;
    let reward = if mode.wants_reward() {
        let input = if weighted {
            RewardInput::weighted(
                extraction_status,
                syntax_ok,
                weights.iter().zip(&verdicts).map(|(w, v)| (*w, v.is_pass())),
            )
        } else {
            RewardInput { extraction_status, syntax_ok, passed, total }
        };
        Some(compute_reward(&input).map_err(|e| e.to_string())?)
    } else {
        None
    };
    Ok(JudgeResponse {
        job_id: job_id.to_string(),
        verdicts,
        passed,
        total,
        reward,
        wall_time_ms,
        extraction_status,
        syntax_ok,
    })
}

/// Judge and assemble in-process, without a broker.
pub fn judge_locally<S: Sandbox + ?Sized>(
    sandbox: &S,
    job_id: &str,
    request: &ResolvedRequest,
) -> Result<JudgeResponse, SandboxError> {
    let results = judge(sandbox, request, 0)?;
    assemble(job_id, vec![results]).map_err(SandboxError::Setup)
}
