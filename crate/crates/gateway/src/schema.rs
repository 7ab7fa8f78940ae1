//! Wire types shared by the gateway, its workers and HTTP clients. Every
//! payload is JSON.

use codeverif_core::reward::Reward;
use codeverif_core::sandbox::{extract_code, ExtractionStatus, ProgramSource, ResourceLimits, Verdict};
use codeverif_core::{normalize_output, OutputMatch, TaskSpec};
use serde::{Deserialize, Serialize};

/// What the caller wants back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    Verdicts,
    Reward,
    #[default]
    Both,
}

impl Mode {
    pub fn wants_reward(self) -> bool {
        matches!(self, Mode::Reward | Mode::Both)
    }
}

/// How a request is split into broker jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One job runs the whole suite.
    #[default]
    Request,
    /// One job per test case.
    Case,
}

/// The program to judge: a full model response, plain code, or an already
/// extracted [`ProgramSource`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SolutionInput {
    Program(ProgramSource),
    Code {
        code: String,
    },
    Response {
        raw_response: String,
    },
}

impl SolutionInput {
    pub fn into_source(self) -> ProgramSource {
        match self {
            SolutionInput::Program(p) => p,
            SolutionInput::Code { code } => ProgramSource::from_code(code),
            SolutionInput::Response { raw_response } => extract_code(&raw_response),
        }
    }
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteCase {
    pub input: String,
    pub expected: String,
    #[serde(default = "one")]
    pub weight: u32,
}

/// A judge submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeRequest {
    /// Name of a task file in the gateway's task directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_ref: Option<String>,
    /// Inline task. Without either field the program is judged as a plain
    /// stdin/stdout program.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSpec>,
    pub solution: SolutionInput,
    pub suite: Vec<SuiteCase>,
    /// Defaults to the gateway's limits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<ResourceLimits>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub matcher: OutputMatch,
    /// Count passed weight instead of passed cases in the reward.
    #[serde(default)]
    pub weighted_reward: bool,
    /// Defaults to the gateway's granularity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<Granularity>,
}

impl JudgeRequest {
    /// A plain request judging `code` against `(input, expected)` pairs.
    pub fn simple(code: &str, cases: &[(&str, &str)]) -> Self {
        JudgeRequest {
            task_ref: None,
            task: None,
            solution: SolutionInput::Code { code: code.into() },
            suite: cases
                .iter()
                .map(|(i, e)| SuiteCase { input: (*i).into(), expected: (*e).into(), weight: 1 })
                .collect(),
            limits: None,
            mode: Mode::Both,
            matcher: OutputMatch::Exact,
            weighted_reward: false,
            granularity: None,
        }
    }
}

/// A request after ingest: task resolved, program extracted, expected
/// outputs normalized and limits filled in. This is what workers receive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRequest {
    pub task: Option<TaskSpec>,
    pub source: ProgramSource,
    pub suite: Vec<SuiteCase>,
    pub limits: ResourceLimits,
    pub mode: Mode,
    pub matcher: OutputMatch,
    pub weighted_reward: bool,
}

impl ResolvedRequest {
    pub fn new(request: JudgeRequest, task: Option<TaskSpec>, default_limits: ResourceLimits) -> Self {
        ResolvedRequest {
            task,
            source: request.solution.into_source(),
            suite: request
                .suite
                .into_iter()
                .map(|c| SuiteCase { expected: normalize_output(&c.expected), ..c })
                .collect(),
            limits: request.limits.unwrap_or(default_limits),
            mode: request.mode,
            matcher: request.matcher,
            weighted_reward: request.weighted_reward,
        }
    }
}

/// Payload of one broker job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkItem {
    /// Judge `request.suite`, whose first case is case `first_case` of the
    /// original request.
    Judge { request: Box<ResolvedRequest>, first_case: usize },
    /// No-op job for load tests: echo the text back after `hold_ms`.
    Probe { echo: String, hold_ms: u64 },
}

/// Judged slice of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResults {
    pub first_case: usize,
    pub verdicts: Vec<Verdict>,
    pub weights: Vec<u32>,
    pub wall_time_ms: Vec<u64>,
    pub extraction_status: ExtractionStatus,
    pub syntax_ok: bool,
    pub mode: Mode,
    pub weighted_reward: bool,
}

/// Payload a worker pushes back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkResult {
    Judged { worker_id: String, results: CaseResults },
    Probe { worker_id: String, echo: String, seq: u64 },
    Failed { worker_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub job_id: String,
    pub verdicts: Vec<Verdict>,
    pub passed: u64,
    pub total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Reward>,
    pub wall_time_ms: Vec<u64>,
    pub extraction_status: ExtractionStatus,
    pub syntax_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitBody {
    pub requests: Vec<JudgeRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitReply {
    pub job_ids: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solution_forms() {
        let parse = |v: serde_json::Value| serde_json::from_value::<SolutionInput>(v).unwrap().into_source();
        let code = parse(serde_json::json!({"code": "print(1)"}));
        assert_eq!(code.code(), Some("print(1)"));
        let resp = parse(serde_json::json!({"raw_response": "text\n```python\nprint(2)\n```"}));
        assert_eq!(resp.code(), Some("print(2)"));
        let none = parse(serde_json::json!({"raw_response": "no code here"}));
        assert_eq!(none.extraction_status, ExtractionStatus::NoCodeBlock);
        let program = parse(serde_json::to_value(ProgramSource::from_code("x=1")).unwrap());
        assert_eq!(program.code(), Some("x=1"));
    }

    #[test]
    fn request_defaults_and_ingest() {
        let req: JudgeRequest = serde_json::from_str(
            r#"{"solution": {"code": "print(42)"}, "suite": [{"input": "21\n", "expected": "42  \n\n"}]}"#,
        )
        .unwrap();
        assert_eq!(req.mode, Mode::Both);
        assert_eq!(req.suite[0].weight, 1);
        let resolved = ResolvedRequest::new(req, None, ResourceLimits::default());
        assert_eq!(resolved.suite[0].expected, normalize_output("42"));
        assert!(serde_json::from_str::<JudgeRequest>(r#"{"solution": {"code": ""}, "suite": [], "x": 1}"#).is_err());
    }

    #[test]
    fn work_items_round_trip() {
        let item = WorkItem::Probe { echo: "hi".into(), hold_ms: 3 };
        let text = serde_json::to_string(&item).unwrap();
        assert!(text.contains("\"kind\":\"probe\""));
        assert_eq!(serde_json::from_str::<WorkItem>(&text).unwrap(), item);
    }
}
