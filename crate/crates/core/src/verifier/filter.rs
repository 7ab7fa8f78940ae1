use serde::{Deserialize, Serialize};

use crate::sandbox::{count_fenced_blocks, Sandbox, SandboxError, Verdict};
use crate::task::{approx_token_count, CandidateSolution, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterReason {
    TaskTooShort,
    MissingTags,
    TooLong,
    MultipleCodeBlocks,
    ASTInvalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Longest accepted response, in approximate tokens.
    pub max_tokens: usize,
    /// Shortest accepted task statement, in approximate tokens.
    pub min_task_tokens: usize,
    /// Require a closed `<think>...</think>` section followed by an answer.
    pub require_think: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { max_tokens: 25_000, min_task_tokens: 200, require_think: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SolutionFilterReport {
    pub kept: Vec<usize>,
    pub rejected: Vec<(usize, FilterReason)>,
}

fn answer_section(response: &str) -> Option<&str> {
    let open = response.find("<think>")?;
    let rest = &response[open..];
    let close = rest.find("</think>")?;
    Some(&rest[close + "</think>".len()..])
}

fn reject_reason<S: Sandbox>(
    sandbox: &S,
    task: &TaskSpec,
    response: &str,
    config: &FilterConfig,
) -> Result<Option<FilterReason>, SandboxError> {
    let answer = match answer_section(response) {
        Some(a) if !a.trim().is_empty() => a,
        _ if config.require_think => return Ok(Some(FilterReason::MissingTags)),
        _ => response,
    };
    if approx_token_count(response) > config.max_tokens {
        return Ok(Some(FilterReason::TooLong));
    }
    if count_fenced_blocks(answer) > 1 {
        return Ok(Some(FilterReason::MultipleCodeBlocks));
    }
    let candidate = CandidateSolution::from_response(0, response);
    if candidate.code().is_none() {
        return Ok(Some(FilterReason::ASTInvalid));
    }
    let program = task.executable(&candidate.source);
    if sandbox.check_syntax(&program)? == Verdict::SyntaxError {
        return Ok(Some(FilterReason::ASTInvalid));
    }
    Ok(None)
}

/// Screen raw responses before they are executed. Checks run in order: task
/// length, think tags, response length, code block count, parse check; the
/// first failing check is the reason. Responses without any extracted code
/// are rejected as `ASTInvalid`.
pub fn filter_solutions<S: Sandbox>(
    sandbox: &S,
    task: &TaskSpec,
    responses: &[String],
    config: &FilterConfig,
) -> Result<SolutionFilterReport, SandboxError> {
    let mut report = SolutionFilterReport::default();
    if task.statement_tokens() < config.min_task_tokens {
        report.rejected = (0..responses.len()).map(|i| (i, FilterReason::TaskTooShort)).collect();
        return Ok(report);
    }
    for (i, response) in responses.iter().enumerate() {
        match reject_reason(sandbox, task, response, config)? {
            Some(reason) => report.rejected.push((i, reason)),
            None => report.kept.push(i),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::{ExecutionOutcome, ProgramSource, ResourceLimits};

    /// Treats any program containing `(:` as unparsable.
    struct ParseOnly;

    impl Sandbox for ParseOnly {
        fn check_syntax(&self, source: &ProgramSource) -> Result<Verdict, SandboxError> {
            Ok(if source.code().unwrap().contains("(:") { Verdict::SyntaxError } else { Verdict::Pass })
        }

        fn run_one(
            &self,
            _: &ProgramSource,
            _: &str,
            _: &ResourceLimits,
        ) -> Result<ExecutionOutcome, SandboxError> {
            unreachable!("filters never execute code")
        }
    }

    fn task(words: usize) -> TaskSpec {
        TaskSpec::plain("t", vec!["word"; words].join(" "))
    }

    fn resp(body: &str) -> String {
        format!("<think>plan</think>\n{body}")
    }

    #[test]
    fn short_task_rejects_everything() {
        let r = filter_solutions(&ParseOnly, &task(150), &vec![resp("```\nx\n```"); 2], &FilterConfig::default())
            .unwrap();
        assert!(r.kept.is_empty());
        assert_eq!(r.rejected, vec![(0, FilterReason::TaskTooShort), (1, FilterReason::TaskTooShort)]);
    }

    #[test]
    fn reasons_in_order() {
        let long = format!("<think>{}</think>\n```\nx\n```", "tok ".repeat(26_000));
        let responses = vec![
            resp("```python\nprint(1)\n```"),
            "```python\nprint(1)\n```".to_string(),
            "<think>never closed".to_string(),
            long,
            resp("```\na\n```\nand\n```\nb\n```"),
            resp("```\ndef f(:\n```"),
            resp("no code at all"),
        ];
        let r = filter_solutions(&ParseOnly, &task(250), &responses, &FilterConfig::default()).unwrap();
        assert_eq!(r.kept, vec![0]);
        assert_eq!(
            r.rejected,
            vec![
                (1, FilterReason::MissingTags),
                (2, FilterReason::MissingTags),
                (3, FilterReason::TooLong),
                (4, FilterReason::MultipleCodeBlocks),
                (5, FilterReason::ASTInvalid),
                (6, FilterReason::ASTInvalid),
            ]
        );
    }

    #[test]
    fn snippets_inside_reasoning_do_not_count() {
        let response = "<think>try\n```\ndraft\n```\n</think>\n```python\nprint(2)\n```".to_string();
        let r = filter_solutions(&ParseOnly, &task(250), &[response], &FilterConfig::default()).unwrap();
        assert_eq!(r.kept, vec![0]);
    }

    #[test]
    fn think_optional() {
        let config = FilterConfig { require_think: false, ..Default::default() };
        let r = filter_solutions(&ParseOnly, &task(250), &["```\nok\n```".to_string()], &config).unwrap();
        assert_eq!(r.kept, vec![0]);
    }
}
