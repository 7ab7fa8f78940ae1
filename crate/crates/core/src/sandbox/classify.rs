use crate::output::{normalize_output, OutputMatch};
use crate::task::EntrySignature;

use super::{ExecutionOutcome, ExtractionStatus, ProgramSource, Verdict};

/// Static facts gathered about a program before (or instead of) running it.
#[derive(Debug, Clone, Default)]
pub struct ClassifyContext<'a> {
    /// Result of [`super::Sandbox::check_syntax`], when it was run.
    pub syntax: Option<Verdict>,
    /// Entry symbol required by starter-code tasks.
    pub required_entry: Option<&'a EntrySignature>,
    pub matcher: OutputMatch,
}

/// Fold everything known about one judged program into a single verdict.
///
/// Precedence, highest first: `NoCodeBlock`, `IncompleteCodeBlock`,
/// `SyntaxError`, `SignatureMismatch`, `TimeLimitExceeded`,
/// `MemoryLimitExceeded`, `RuntimeError`, `WrongAnswer`, `Pass`. With no
/// source and no outcome there is nothing to judge and the result is
/// `NoCodeBlock`.
pub fn classify_failure(
    source: Option<&ProgramSource>,
    outcome: Option<&ExecutionOutcome>,
    expected: Option<&str>,
    ctx: &ClassifyContext<'_>,
) -> Verdict {
    if source.is_none() && outcome.is_none() {
        return Verdict::NoCodeBlock;
    }
    if let Some(src) = source {
        match src.extraction_status {
            ExtractionStatus::NoCodeBlock => return Verdict::NoCodeBlock,
            ExtractionStatus::IncompleteCodeBlock => return Verdict::IncompleteCodeBlock,
            ExtractionStatus::Extracted => {}
        }
    }
    if ctx.syntax == Some(Verdict::SyntaxError)
        || outcome.is_some_and(|o| o.verdict == Verdict::SyntaxError)
    {
        return Verdict::SyntaxError;
    }
    if let (Some(entry), Some(code)) = (ctx.required_entry, source.and_then(|s| s.code())) {
        if !entry.is_defined_in(code) {
            return Verdict::SignatureMismatch;
        }
    }
    let Some(outcome) = outcome else {
        return Verdict::Pass;
    };
    match outcome.verdict {
        Verdict::Pass | Verdict::WrongAnswer => {}
        other => return other,
    }
    match expected {
        Some(exp) => {
            let got = normalize_output(&outcome.stdout);
            let want = normalize_output(exp);
            if ctx.matcher.equivalent(&got, &want) {
                Verdict::Pass
            } else {
                Verdict::WrongAnswer
            }
        }
        None if outcome.verdict == Verdict::WrongAnswer => Verdict::WrongAnswer,
        None => Verdict::Pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::extract_code;
    use proptest::prelude::*;

    fn outcome(verdict: Verdict, stdout: &str) -> ExecutionOutcome {
        ExecutionOutcome {
            verdict,
            stdout: stdout.into(),
            stderr: String::new(),
            wall_time_ms: 1,
            cpu_time_ms: 1,
            peak_memory_bytes: 0,
            exit_code: 0,
            stdout_truncated: false,
        }
    }

    #[test]
    fn no_fences() {
        let src = extract_code("just words");
        let v = classify_failure(Some(&src), None, None, &ClassifyContext::default());
        assert_eq!(v, Verdict::NoCodeBlock);
    }

    #[test]
    fn missing_class_entry() {
        let entry = EntrySignature::parse("class Solution:\n    def twoSum(self, nums, target):").unwrap();
        let src = extract_code("```python\ndef twoSum(nums, target):\n    return []\n```");
        let ctx = ClassifyContext {
            syntax: Some(Verdict::Pass),
            required_entry: Some(&entry),
            ..Default::default()
        };
        let run = outcome(Verdict::Pass, "[]");
        assert_eq!(classify_failure(Some(&src), Some(&run), Some("[]"), &ctx), Verdict::SignatureMismatch);
    }

    #[test]
    fn mismatch_after_normalization() {
        let src = extract_code("```\nprint(41)\n```");
        let ctx = ClassifyContext::default();
        assert_eq!(
            classify_failure(Some(&src), Some(&outcome(Verdict::Pass, "41\n")), Some("42"), &ctx),
            Verdict::WrongAnswer
        );
        assert_eq!(
            classify_failure(Some(&src), Some(&outcome(Verdict::Pass, "42  \n\n")), Some("42\n"), &ctx),
            Verdict::Pass
        );
    }

    #[test]
    fn limits_outrank_output() {
        let src = extract_code("```\nx\n```");
        let ctx = ClassifyContext::default();
        for v in [Verdict::TimeLimitExceeded, Verdict::MemoryLimitExceeded, Verdict::RuntimeError] {
            assert_eq!(classify_failure(Some(&src), Some(&outcome(v, "42")), Some("42"), &ctx), v);
        }
    }

    fn arb_verdict() -> impl Strategy<Value = Verdict> {
        prop::sample::select(Verdict::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn classification_is_total_and_idempotent(
            response in prop::sample::select(vec![
                "no code", "```\nprint(1)\n```", "```\nprint(1)", "```\nclass Solution:\n  def f(self): pass\n```",
            ]),
            syntax in prop::option::of(prop::sample::select(vec![Verdict::Pass, Verdict::SyntaxError])),
            run_verdict in prop::option::of(arb_verdict()),
            expected in prop::option::of(prop::sample::select(vec!["1", "2"])),
            with_entry in any::<bool>(),
        ) {
            let src = extract_code(response);
            let entry = EntrySignature::parse("class Solution:\n  def f(self):").unwrap();
            let ctx = ClassifyContext {
                syntax,
                required_entry: with_entry.then_some(&entry),
                matcher: OutputMatch::Exact,
            };
            let run = run_verdict.map(|v| outcome(v, "1"));
            let first = classify_failure(Some(&src), run.as_ref(), expected, &ctx);
            let second = classify_failure(Some(&src), run.as_ref(), expected, &ctx);
            prop_assert_eq!(first, second);
            if src.extraction_status == ExtractionStatus::NoCodeBlock {
                prop_assert_eq!(first, Verdict::NoCodeBlock);
            }
        }
    }
}
