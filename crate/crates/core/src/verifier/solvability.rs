use serde::{Deserialize, Serialize};

use crate::output::{normalize_output, OutputMatch};
use crate::sandbox::{extract_code, ResourceLimits, Sandbox, SandboxError, Verdict};

use super::{Decision, VerifiedBundle, VerifyError};

/// Pass-rate histogram buckets, in display order.
pub const PASS_RATE_BUCKETS: [&str; 7] =
    ["0", "(0,20)", "[20,40)", "[40,60)", "[60,80)", "[80,100)", "100"];

/// Bucket label for `passed / total` as a percentage. `total = 0` maps to "0".
pub fn pass_rate_bucket(passed: usize, total: usize) -> &'static str {
    if total == 0 || passed == 0 {
        return PASS_RATE_BUCKETS[0];
    }
    if passed >= total {
        return PASS_RATE_BUCKETS[6];
    }
    // Exact integer comparison against the 20% edges.
    let fifths = (5 * passed) / total;
    PASS_RATE_BUCKETS[1 + fifths]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolvabilityRecord {
    pub proxy_passed: usize,
    pub proxy_total: usize,
    pub bucket: String,
}

/// Discard an accepted bundle when the proxy solver passes none of its
/// golden cases. Without proxy data the bundle passes through with a warning.
/// Bundles that are already discarded are returned unchanged.
pub fn solvability_filter(
    mut bundle: VerifiedBundle,
    proxy_passes: Option<&[bool]>,
) -> Result<VerifiedBundle, VerifyError> {
    if bundle.decision != Decision::Accepted {
        return Ok(bundle);
    }
    let Some(passes) = proxy_passes else {
        bundle.warnings.push("no proxy outcomes; solvability filter skipped".into());
        return Ok(bundle);
    };
    if passes.len() != bundle.golden_suite.len() {
        return Err(VerifyError::ProxyLengthMismatch {
            got: passes.len(),
            want: bundle.golden_suite.len(),
        });
    }
    let passed = passes.iter().filter(|p| **p).count();
    bundle.solvability = Some(SolvabilityRecord {
        proxy_passed: passed,
        proxy_total: passes.len(),
        bucket: pass_rate_bucket(passed, passes.len()).to_string(),
    });
    if passed == 0 {
        bundle.decision = Decision::DiscardedUnsolvable;
    }
    Ok(bundle)
}

/// Run the proxy solver's raw reply on the bundle's golden suite. A reply
/// without a code block fails every case.
pub fn proxy_passes<S: Sandbox + ?Sized>(
    sandbox: &S,
    bundle: &VerifiedBundle,
    reply: &str,
    limits: &ResourceLimits,
    matcher: OutputMatch,
) -> Result<Vec<bool>, SandboxError> {
    let source = extract_code(reply);
    if source.code().is_none() {
        return Ok(vec![false; bundle.golden_suite.len()]);
    }
    let program = bundle.task.executable(&source);
    bundle
        .golden_suite
        .iter()
        .map(|case| {
            let run = sandbox.run_one(&program, &case.input.input_text, limits)?;
            Ok(run.verdict == Verdict::Pass && matcher.equivalent(&normalize_output(&run.stdout), &case.expected))
        })
        .collect()
}
