//! Untrusted program execution and the verdict taxonomy.
//!
//! Candidate programs arrive embedded in free-form model responses. They are
//! extracted with [`extract_code`], parse-checked without being executed, run
//! under time, memory and output limits by a [`Sandbox`], and the results are
//! folded into a single [`Verdict`] by [`classify_failure`].

mod classify;
mod extract;
mod process;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{classify_failure, ClassifyContext};
pub use extract::{count_fenced_blocks, extract_code};
pub use process::{ProcessSandbox, RuntimeSpec};

/// Outcome of pulling a program out of a model response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtractionStatus {
    Extracted,
    NoCodeBlock,
    IncompleteCodeBlock,
}

/// A model response and the program found in it.
///
/// `extracted_code` is `Some` exactly when `extraction_status` is
/// [`ExtractionStatus::Extracted`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSource {
    pub raw_response: String,
    pub extracted_code: Option<String>,
    pub extraction_status: ExtractionStatus,
}

impl ProgramSource {
    /// A source that is already plain code (no surrounding response).
    pub fn from_code(code: impl Into<String>) -> Self {
        let code = code.into();
        ProgramSource {
            raw_response: code.clone(),
            extracted_code: Some(code),
            extraction_status: ExtractionStatus::Extracted,
        }
    }

    pub fn code(&self) -> Option<&str> {
        self.extracted_code.as_deref()
    }
}

/// Per-run resource limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub wall_time_ms: u64,
    pub cpu_time_ms: u64,
    pub memory_bytes: u64,
    pub output_cap_bytes: u64,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        ResourceLimits {
            wall_time_ms: 6_000,
            cpu_time_ms: 4_000,
            memory_bytes: 1 << 30,
            output_cap_bytes: 64 << 20,
        }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        let fields = [
            ("wall_time_ms", self.wall_time_ms),
            ("cpu_time_ms", self.cpu_time_ms),
            ("memory_bytes", self.memory_bytes),
            ("output_cap_bytes", self.output_cap_bytes),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(SandboxError::InvalidLimits(format!("{name} must be positive")));
        }
        if self.wall_time_ms < self.cpu_time_ms {
            return Err(SandboxError::InvalidLimits(
                "wall_time_ms must be at least cpu_time_ms".into(),
            ));
        }
        Ok(())
    }
}

/// Judge verdicts: the seven failure classes of the failure taxonomy plus
/// `Pass` and `RuntimeError`, a catch-all for programs that exit nonzero
/// without hitting a limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    WrongAnswer,
    TimeLimitExceeded,
    MemoryLimitExceeded,
    NoCodeBlock,
    IncompleteCodeBlock,
    SignatureMismatch,
    SyntaxError,
    RuntimeError,
}

impl Verdict {
    pub const ALL: [Verdict; 9] = [
        Verdict::Pass,
        Verdict::WrongAnswer,
        Verdict::TimeLimitExceeded,
        Verdict::MemoryLimitExceeded,
        Verdict::NoCodeBlock,
        Verdict::IncompleteCodeBlock,
        Verdict::SignatureMismatch,
        Verdict::SyntaxError,
        Verdict::RuntimeError,
    ];

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }

    /// Short judge code, e.g. `WA`.
    pub fn code(self) -> &'static str {
        match self {
            Verdict::Pass => "AC",
            Verdict::WrongAnswer => "WA",
            Verdict::TimeLimitExceeded => "TLE",
            Verdict::MemoryLimitExceeded => "MLE",
            Verdict::NoCodeBlock => "NCB",
            Verdict::IncompleteCodeBlock => "ICB",
            Verdict::SignatureMismatch => "SIG",
            Verdict::SyntaxError => "SE",
            Verdict::RuntimeError => "RE",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "Pass",
            Verdict::WrongAnswer => "Wrong Answer",
            Verdict::TimeLimitExceeded => "Time Limit Exceeded",
            Verdict::MemoryLimitExceeded => "Memory Limit Exceeded",
            Verdict::NoCodeBlock => "No Code Block",
            Verdict::IncompleteCodeBlock => "Incomplete Code Block",
            Verdict::SignatureMismatch => "Signature Mismatch",
            Verdict::SyntaxError => "Syntax Error",
            Verdict::RuntimeError => "Runtime Error",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.code().eq_ignore_ascii_case(s) || format!("{v:?}") == s)
            .ok_or_else(|| format!("unknown verdict `{s}`"))
    }
}

/// One run of one program on one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub verdict: Verdict,
    pub stdout: String,
    pub stderr: String,
    pub wall_time_ms: u64,
    pub cpu_time_ms: u64,
    pub peak_memory_bytes: u64,
    /// Process exit code; `-N` when the process was killed by signal `N`.
    pub exit_code: i32,
    pub stdout_truncated: bool,
}

/// Infrastructure failures. These are never mapped to a user verdict.
#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("runtime `{0}` is not installed")]
    RuntimeMissing(String),
    #[error("sandbox setup failed: {0}")]
    Setup(String),
    #[error("invalid resource limits: {0}")]
    InvalidLimits(String),
    #[error("program source has no extracted code")]
    NoProgram,
    #[error("syntax checker failed: {0}")]
    Checker(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Something that can parse-check and run candidate programs.
pub trait Sandbox: Send + Sync {
    /// Parse-only check; returns [`Verdict::Pass`] or [`Verdict::SyntaxError`].
    fn check_syntax(&self, source: &ProgramSource) -> Result<Verdict, SandboxError>;

    /// Run `source` with `input` on stdin. The returned verdict is one of
    /// `Pass`, `TimeLimitExceeded`, `MemoryLimitExceeded` or `RuntimeError`;
    /// output comparison happens in [`classify_failure`].
    fn run_one(
        &self,
        source: &ProgramSource,
        input: &str,
        limits: &ResourceLimits,
    ) -> Result<ExecutionOutcome, SandboxError>;
}

impl<S: Sandbox + ?Sized> Sandbox for std::sync::Arc<S> {
    fn check_syntax(&self, source: &ProgramSource) -> Result<Verdict, SandboxError> {
        (**self).check_syntax(source)
    }

    fn run_one(
        &self,
        source: &ProgramSource,
        input: &str,
        limits: &ResourceLimits,
    ) -> Result<ExecutionOutcome, SandboxError> {
        (**self).run_one(source, input, limits)
    }
}

impl<S: Sandbox + ?Sized> Sandbox for &S {
    fn check_syntax(&self, source: &ProgramSource) -> Result<Verdict, SandboxError> {
        (**self).check_syntax(source)
    }

    fn run_one(
        &self,
        source: &ProgramSource,
        input: &str,
        limits: &ResourceLimits,
    ) -> Result<ExecutionOutcome, SandboxError> {
        (**self).run_one(source, input, limits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_limits_are_valid() {
        let limits = ResourceLimits::default();
        limits.validate().unwrap();
        assert_eq!(limits.memory_bytes, 1024 * 1024 * 1024);
    }

    #[test]
    fn wall_below_cpu_is_rejected() {
        let limits = ResourceLimits { wall_time_ms: 100, cpu_time_ms: 200, ..Default::default() };
        assert!(limits.validate().is_err());
        let zero = ResourceLimits { memory_bytes: 0, ..Default::default() };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn verdict_codes_round_trip() {
        for v in Verdict::ALL {
            assert_eq!(v.code().parse::<Verdict>().unwrap(), v);
        }
    }
}
