//! Output normalization and equivalence.
//!
//! Captured stdout is normalized before it is voted on or compared: trailing
//! whitespace is stripped from every line and trailing blank lines are
//! dropped. Interior content, including leading whitespace and blank lines
//! between data, is preserved byte for byte.

use serde::{Deserialize, Serialize};

/// Default absolute and relative tolerance for [`OutputMatch::Numeric`].
pub const DEFAULT_NUMERIC_TOLERANCE: f64 = 1e-6;

/// Normalize raw program output.
///
/// ```
/// use codeverif_core::normalize_output;
/// assert_eq!(normalize_output("42 \n"), "42");
/// assert_eq!(normalize_output("a\nb\n\n\n"), "a\nb");
/// ```
pub fn normalize_output(raw: &str) -> String {
    let mut lines: Vec<&str> = raw
        .split('\n')
        .map(|line| line.trim_end_matches(|c: char| c.is_whitespace()))
        .collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

/// How two normalized outputs are compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum OutputMatch {
    /// Byte equality of the normalized text.
    #[default]
    Exact,
    /// Whitespace-separated tokens compared pairwise; tokens that both parse
    /// as floats match within `abs_tol` or `rel_tol * max(|a|, |b|)`, all
    /// other tokens must be identical.
    Numeric { abs_tol: f64, rel_tol: f64 },
}

impl OutputMatch {
    pub fn numeric() -> Self {
        OutputMatch::Numeric {
            abs_tol: DEFAULT_NUMERIC_TOLERANCE,
            rel_tol: DEFAULT_NUMERIC_TOLERANCE,
        }
    }

    /// Compare two already-normalized outputs.
    pub fn equivalent(&self, a: &str, b: &str) -> bool {
        match *self {
            OutputMatch::Exact => a == b,
            OutputMatch::Numeric { abs_tol, rel_tol } => {
                let mut left = a.split_whitespace();
                let mut right = b.split_whitespace();
                loop {
                    match (left.next(), right.next()) {
                        (None, None) => return true,
                        (Some(x), Some(y)) => {
                            if x == y {
                                continue;
                            }
                            match (x.parse::<f64>(), y.parse::<f64>()) {
                                (Ok(p), Ok(q)) if p.is_finite() && q.is_finite() => {
                                    let diff = (p - q).abs();
                                    let scale = p.abs().max(q.abs());
                                    if diff > abs_tol && diff > rel_tol * scale {
                                        return false;
                                    }
                                }
                                _ => return false,
                            }
                        }
                        _ => return false,
                    }
                }
            }
        }
    }
}
