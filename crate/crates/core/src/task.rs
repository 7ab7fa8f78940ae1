//! Task and candidate-solution records shared by every stage.

use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::pipeline::FeatureTree;
use crate::sandbox::{extract_code, ProgramSource};

/// Presentation style of a generated task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Style {
    Codeforces,
    LeetCode,
    AtCoder,
}

impl Style {
    pub const ALL: [Style; 3] = [Style::Codeforces, Style::AtCoder, Style::LeetCode];
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::Codeforces => "Codeforces",
            Style::LeetCode => "LeetCode",
            Style::AtCoder => "AtCoder",
        })
    }
}

impl FromStr for Style {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "codeforces" => Ok(Style::Codeforces),
            "leetcode" => Ok(Style::LeetCode),
            "atcoder" => Ok(Style::AtCoder),
            other => Err(format!("unknown task style `{other}`")),
        }
    }
}

/// A generated programming task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub style: Style,
    pub statement: String,
    /// Starter signature for LeetCode-style tasks, e.g.
    /// `class Solution:\n    def maxProfit(self, prices): ...`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_signature: Option<String>,
    /// Driver appended to LeetCode-style programs so they can be judged over
    /// stdin/stdout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harness: Option<String>,
    #[serde(default)]
    pub source_features: FeatureTree,
    #[serde(default)]
    pub integration_strategy: String,
}

impl TaskSpec {
    /// Minimal stdin/stdout task, used by fixtures and the CLI.
    pub fn plain(task_id: impl Into<String>, statement: impl Into<String>) -> Self {
        TaskSpec {
            task_id: task_id.into(),
            style: Style::Codeforces,
            statement: statement.into(),
            entry_signature: None,
            harness: None,
            source_features: FeatureTree::default(),
            integration_strategy: String::new(),
        }
    }

    pub fn required_entry(&self) -> Option<EntrySignature> {
        match self.style {
            Style::LeetCode => self.entry_signature.as_deref().and_then(EntrySignature::parse),
            _ => None,
        }
    }

    /// The program actually executed for `source`: the extracted code plus the
    /// task harness, when one exists.
    pub fn executable(&self, source: &ProgramSource) -> ProgramSource {
        match (&self.harness, &source.extracted_code) {
            (Some(harness), Some(code)) => ProgramSource {
                raw_response: source.raw_response.clone(),
                extracted_code: Some(format!("{code}\n\n{harness}\n")),
                extraction_status: source.extraction_status,
            },
            _ => source.clone(),
        }
    }

    pub fn statement_tokens(&self) -> usize {
        approx_token_count(&self.statement)
    }
}

/// The entry symbol a LeetCode-style program must define.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrySignature {
    pub class_name: Option<String>,
    pub function: String,
}

impl EntrySignature {
    /// Pull `class X` / `def f` names out of a starter signature.
    pub fn parse(signature: &str) -> Option<Self> {
        let class_re = Regex::new(r"(?m)^\s*class\s+([A-Za-z_]\w*)").expect("static regex");
        let def_re = Regex::new(r"(?m)^\s*def\s+([A-Za-z_]\w*)").expect("static regex");
        let function = def_re.captures(signature)?.get(1)?.as_str().to_string();
        let class_name = class_re
            .captures(signature)
            .and_then(|c| c.get(1))
            .map(|m| m.as_str().to_string());
        Some(EntrySignature { class_name, function })
    }

    /// Static scan: does `code` define the required symbols?
    pub fn is_defined_in(&self, code: &str) -> bool {
        let defines = |kw: &str, name: &str| {
            let pattern = format!(r"(?m)^\s*{kw}\s+{}\b", regex::escape(name));
            Regex::new(&pattern).map(|re| re.is_match(code)).unwrap_or(false)
        };
        let class_ok = self
            .class_name
            .as_deref()
            .is_none_or(|class| defines("class", class));
        class_ok && defines("def", &self.function)
    }
}

/// One model-produced answer: reasoning plus the extracted program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub index: usize,
    pub source: ProgramSource,
    pub reasoning: String,
}

impl CandidateSolution {
    pub fn from_response(index: usize, raw_response: &str) -> Self {
        CandidateSolution {
            index,
            source: extract_code(raw_response),
            reasoning: reasoning_text(raw_response).to_string(),
        }
    }

    pub fn code(&self) -> Option<&str> {
        self.source.extracted_code.as_deref()
    }

    pub fn reasoning_tokens(&self) -> usize {
        approx_token_count(&self.reasoning)
    }
}

/// The reasoning part of a response: the `<think>` body when present,
/// otherwise everything before the first code fence.
pub fn reasoning_text(response: &str) -> &str {
    if let Some(start) = response.find("<think>") {
        let body = &response[start + "<think>".len()..];
        return match body.find("</think>") {
            Some(end) => &body[..end],
            None => body,
        };
    }
    match response.find("```") {
        Some(idx) => &response[..idx],
        None => response,
    }
}

/// Approximate token count: each maximal run of alphanumeric or `_`
/// characters is one token and every other non-whitespace character is a
/// token of its own.
pub fn approx_token_count(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_approximation() {
        assert_eq!(approx_token_count(""), 0);
        assert_eq!(approx_token_count("hello world"), 2);
        assert_eq!(approx_token_count("a+b=c;"), 6);
        assert_eq!(approx_token_count("foo_bar(x, y)"), 6);
    }

    #[test]
    fn entry_signature_scan() {
        let sig = EntrySignature::parse("class Solution:\n    def maxProfit(self, prices):\n        pass")
            .unwrap();
        assert_eq!(sig.class_name.as_deref(), Some("Solution"));
        assert_eq!(sig.function, "maxProfit");
        assert!(sig.is_defined_in("class Solution:\n    def maxProfit(self, p):\n        return 0\n"));
        assert!(!sig.is_defined_in("def maxProfit(prices):\n    return 0\n"));
        assert!(!sig.is_defined_in("class Solution:\n    def other(self):\n        pass\n"));
        assert!(EntrySignature::parse("no functions here").is_none());
    }

    #[test]
    fn reasoning_prefers_think_block() {
        assert_eq!(reasoning_text("<think>abc</think>\n```py\nx\n```"), "abc");
        assert_eq!(reasoning_text("plan first\n```py\nx\n```"), "plan first\n");
        assert_eq!(reasoning_text("<think>cut off"), "cut off");
    }

    #[test]
    fn harness_is_appended() {
        let mut task = TaskSpec::plain("t", "s");
        task.harness = Some("print(Solution().f())".into());
        let src = extract_code("```python\nclass Solution:\n    def f(self): return 1\n```");
        let exe = task.executable(&src);
        assert!(exe.extracted_code.unwrap().ends_with("print(Solution().f())\n"));
    }
}
