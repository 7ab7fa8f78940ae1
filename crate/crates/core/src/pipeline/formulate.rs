//! Two-stage task formulation and test-input generation through a provider.

use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use crate::task::{EntrySignature, Style, TaskSpec};
use crate::testgen::{self, Category, GeneratorSpec, TestInput};

use super::feature_tree::FeatureTree;
use super::provider::{Provider, ProviderRequest};
use super::PipelineError;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

/// Pull the JSON document out of a reply: the text between the last
/// `<begin>` and the following `<end>`, else the last fenced block, else the
/// whole reply. Surrounding prose is ignored; the document itself must
/// parse.
pub fn parse_structured(reply: &str) -> Result<Value, String> {
    let body = if let Some(start) = reply.rfind("<begin>") {
        let rest = &reply[start + "<begin>".len()..];
        let end = rest.find("<end>").ok_or("`<begin>` without `<end>`")?;
        &rest[..end]
    } else if let Some(code) = crate::sandbox::extract_code(reply).extracted_code {
        return serde_json::from_str(&code).map_err(|e| format!("fenced block is not JSON: {e}"));
    } else {
        reply
    };
    serde_json::from_str(body.trim()).map_err(|e| format!("reply is not JSON: {e}"))
}

/// Ask `provider` up to `max_attempts` times until `parse` accepts the reply.
pub fn ask<T>(
    provider: &dyn Provider,
    task_key: &str,
    kind: &str,
    prompt: &str,
    max_attempts: u32,
    mut parse: impl FnMut(&str) -> Result<T, String>,
) -> Result<T, PipelineError> {
    let mut last_error = String::new();
    for attempt in 0..max_attempts.max(1) {
        let reply = provider.complete(&ProviderRequest { task_key, kind, attempt, prompt })?;
        match parse(&reply) {
            Ok(value) => return Ok(value),
            Err(e) => {
                tracing::debug!(task = task_key, kind, attempt, error = %e, "unusable provider reply");
                last_error = e;
            }
        }
    }
    Err(PipelineError::ProviderFormat {
        task: task_key.into(),
        kind: kind.into(),
        attempts: max_attempts.max(1),
        last_error,
    })
}

#[derive(Debug, Clone, Deserialize)]
struct StageOne {
    #[serde(default)]
    feature_roles: Value,
    #[serde(default)]
    selected_features_tree: FeatureTree,
    integration_strategy: String,
}

#[derive(Debug, Clone, Deserialize)]
struct StageTwo {
    statement: String,
    #[serde(default)]
    entry_signature: Option<String>,
    #[serde(default)]
    harness: Option<String>,
}

fn stage_one_prompt(subtree: &FeatureTree) -> String {
    let tree = serde_json::to_string_pretty(subtree).unwrap_or_default();
    format!(
        "You are designing a competitive programming problem.\n\
         Candidate features, as a JSON tree:\n{tree}\n\n\
         Choose features that fit together naturally. For each chosen feature say whether it is \
         the core of the problem or a supporting element, then describe in one or two sentences \
         how the chosen features combine into one problem.\n\n\
         Reply with a JSON object between <begin> and <end> with the keys \
         \"feature_roles\" (object), \"selected_features_tree\" (same shape as the input tree) and \
         \"integration_strategy\" (string)."
    )
}

fn stage_two_prompt(selected: &FeatureTree, strategy: &str, style: Style) -> String {
    let tree = serde_json::to_string_pretty(selected).unwrap_or_default();
    let format_rules = match style {
        Style::LeetCode => {
            "Write it as a function-style problem with starter code. Include \"entry_signature\" \
             (a Python `class Solution` with one method) and \"harness\" (Python code that reads \
             stdin, calls the method and prints the result)."
        }
        Style::Codeforces => {
            "Write it as a stdin/stdout problem with a short story, formal input and output \
             sections, constraints and one example."
        }
        Style::AtCoder => {
            "Write it as a concise stdin/stdout problem: statement, constraints, input, output and \
             sample sections."
        }
    };
    format!(
        "Write a complete {style}-style programming problem.\n\
         Features:\n{tree}\n\
         How they combine: {strategy}\n\n\
         {format_rules}\n\n\
         Reply with a JSON object between <begin> and <end> with the key \"statement\" and, for \
         function-style problems, \"entry_signature\" and \"harness\"."
    )
}

/// Stage 1 chooses and arranges features; stage 2 writes the statement in
/// `style`. Each stage retries unusable replies up to `max_attempts` times.
pub fn formulate_task(
    task_id: &str,
    subtree: &FeatureTree,
    style: Style,
    provider: &dyn Provider,
    max_attempts: u32,
) -> Result<TaskSpec, PipelineError> {
    let one = ask(provider, task_id, "features", &stage_one_prompt(subtree), max_attempts, |reply| {
        let one: StageOne = serde_json::from_value(parse_structured(reply)?)
            .map_err(|e| format!("stage 1 schema: {e}"))?;
        if one.integration_strategy.trim().is_empty() {
            return Err("empty integration_strategy".into());
        }
        let _ = &one.feature_roles;
        Ok(one)
    })?;
    let selected =
        if one.selected_features_tree.is_leaf() { subtree.clone() } else { one.selected_features_tree };
    let prompt = stage_two_prompt(&selected, &one.integration_strategy, style);
    let two = ask(provider, task_id, "statement", &prompt, max_attempts, |reply| {
        let two: StageTwo = serde_json::from_value(parse_structured(reply)?)
            .map_err(|e| format!("stage 2 schema: {e}"))?;
        if two.statement.trim().is_empty() {
            return Err("empty statement".into());
        }
        if style == Style::LeetCode {
            let sig = two.entry_signature.as_deref().ok_or("missing entry_signature")?;
            EntrySignature::parse(sig).ok_or("entry_signature defines no function")?;
            if two.harness.as_deref().is_none_or(|h| h.trim().is_empty()) {
                return Err("missing harness".into());
            }
        }
        Ok(two)
    })?;
    let leetcode = style == Style::LeetCode;
    Ok(TaskSpec {
        task_id: task_id.into(),
        style,
        statement: two.statement,
        entry_signature: if leetcode { two.entry_signature } else { None },
        harness: if leetcode { two.harness } else { None },
        source_features: selected,
        integration_strategy: one.integration_strategy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputMethod {
    /// The provider writes the inputs directly.
    #[default]
    Prompting,
    /// The provider writes a generator spec that is rendered locally.
    Toolspec,
}

#[derive(Debug, Deserialize)]
struct PromptedCase {
    idx: i64,
    #[serde(default)]
    description: String,
    input_string: String,
}

fn inputs_prompt(task: &TaskSpec, count: usize) -> String {
    format!(
        "Problem:\n{}\n\n\
         Write {count} test inputs for this problem. Mix typical cases, edge cases at the limits \
         of the constraints and large stress cases. Give each input exactly as the program would \
         read it from stdin.\n\n\
         Reply with a JSON array between <begin> and <end>; each element has \"idx\" (integer), \
         \"description\" (string) and \"input_string\" (string).",
        task.statement
    )
}

fn generator_prompt(task: &TaskSpec, count: usize, seed: u64) -> String {
    format!(
        "Problem:\n{}\n\n\
         Describe {count} test inputs as a generator spec: a JSON object with \"seed\" ({seed}) \
         and \"cases\", a list of {{\"label\", \"category\", \"recipe\"}} where category is one of \
         nominal, complex, boundary, stress and recipe is a list of statements (let, line, text, \
         sequence, string, tree, graph, repeat).\n\n\
         Reply with the JSON object between <begin> and <end>.",
        task.statement
    )
}

fn parse_prompted(reply: &str) -> Result<Vec<TestInput>, String> {
    let value = parse_structured(reply)?;
    let list = match value {
        Value::Array(_) => value,
        Value::Object(mut map) => map
            .remove("test_cases")
            .or_else(|| map.remove("cases"))
            .ok_or("expected an array of cases")?,
        _ => return Err("expected an array of cases".into()),
    };
    let cases: Vec<PromptedCase> =
        serde_json::from_value(list).map_err(|e| format!("case schema: {e}"))?;
    if cases.is_empty() {
        return Err("no test cases in reply".into());
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut inputs = Vec::with_capacity(cases.len());
    for case in cases {
        if !seen.insert(case.idx) {
            return Err(format!("duplicate idx {}", case.idx));
        }
        let category = Category::infer(&case.description);
        inputs.push(TestInput::new(format!("{category}_{:02}", case.idx), category, case.input_string));
    }
    Ok(inputs)
}

/// Ask the provider for test inputs. In toolspec mode a spec without a seed
/// gets `seed`, and the corpus is written to `corpus_dir` when given.
pub fn generate_inputs(
    task: &TaskSpec,
    method: InputMethod,
    provider: &dyn Provider,
    count: usize,
    seed: u64,
    max_attempts: u32,
    corpus_dir: Option<&Path>,
) -> Result<Vec<TestInput>, PipelineError> {
    match method {
        InputMethod::Prompting => {
            ask(provider, &task.task_id, "inputs", &inputs_prompt(task, count), max_attempts, parse_prompted)
        }
        InputMethod::Toolspec => {
            let prompt = generator_prompt(task, count, seed);
            let spec = ask(provider, &task.task_id, "generator", &prompt, max_attempts, |reply| {
                let mut value = parse_structured(reply)?;
                if let Value::Object(map) = &mut value {
                    map.entry("seed").or_insert(Value::from(seed));
                }
                let spec: GeneratorSpec =
                    serde_json::from_value(value).map_err(|e| format!("generator spec: {e}"))?;
                spec.validate().map_err(|e| e.to_string())?;
                if spec.cases.is_empty() {
                    return Err("generator spec has no cases".into());
                }
                Ok(spec)
            })?;
            let inputs = match corpus_dir {
                Some(dir) => testgen::emit_corpus(&spec, dir)?,
                None => testgen::generate(&spec)?,
            };
            Ok(inputs)
        }
    }
}
