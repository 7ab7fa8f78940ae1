#![allow(dead_code)]

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Output, Stdio};

use codeverif_core::pipeline::PipelineConfig;
use codeverif_core::Style;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_codeverif"))
}

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn codeverif")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn write(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

/// Read the child's stdout until a line starting with `prefix`; returns the
/// rest of that line and every line before it.
pub fn read_until(reader: &mut BufReader<ChildStdout>, prefix: &str) -> (String, Vec<String>) {
    let mut seen = Vec::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap() == 0 {
            panic!("stdout closed before `{prefix}`; saw {seen:?}");
        }
        let line = line.trim_end().to_string();
        if let Some(rest) = line.strip_prefix(prefix) {
            return (rest.trim().to_string(), seen);
        }
        seen.push(line);
    }
}

/// A child process that is killed on drop.
pub struct Guard(pub Option<Child>);

impl Guard {
    pub fn spawn(args: &[&str]) -> (Guard, BufReader<ChildStdout>) {
        let mut child = bin()
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn codeverif");
        let out = BufReader::new(child.stdout.take().unwrap());
        (Guard(Some(child)), out)
    }

    pub fn pid(&self) -> u32 {
        self.0.as_ref().unwrap().id()
    }

    /// SIGTERM, then wait.
    pub fn terminate(mut self) -> std::process::ExitStatus {
        let mut child = self.0.take().unwrap();
        Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
        child.wait().unwrap()
    }

    /// SIGKILL, then wait.
    pub fn kill(mut self) {
        let mut child = self.0.take().unwrap();
        let _ = child.kill();
        let _ = child.wait();
    }
}

impl Drop for Guard {
    fn drop(&mut self) {
        if let Some(mut child) = self.0.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn fenced(code: &str) -> String {
    format!("<think>Read the numbers and add them.</think>\n```python\n{code}\n```\n")
}

/// How a fixture task should come out of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    Unsolvable,
    /// Every candidate lacks reasoning tags and is filtered out.
    Filtered,
}

/// Provider replies for a "sum the list" task.
pub fn write_task(root: &Path, id: &str, style: Style, outcome: Outcome, salt: usize) {
    let dir = root.join("replies").join(id);
    write(
        &dir.join("features.txt"),
        r#"<begin>{"feature_roles": {"array/prefix sum": "core"},
 "selected_features_tree": {"array": ["prefix sum"]},
 "integration_strategy": "A single pass accumulates the values."}<end>"#,
    );
    let statement = "Given n integers on the second line of input, print their sum. \
                     The first line holds n. Values fit in 64-bit integers.";
    let leet = style == Style::LeetCode;
    let stage_two = if leet {
        serde_json::json!({
            "statement": statement,
            "entry_signature": "class Solution:\n    def total(self, nums):",
            "harness": "import sys\n_d = sys.stdin.read().split()\nprint(Solution().total(list(map(int, _d[1:]))))",
        })
    } else {
        serde_json::json!({"statement": statement})
    };
    write(&dir.join("statement.txt"), &format!("<begin>{stage_two}<end>"));
    let cases: Vec<_> = (1..=6)
        .map(|i| {
            let nums: Vec<String> = (0..i * 3).map(|k| ((k * 7 + i + salt) % 11).to_string()).collect();
            let desc = if i == 6 { "large stress case" } else if i == 1 { "edge case" } else { "typical" };
            serde_json::json!({"idx": i, "description": desc,
                               "input_string": format!("{}\n{}\n", nums.len(), nums.join(" "))})
        })
        .collect();
    write(&dir.join("inputs.txt"), &format!("Here you go.\n<begin>{}<end>", serde_json::Value::from(cases)));

    let (good, good_alt, wrong, proxy_bad) = if leet {
        (
            "class Solution:\n    def total(self, nums):\n        return sum(nums)",
            "class Solution:\n    def total(self, nums):\n        s = 0\n        for x in nums:\n            s += x\n        return s",
            "class Solution:\n    def total(self, nums):\n        return max(nums)",
            "class Solution:\n    def total(self, nums):\n        return -1",
        )
    } else {
        (
            "import sys\nd = sys.stdin.read().split()\nprint(sum(map(int, d[1:])))",
            "n = int(input())\nprint(sum(int(x) for x in input().split()))",
            "n = int(input())\nprint(max(int(x) for x in input().split()))",
            "print(-1)",
        )
    };
    let wrap = |code: &str| {
        if outcome == Outcome::Filtered {
            format!("```python\n{code}\n```\n")
        } else {
            fenced(code)
        }
    };
    write(&dir.join("candidate-0.txt"), &wrap(good));
    write(&dir.join("candidate-1.txt"), &wrap(wrong));
    write(&dir.join("candidate-2.txt"), &wrap(good_alt));
    write(&dir.join("candidate-3.txt"), &format!("```python\n{good}\n```\n"));
    let proxy = if outcome == Outcome::Unsolvable { proxy_bad } else { good };
    write(&dir.join("proxy.txt"), &fenced(proxy));
}

/// Write a fixture pipeline of `tasks` tasks under `root` and return the
/// config path. Every fifth task is unsolvable and every seventh is
/// filtered out.
pub fn pipeline_fixture(root: &Path, tasks: usize, seed: u64) -> PathBuf {
    let ids: Vec<String> = (0..tasks).map(|i| format!("task-{i:02}")).collect();
    let config = serde_json::json!({
        "seed": seed,
        "task_ids": ids,
        "feature_trees": ["features.json"],
        "candidates": 4,
        "inputs": 6,
        "filter": {"max_tokens": 25000, "min_task_tokens": 10, "require_think": true},
        "max_in_flight": 2,
        "provider": {"kind": "fixture", "dir": "replies"}
    });
    write(&root.join("features.json"), r#"{"array": ["prefix sum", "two pointers"], "math": ["modular arithmetic"]}"#);
    let path = root.join("pipeline.json");
    write(&path, &serde_json::to_string_pretty(&config).unwrap());
    let loaded = PipelineConfig::load(&path).unwrap();
    for (i, id) in ids.iter().enumerate() {
        let outcome = if i % 7 == 6 {
            Outcome::Filtered
        } else if i % 5 == 4 {
            Outcome::Unsolvable
        } else {
            Outcome::Accepted
        };
        write_task(root, id, loaded.planned_style(id), outcome, i);
    }
    path
}

/// Every file under `dir` (recursively), as (relative path, bytes), sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
