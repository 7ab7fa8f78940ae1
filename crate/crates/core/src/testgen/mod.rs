//! Seeded test-input generation.
//!
//! A [`GeneratorSpec`] is a JSON document:
//!
//! ```json
//! {
//!   "seed": 42,
//!   "cases": [
//!     {"label": "boundary_min", "category": "boundary",
//!      "recipe": [{"line": {"values": [1]}}]}
//!   ]
//! }
//! ```
//!
//! Each case draws from its own [`SplitMix64`] stream seeded by
//! [`rng::derive_seed`]`(seed, label)`, so adding, removing or reordering
//! cases never changes the bytes of the other cases. Corpora are
//! byte-identical across runs and machines.

pub mod generators;
pub mod recipe;
pub mod rng;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generators::{gen_graph, gen_sequence, gen_string, gen_tree, Edge, GraphFlags};
pub use recipe::{Expr, Stmt};
pub use rng::SplitMix64;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum TestgenError {
    #[error("invalid generator parameter: {0}")]
    Param(String),
    #[error("unknown recipe variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate case label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid case label `{0}`: use letters, digits, `_`, `-` or `.`")]
    InvalidLabel(String),
    #[error("case `{label}`: {source}")]
    Case {
        label: String,
        #[source]
        source: Box<TestgenError>,
    },
    #[error("malformed generator spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Test category, with its semantic difficulty weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    #[default]
    #[serde(alias = "Nominal")]
    Nominal,
    #[serde(alias = "Complex")]
    Complex,
    #[serde(alias = "Boundary")]
    Boundary,
    #[serde(alias = "Stress")]
    Stress,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::Nominal, Category::Complex, Category::Boundary, Category::Stress];

    pub fn weight(self) -> u32 {
        match self {
            Category::Nominal => 1,
            Category::Complex => 2,
            Category::Boundary => 3,
            Category::Stress => 4,
        }
    }

    /// Keyword mapping for free-text case descriptions.
    pub fn infer(description: &str) -> Self {
        let d = description.to_lowercase();
        if ["edge", "boundary", "corner"].iter().any(|k| d.contains(k)) {
            Category::Boundary
        } else if ["large", "stress", "maximum", "max "].iter().any(|k| d.contains(k)) {
            Category::Stress
        } else {
            Category::Nominal
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Nominal => "nominal",
            Category::Complex => "complex",
            Category::Boundary => "boundary",
            Category::Stress => "stress",
        })
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub label: String,
    #[serde(default)]
    pub category: Category,
    pub recipe: Vec<Stmt>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub cases: Vec<CaseSpec>,
}

impl GeneratorSpec {
    pub fn from_json(text: &str) -> Result<Self, TestgenError> {
        let spec: GeneratorSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TestgenError> {
        let mut seen = BTreeSet::new();
        for case in &self.cases {
            validate_label(&case.label)?;
            if !seen.insert(case.label.as_str()) {
                return Err(TestgenError::DuplicateLabel(case.label.clone()));
            }
        }
        Ok(())
    }
}

fn validate_label(label: &str) -> Result<(), TestgenError> {
    let ok = !label.is_empty()
        && label != "."
        && label != ".."
        && label.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(TestgenError::InvalidLabel(label.to_string()))
    }
}

/// One generated input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestInput {
    pub label: String,
    pub category: Category,
    pub input_text: String,
    pub byte_size: u64,
}

impl TestInput {
    pub fn new(label: impl Into<String>, category: Category, input_text: impl Into<String>) -> Self {
        let input_text = input_text.into();
        TestInput {
            label: label.into(),
            category,
            byte_size: input_text.len() as u64,
            input_text,
        }
    }
}

pub fn generate_case(seed: u64, case: &CaseSpec) -> Result<TestInput, TestgenError> {
    let mut rng = SplitMix64::for_label(seed, &case.label);
    let text = recipe::render(&case.recipe, &mut rng)
        .map_err(|e| TestgenError::Case { label: case.label.clone(), source: Box::new(e) })?;
    Ok(TestInput::new(case.label.clone(), case.category, text))
}

/// Generate every case in memory, in spec order.
pub fn generate(spec: &GeneratorSpec) -> Result<Vec<TestInput>, TestgenError> {
    spec.validate()?;
    spec.cases.par_iter().map(|case| generate_case(spec.seed, case)).collect()
}

/// Generate the corpus and write one `<label>.in` file per case into
/// `out_dir`, which is created if missing.
pub fn emit_corpus(spec: &GeneratorSpec, out_dir: &Path) -> Result<Vec<TestInput>, TestgenError> {
    let inputs = generate(spec)?;
    fs::create_dir_all(out_dir)?;
    for input in &inputs {
        fs::write(out_dir.join(format!("{}.in", input.label)), &input.input_text)?;
    }
    Ok(inputs)
}

/// Read a directory of `.in` files back, sorted by file name. Categories
/// come from the label prefix when it names one, else `Nominal`.
pub fn load_corpus(dir: &Path) -> Result<Vec<TestInput>, TestgenError> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".in"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let text = fs::read_to_string(dir.join(&name))?;
            let label = name.trim_end_matches(".in").to_string();
            let category = label
                .split(['_', '-'])
                .next()
                .and_then(|p| p.parse().ok())
                .unwrap_or_default();
            Ok(TestInput::new(label, category, text))
        })
        .collect()
}
