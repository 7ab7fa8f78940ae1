//! Majority voting over candidate outputs and test-case weighting.

mod suite;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::output::{normalize_output, OutputMatch};
use crate::sandbox::SandboxError;
use crate::testgen::{Category, TestInput};

pub use suite::{
    build_candidate_suite, execute_matrix, labelled_suite, AuditRow, CandidateSuite, CellOutcome, ExecutionMatrix,
    SuiteConfig,
};

pub const DEFAULT_MIN_CONSENSUS: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("no test inputs supplied")]
    NoInputs,
    #[error("no candidate solutions supplied")]
    NoCandidates,
    #[error("every input was dropped for lack of consensus")]
    EmptySuite,
    #[error("{labels} expected outputs for {inputs} inputs")]
    LabelCount { inputs: usize, labels: usize },
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteResult {
    pub consensus_output: Option<String>,
    pub consensus_ratio: f64,
    /// Normalized output (group representative) to ballot count.
    pub ballots: BTreeMap<String, usize>,
    /// Candidates that cast a valid ballot, ascending.
    pub contributing_candidates: Vec<usize>,
}

/// [`vote_with`] under exact matching.
pub fn vote(outputs: &[Option<String>], min_consensus: f64) -> VoteResult {
    vote_with(outputs, min_consensus, OutputMatch::Exact)
}

/// Plurality vote over per-candidate outputs (`None` = no ballot).
///
/// Outputs are normalized, then grouped: under exact matching by equality,
/// under numeric matching each output joins the first earlier group whose
/// representative it matches. The group with the most ballots wins; ties go
/// to the group whose first ballot came from the lowest candidate index. The
/// winner is withheld when there are no ballots or its share is below
/// `min_consensus`.
pub fn vote_with(outputs: &[Option<String>], min_consensus: f64, matcher: OutputMatch) -> VoteResult {
    // (representative, count, first contributor), in order of first appearance.
    let mut groups: Vec<(String, usize, usize)> = Vec::new();
    let mut contributing = Vec::new();
    for (idx, out) in outputs.iter().enumerate() {
        let Some(out) = out else { continue };
        let norm = normalize_output(out);
        contributing.push(idx);
        match groups.iter_mut().find(|(rep, _, _)| matcher.equivalent(rep, &norm)) {
            Some(group) => group.1 += 1,
            None => groups.push((norm, 1, idx)),
        }
    }
    let total = contributing.len();
    let winner = groups
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|(rep, count, _)| (rep.clone(), *count));
    let ratio = match (&winner, total) {
        (Some((_, count)), t) if t > 0 => *count as f64 / t as f64,
        _ => 0.0,
    };
    let consensus_output = winner.filter(|_| total > 0 && ratio >= min_consensus).map(|(rep, _)| rep);
    let mut ballots = BTreeMap::new();
    for (rep, count, _) in groups {
        *ballots.entry(rep).or_insert(0) += count;
    }
    VoteResult {
        consensus_output,
        consensus_ratio: ratio,
        ballots,
        contributing_candidates: contributing,
    }
}

/// How case weights are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingScheme {
    /// Quartile of input byte size.
    #[default]
    Size,
    /// Test category.
    Semantic,
    /// Every case weighs 1.
    Uniform,
}

impl fmt::Display for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightingScheme::Size => "size",
            WeightingScheme::Semantic => "semantic",
            WeightingScheme::Uniform => "uniform",
        })
    }
}

impl FromStr for WeightingScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "size" => Ok(WeightingScheme::Size),
            "semantic" => Ok(WeightingScheme::Semantic),
            "uniform" => Ok(WeightingScheme::Uniform),
            other => Err(format!("unknown weighting scheme `{other}`")),
        }
    }
}

pub fn weight_semantic(category: Category) -> u32 {
    category.weight()
}

/// Weights 1..=4 by size quartile, aligned with `sizes`.
///
/// Inputs are stable-sorted by size (ties keep their original order). The
/// input at rank `r` (0-based) gets the smallest `k` with
/// `r < ceil(k * n / 4)`.
pub fn weight_by_size(sizes: &[u64]) -> Vec<u32> {
    let n = sizes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| sizes[i]);
    let bounds: Vec<usize> = (1..=4).map(|k| (k * n).div_ceil(4)).collect();
    let mut weights = vec![0u32; n];
    for (rank, &idx) in order.iter().enumerate() {
        let k = bounds.iter().position(|&b| rank < b).expect("rank < n = bounds[3]");
        weights[idx] = k as u32 + 1;
    }
    weights
}

pub fn assign_weights(inputs: &[TestInput], scheme: WeightingScheme) -> Vec<u32> {
    match scheme {
        WeightingScheme::Size => {
            weight_by_size(&inputs.iter().map(|i| i.byte_size).collect::<Vec<_>>())
        }
        WeightingScheme::Semantic => inputs.iter().map(|i| weight_semantic(i.category)).collect(),
        WeightingScheme::Uniform => vec![1; inputs.len()],
    }
}

/// One voted test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCase {
    /// Position of the input in the list the suite was built from.
    pub input_index: usize,
    pub input: TestInput,
    pub expected: String,
    pub weight: u32,
    pub consensus_ratio: f64,
}
