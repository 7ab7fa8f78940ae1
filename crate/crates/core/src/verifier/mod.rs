//! Solution filters, dual verification, solvability filtering and subset
//! selection.
//!
//! Dual verification splits the voted suite into a golden part and a
//! validation part, picks the candidate with the best weighted score on the
//! golden part and confirms that it also has the best plain accuracy on the
//! validation part. Tasks that fail the confirmation are discarded.

mod filter;
mod select;
mod solvability;
mod subset;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{CandidateSuite, WeightedCase};
use crate::output::OutputMatch;
use crate::task::{CandidateSolution, TaskSpec};

pub use filter::{filter_solutions, FilterConfig, FilterReason, SolutionFilterReport};
pub use select::{holdout_confirm, split_suite, weighted_select, SuiteSplit, DEFAULT_GOLDEN_FRACTION};
pub use solvability::{pass_rate_bucket, proxy_passes, solvability_filter, SolvabilityRecord, PASS_RATE_BUCKETS};
pub use subset::{select_subset, DifficultyScorer, SubsetStrategy};

pub const DEFAULT_SPLIT_SEED: u64 = 42;

/// Slack for floating comparisons in relaxed mode.
const RELAXED_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("golden fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("a suite of {cases} cases cannot be split ({golden} golden)")]
    SplitTooSmall { cases: usize, golden: usize },
    #[error("k = {k} exceeds pool size {pool}")]
    SubsetTooLarge { k: usize, pool: usize },
    #[error("difficulty selection needs a scorer")]
    MissingScorer,
    #[error("proxy outcomes cover {got} cases, golden suite has {want}")]
    ProxyLengthMismatch { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Decision {
    Accepted,
    DiscardedHoldoutMismatch,
    DiscardedUnsolvable,
    DiscardedEmptySuite,
}

impl Decision {
    pub const ALL: [Decision; 4] = [
        Decision::Accepted,
        Decision::DiscardedHoldoutMismatch,
        Decision::DiscardedUnsolvable,
        Decision::DiscardedEmptySuite,
    ];
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Hold-out confirmation rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum VerifyMode {
    /// Accept iff the weighted-score winner is also the validation winner
    /// (both lowest-index argmax).
    #[default]
    Strict,
    /// Let `C` be the candidates whose normalized weighted golden score is
    /// within `epsilon` of the best. Pick the member of `C` with the best
    /// validation accuracy (lowest index on ties) and accept it iff that
    /// accuracy is within `epsilon` of the best validation accuracy overall.
    Relaxed { epsilon: f64 },
}

impl VerifyMode {
    pub fn label(&self) -> &'static str {
        match self {
            VerifyMode::Strict => "strict",
            VerifyMode::Relaxed { .. } => "relaxed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    #[serde(default)]
    pub mode: VerifyMode,
    pub golden_fraction: f64,
    pub split_seed: u64,
    #[serde(default)]
    pub matcher: OutputMatch,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            mode: VerifyMode::Strict,
            golden_fraction: DEFAULT_GOLDEN_FRACTION,
            split_seed: DEFAULT_SPLIT_SEED,
            matcher: OutputMatch::Exact,
        }
    }
}

/// Output of dual verification, with everything needed to re-check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedBundle {
    pub task: TaskSpec,
    pub decision: Decision,
    /// Candidate chosen on the golden suite (the golden solution when accepted).
    pub golden_index: Option<usize>,
    pub golden_solution: Option<CandidateSolution>,
    /// Best candidate on the validation suite.
    pub holdout_index: Option<usize>,
    pub golden_suite: Vec<WeightedCase>,
    pub validation_suite: Vec<WeightedCase>,
    /// Weighted golden score per candidate.
    pub scores: Vec<u64>,
    /// Correct validation cases per candidate.
    pub validation_correct: Vec<usize>,
    /// `[candidate][case]` pass tables for both suites.
    pub golden_passes: Vec<Vec<bool>>,
    pub validation_passes: Vec<Vec<bool>>,
    pub config: VerifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solvability: Option<SolvabilityRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl VerifiedBundle {
    /// A task that produced no usable suite.
    pub fn discarded_empty(task: TaskSpec, config: VerifyConfig, reason: impl Into<String>) -> Self {
        VerifiedBundle {
            task,
            decision: Decision::DiscardedEmptySuite,
            golden_index: None,
            golden_solution: None,
            holdout_index: None,
            golden_suite: Vec::new(),
            validation_suite: Vec::new(),
            scores: Vec::new(),
            validation_correct: Vec::new(),
            golden_passes: Vec::new(),
            validation_passes: Vec::new(),
            config,
            solvability: None,
            warnings: vec![reason.into()],
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.decision == Decision::Accepted
    }
}

/// Result of the selection step on precomputed pass tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub accepted: bool,
    /// Golden solution when accepted; the weighted winner otherwise.
    pub chosen: usize,
    pub weighted_winner: usize,
    pub holdout_winner: usize,
}

/// The decision rule on pass tables. Requires at least one candidate and
/// nonempty suites.
pub fn decide(
    golden_weights: &[u32],
    golden_passes: &[Vec<bool>],
    validation_passes: &[Vec<bool>],
    mode: VerifyMode,
) -> Option<Selection> {
    let (j_star, scores) = weighted_select(golden_weights, golden_passes)?;
    let (j_dagger, correct) = holdout_confirm(validation_passes)?;
    match mode {
        VerifyMode::Strict => Some(Selection {
            accepted: j_star == j_dagger,
            chosen: j_star,
            weighted_winner: j_star,
            holdout_winner: j_dagger,
        }),
        VerifyMode::Relaxed { epsilon } => {
            let total_weight: u64 = golden_weights.iter().map(|&w| u64::from(w)).sum();
            let val_len = validation_passes.first().map_or(0, Vec::len);
            if total_weight == 0 || val_len == 0 {
                return None;
            }
            let norm = |s: u64| s as f64 / total_weight as f64;
            let acc = |c: usize| c as f64 / val_len as f64;
            let best_score = norm(scores[j_star]);
            let best_acc = acc(correct[j_dagger]);
            let pick = (0..scores.len())
                .filter(|&j| norm(scores[j]) >= best_score - epsilon - RELAXED_SLACK)
                .fold(None::<usize>, |best, j| match best {
                    Some(b) if correct[b] >= correct[j] => Some(b),
                    _ => Some(j),
                })
                .expect("the weighted winner is always a member");
            Some(Selection {
                accepted: acc(correct[pick]) >= best_acc - epsilon - RELAXED_SLACK,
                chosen: pick,
                weighted_winner: j_star,
                holdout_winner: j_dagger,
            })
        }
    }
}

/// Split the voted suite, select on the golden part and confirm on the
/// validation part.
pub fn dual_verify(
    task: &TaskSpec,
    candidates: &[CandidateSolution],
    suite: &CandidateSuite,
    config: &VerifyConfig,
) -> VerifiedBundle {
    if candidates.is_empty() {
        return VerifiedBundle::discarded_empty(task.clone(), *config, "no candidates");
    }
    let split = match split_suite(&suite.cases, config.golden_fraction, config.split_seed) {
        Ok(split) => split,
        Err(e) => return VerifiedBundle::discarded_empty(task.clone(), *config, e.to_string()),
    };
    let golden_passes = suite.matrix.pass_table(&split.golden, config.matcher);
    let validation_passes = suite.matrix.pass_table(&split.validation, config.matcher);
    let weights: Vec<u32> = split.golden.iter().map(|c| c.weight).collect();
    let (_, scores) = weighted_select(&weights, &golden_passes).expect("candidates nonempty");
    let (_, validation_correct) = holdout_confirm(&validation_passes).expect("candidates nonempty");
    let sel = decide(&weights, &golden_passes, &validation_passes, config.mode)
        .expect("nonempty candidates and suites");
    VerifiedBundle {
        task: task.clone(),
        decision: if sel.accepted { Decision::Accepted } else { Decision::DiscardedHoldoutMismatch },
        golden_index: Some(sel.chosen),
        golden_solution: Some(candidates[sel.chosen].clone()),
        holdout_index: Some(sel.holdout_winner),
        golden_suite: split.golden,
        validation_suite: split.validation,
        scores,
        validation_correct,
        golden_passes,
        validation_passes,
        config: *config,
        solvability: None,
        warnings: Vec::new(),
    }
}

/// Recompute an accepted bundle's selection from its stored pass tables and
/// check it against the stored decision, scores and chosen solution.
pub fn recheck_acceptance(bundle: &VerifiedBundle) -> Result<(), String> {
    if bundle.decision != Decision::Accepted {
        return Ok(());
    }
    let mut seen = std::collections::BTreeSet::new();
    for case in bundle.golden_suite.iter().chain(&bundle.validation_suite) {
        if !seen.insert(case.input_index) {
            return Err(format!("input {} is in both suites", case.input_index));
        }
    }
    let weights: Vec<u32> = bundle.golden_suite.iter().map(|c| c.weight).collect();
    let shape_ok = |table: &[Vec<bool>], len: usize| table.iter().all(|row| row.len() == len);
    if !shape_ok(&bundle.golden_passes, weights.len())
        || !shape_ok(&bundle.validation_passes, bundle.validation_suite.len())
    {
        return Err("pass tables do not match suite sizes".into());
    }
    let (_, scores) = weighted_select(&weights, &bundle.golden_passes).ok_or("no candidates")?;
    if scores != bundle.scores {
        return Err(format!("stored scores {:?} != recomputed {:?}", bundle.scores, scores));
    }
    let sel = decide(&weights, &bundle.golden_passes, &bundle.validation_passes, bundle.config.mode)
        .ok_or("empty suite in accepted bundle")?;
    if !sel.accepted {
        return Err("recomputed selection rejects the bundle".into());
    }
    if bundle.golden_index != Some(sel.chosen) {
        return Err(format!("golden index {:?} != recomputed {}", bundle.golden_index, sel.chosen));
    }
    if let VerifyMode::Strict = bundle.config.mode {
        let best = scores.iter().max().copied().unwrap_or(0);
        let (_, correct) = holdout_confirm(&bundle.validation_passes).ok_or("no candidates")?;
        let best_val = correct.iter().max().copied().unwrap_or(0);
        if scores[sel.chosen] != best || correct[sel.chosen] != best_val {
            return Err("golden solution is not a double argmax".into());
        }
    }
    match &bundle.golden_solution {
        Some(sol) if sol.index == sel.chosen => Ok(()),
        Some(sol) => Err(format!("stored solution has index {}, expected {}", sol.index, sel.chosen)),
        None => Err("accepted bundle without golden solution".into()),
    }
}
