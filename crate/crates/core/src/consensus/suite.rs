use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::output::{normalize_output, OutputMatch};
use crate::sandbox::{ResourceLimits, Sandbox, Verdict};
use crate::task::{CandidateSolution, TaskSpec};
use crate::testgen::TestInput;

use super::{assign_weights, vote_with, ConsensusError, WeightedCase, WeightingScheme, DEFAULT_MIN_CONSENSUS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub weighting: WeightingScheme,
    pub min_consensus: f64,
    pub matcher: OutputMatch,
    pub limits: ResourceLimits,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            weighting: WeightingScheme::default(),
            min_consensus: DEFAULT_MIN_CONSENSUS,
            matcher: OutputMatch::Exact,
            limits: ResourceLimits::default(),
        }
    }
}

/// One candidate on one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub verdict: Verdict,
    /// Normalized stdout; present only for `Pass` runs.
    pub output: Option<String>,
    #[serde(skip)]
    pub wall_time_ms: u64,
}

impl CellOutcome {
    pub fn passes(&self, expected: &str, matcher: OutputMatch) -> bool {
        self.verdict == Verdict::Pass
            && self.output.as_deref().is_some_and(|o| matcher.equivalent(o, expected))
    }
}

/// `cells[candidate][input]`, indexed like the lists the suite was built from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExecutionMatrix {
    pub cells: Vec<Vec<CellOutcome>>,
}

impl ExecutionMatrix {
    /// `passes[candidate][k]` for the given cases.
    pub fn pass_table(&self, cases: &[WeightedCase], matcher: OutputMatch) -> Vec<Vec<bool>> {
        self.cells
            .iter()
            .map(|row| cases.iter().map(|c| row[c.input_index].passes(&c.expected, matcher)).collect())
            .collect()
    }

    pub fn runs(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }
}

/// Per-input voting record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub input_index: usize,
    pub label: String,
    pub ballots: BTreeMap<String, usize>,
    pub consensus_ratio: f64,
    pub chosen: Option<String>,
    pub weight: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSuite {
    pub cases: Vec<WeightedCase>,
    pub matrix: ExecutionMatrix,
    pub audit: Vec<AuditRow>,
    pub dropped_inputs: usize,
}

/// Run every candidate on every input. Candidates without extracted code
/// never run and get `NoCodeBlock` cells.
pub fn execute_matrix<S: Sandbox>(
    sandbox: &S,
    task: &TaskSpec,
    candidates: &[CandidateSolution],
    inputs: &[TestInput],
    limits: &ResourceLimits,
) -> Result<ExecutionMatrix, ConsensusError> {
    if inputs.is_empty() {
        return Err(ConsensusError::NoInputs);
    }
    if candidates.is_empty() {
        return Err(ConsensusError::NoCandidates);
    }
    limits.validate()?;

    let programs: Vec<_> = candidates.iter().map(|c| task.executable(&c.source)).collect();
    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|j| (0..inputs.len()).map(move |i| (j, i)))
        .collect();
    let results: Vec<CellOutcome> = jobs
        .par_iter()
        .map(|&(j, i)| {
            if programs[j].code().is_none() {
                return Ok(CellOutcome {
                    verdict: Verdict::NoCodeBlock,
                    output: None,
                    wall_time_ms: 0,
                });
            }
            let run = sandbox.run_one(&programs[j], &inputs[i].input_text, limits)?;
            let output = (run.verdict == Verdict::Pass).then(|| normalize_output(&run.stdout));
            Ok(CellOutcome { verdict: run.verdict, output, wall_time_ms: run.wall_time_ms })
        })
        .collect::<Result<_, ConsensusError>>()?;
    let mut cells: Vec<Vec<CellOutcome>> = vec![Vec::with_capacity(inputs.len()); candidates.len()];
    for ((j, _), cell) in jobs.into_iter().zip(results) {
        cells[j].push(cell);
    }
    Ok(ExecutionMatrix { cells })
}

/// A suite whose expected outputs are given instead of voted. Every input
/// becomes a case; the audit records each candidate's agreement with the
/// given output.
pub fn labelled_suite<S: Sandbox>(
    sandbox: &S,
    task: &TaskSpec,
    candidates: &[CandidateSolution],
    inputs: &[TestInput],
    expected: &[String],
    config: &SuiteConfig,
) -> Result<CandidateSuite, ConsensusError> {
    if expected.len() != inputs.len() {
        return Err(ConsensusError::LabelCount { inputs: inputs.len(), labels: expected.len() });
    }
    let matrix = execute_matrix(sandbox, task, candidates, inputs, &config.limits)?;
    let weights = assign_weights(inputs, config.weighting);
    let mut cases = Vec::with_capacity(inputs.len());
    let mut audit = Vec::with_capacity(inputs.len());
    for (i, (input, label)) in inputs.iter().zip(expected).enumerate() {
        let label = normalize_output(label);
        let agree = matrix.cells.iter().filter(|row| row[i].passes(&label, config.matcher)).count();
        let ratio = agree as f64 / candidates.len() as f64;
        audit.push(AuditRow {
            input_index: i,
            label: input.label.clone(),
            ballots: BTreeMap::from([(label.clone(), agree)]),
            consensus_ratio: ratio,
            chosen: Some(label.clone()),
            weight: Some(weights[i]),
        });
        cases.push(WeightedCase {
            input_index: i,
            input: input.clone(),
            expected: label,
            weight: weights[i],
            consensus_ratio: ratio,
        });
    }
    Ok(CandidateSuite { cases, matrix, audit, dropped_inputs: 0 })
}

/// Run every candidate on every input, vote per input and attach weights.
///
/// Size weights are computed over all inputs before dropping, so a case's
/// weight does not depend on which other inputs reached consensus.
/// Candidates without extracted code never run and cast no ballots.
pub fn build_candidate_suite<S: Sandbox>(
    sandbox: &S,
    task: &TaskSpec,
    candidates: &[CandidateSolution],
    inputs: &[TestInput],
    config: &SuiteConfig,
) -> Result<CandidateSuite, ConsensusError> {
    let matrix = execute_matrix(sandbox, task, candidates, inputs, &config.limits)?;

    let weights = assign_weights(inputs, config.weighting);
    let mut cases = Vec::new();
    let mut audit = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let slots: Vec<Option<String>> = matrix.cells.iter().map(|row| row[i].output.clone()).collect();
        let result = vote_with(&slots, config.min_consensus, config.matcher);
        let kept = result.consensus_output.clone();
        audit.push(AuditRow {
            input_index: i,
            label: input.label.clone(),
            ballots: result.ballots,
            consensus_ratio: result.consensus_ratio,
            chosen: kept.clone(),
            weight: kept.as_ref().map(|_| weights[i]),
        });
        if let Some(expected) = kept {
            cases.push(WeightedCase {
                input_index: i,
                input: input.clone(),
                expected,
                weight: weights[i],
                consensus_ratio: result.consensus_ratio,
            });
        }
    }
    if cases.is_empty() {
        return Err(ConsensusError::EmptySuite);
    }
    let dropped_inputs = inputs.len() - cases.len();
    Ok(CandidateSuite { cases, matrix, audit, dropped_inputs })
}
