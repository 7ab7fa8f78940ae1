use serde::{Deserialize, Serialize};

use crate::consensus::WeightedCase;
use crate::testgen::SplitMix64;

use super::VerifyError;

pub const DEFAULT_GOLDEN_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSplit {
    pub golden: Vec<WeightedCase>,
    pub validation: Vec<WeightedCase>,
    pub split_seed: u64,
    pub golden_fraction: f64,
}

/// Shuffle case positions with the seeded stream, give the first
/// `round(fraction * n)` (half away from zero) to the golden part and the
/// rest to validation. Both parts keep the original case order.
pub fn split_suite(cases: &[WeightedCase], fraction: f64, seed: u64) -> Result<SuiteSplit, VerifyError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(VerifyError::InvalidFraction(fraction));
    }
    let n = cases.len();
    let golden_len = (fraction * n as f64).round() as usize;
    if golden_len == 0 || golden_len >= n {
        return Err(VerifyError::SplitTooSmall { cases: n, golden: golden_len });
    }
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let (g, v) = order.split_at_mut(golden_len);
    g.sort_unstable();
    v.sort_unstable();
    Ok(SuiteSplit {
        golden: g.iter().map(|&i| cases[i].clone()).collect(),
        validation: v.iter().map(|&i| cases[i].clone()).collect(),
        split_seed: seed,
        golden_fraction: fraction,
    })
}

/// Index of the first maximum.
pub(crate) fn first_argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// `S_j = sum_i w_i * passes[j][i]`, and the lowest-index maximizer.
/// `None` when there are no candidates.
pub fn weighted_select(weights: &[u32], passes: &[Vec<bool>]) -> Option<(usize, Vec<u64>)> {
    let scores: Vec<u64> = passes
        .iter()
        .map(|row| {
            row.iter()
                .zip(weights)
                .filter(|(ok, _)| **ok)
                .map(|(_, &w)| u64::from(w))
                .sum()
        })
        .collect();
    first_argmax(&scores).map(|j| (j, scores))
}

/// Unweighted correct counts, and the lowest-index maximizer.
pub fn holdout_confirm(passes: &[Vec<bool>]) -> Option<(usize, Vec<usize>)> {
    let counts: Vec<usize> = passes.iter().map(|row| row.iter().filter(|ok| **ok).count()).collect();
    first_argmax(&counts).map(|j| (j, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testgen::TestInput;

    fn cases(n: usize) -> Vec<WeightedCase> {
        (0..n)
            .map(|i| WeightedCase {
                input_index: i,
                input: TestInput::new(format!("c{i}"), Default::default(), i.to_string()),
                expected: i.to_string(),
                weight: 1,
                consensus_ratio: 1.0,
            })
            .collect()
    }

    #[test]
    fn split_sizes() {
        let s = split_suite(&cases(10), 0.5, 7).unwrap();
        assert_eq!((s.golden.len(), s.validation.len()), (5, 5));
        assert_eq!(s, split_suite(&cases(10), 0.5, 7).unwrap());
        let s = split_suite(&cases(3), 0.5, 7).unwrap();
        assert_eq!((s.golden.len(), s.validation.len()), (2, 1));
        assert!(matches!(split_suite(&cases(1), 0.5, 7), Err(VerifyError::SplitTooSmall { .. })));
        assert!(split_suite(&cases(4), 1.0, 7).is_err());
    }

    #[test]
    fn split_partitions() {
        for seed in 0..50 {
            let s = split_suite(&cases(9), 0.5, seed).unwrap();
            let mut all: Vec<usize> =
                s.golden.iter().chain(&s.validation).map(|c| c.input_index).collect();
            assert!(s.golden.windows(2).all(|w| w[0].input_index < w[1].input_index));
            all.sort();
            assert_eq!(all, (0..9).collect::<Vec<_>>());
        }
    }

    #[test]
    fn weighted_examples() {
        let (j, s) = weighted_select(&[3, 1], &[vec![true, false], vec![false, true]]).unwrap();
        assert_eq!((j, s), (0, vec![3, 1]));
        let (j, _) = weighted_select(&[1, 1], &[vec![true, true], vec![true, true]]).unwrap();
        assert_eq!(j, 0);
        assert!(weighted_select(&[1], &[]).is_none());
    }

    #[test]
    fn uniform_weights_match_holdout_ranking() {
        let passes = vec![vec![true, false, true], vec![true, true, true], vec![false, false, true]];
        let (j, s) = weighted_select(&[1, 1, 1], &passes).unwrap();
        let (k, c) = holdout_confirm(&passes).unwrap();
        assert_eq!(j, k);
        assert_eq!(s, c.iter().map(|&x| x as u64).collect::<Vec<_>>());
    }
}
