use serde::{Deserialize, Serialize};

use crate::testgen::SplitMix64;

use super::{VerifiedBundle, VerifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetStrategy {
    Random,
    RationaleLength,
    Difficulty,
}

pub trait DifficultyScorer {
    fn score(&self, bundle: &VerifiedBundle) -> f64;
}

impl<F: Fn(&VerifiedBundle) -> f64> DifficultyScorer for F {
    fn score(&self, bundle: &VerifiedBundle) -> f64 {
        self(bundle)
    }
}

fn top_k_by<K: PartialOrd>(keys: &[K], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    // Descending by key, ascending by index on ties.
    order.sort_by(|&a, &b| keys[b].partial_cmp(&keys[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Choose `k` pool indices, returned ascending.
///
/// `Random` is a seeded uniform sample; `RationaleLength` takes the longest
/// golden-solution reasoning (approximate tokens); `Difficulty` takes the
/// highest scorer values. Ties go to the lower index.
pub fn select_subset(
    pool: &[VerifiedBundle],
    strategy: SubsetStrategy,
    k: usize,
    seed: u64,
    scorer: Option<&dyn DifficultyScorer>,
) -> Result<Vec<usize>, VerifyError> {
    if k > pool.len() {
        return Err(VerifyError::SubsetTooLarge { k, pool: pool.len() });
    }
    match strategy {
        SubsetStrategy::Random => {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            let mut rng = SplitMix64::new(seed);
            for i in 0..k {
                let j = i + rng.index(order.len() - i);
                order.swap(i, j);
            }
            order.truncate(k);
            order.sort_unstable();
            Ok(order)
        }
        SubsetStrategy::RationaleLength => {
            let lengths: Vec<usize> = pool
                .iter()
                .map(|b| b.golden_solution.as_ref().map_or(0, |s| s.reasoning_tokens()))
                .collect();
            Ok(top_k_by(&lengths, k))
        }
        SubsetStrategy::Difficulty => {
            let scorer = scorer.ok_or(VerifyError::MissingScorer)?;
            let scores: Vec<f64> = pool.iter().map(|b| scorer.score(b)).collect();
            Ok(top_k_by(&scores, k))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::ProgramSource;
    use crate::task::{CandidateSolution, TaskSpec};
    use crate::verifier::VerifyConfig;

    fn pool(reasoning_words: &[usize]) -> Vec<VerifiedBundle> {
        reasoning_words
            .iter()
            .map(|&n| {
                let mut b = VerifiedBundle::discarded_empty(TaskSpec::plain("t", "s"), VerifyConfig::default(), "");
                b.golden_solution = Some(CandidateSolution {
                    index: 0,
                    source: ProgramSource::from_code("x"),
                    reasoning: vec!["w"; n].join(" "),
                });
                b
            })
            .collect()
    }

    #[test]
    fn rationale_length_top_k() {
        let p = pool(&[5, 9, 7]);
        assert_eq!(select_subset(&p, SubsetStrategy::RationaleLength, 2, 0, None).unwrap(), vec![1, 2]);
        assert_eq!(top_k_by(&[3, 3, 1], 1), vec![0]);
    }

    #[test]
    fn full_k_is_identity() {
        let p = pool(&[1, 2, 3, 4]);
        let hard = |b: &VerifiedBundle| b.golden_solution.as_ref().unwrap().reasoning.len() as f64;
        for (strategy, scorer) in [
            (SubsetStrategy::Random, None),
            (SubsetStrategy::RationaleLength, None),
            (SubsetStrategy::Difficulty, Some(&hard as &dyn DifficultyScorer)),
        ] {
            assert_eq!(select_subset(&p, strategy, 4, 3, scorer).unwrap(), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn random_is_seeded() {
        let p = pool(&[1; 20]);
        let a = select_subset(&p, SubsetStrategy::Random, 5, 11, None).unwrap();
        assert_eq!(a, select_subset(&p, SubsetStrategy::Random, 5, 11, None).unwrap());
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn errors() {
        let p = pool(&[1, 2]);
        assert_eq!(select_subset(&p, SubsetStrategy::Difficulty, 1, 0, None), Err(VerifyError::MissingScorer));
        assert!(select_subset(&p, SubsetStrategy::Random, 3, 0, None).is_err());
    }
}
