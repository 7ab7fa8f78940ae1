//! Scalar reward for RL rollouts.
//!
//! ```text
//! R = -2                      no code extracted, or the code does not parse
//! R = 0                       parses, passes no test
//! R = 5.0 * passed / total    otherwise
//! ```
//!
//! `5.0 * passed` is exact in binary64 for any realistic count, so the single
//! division makes `R` the correctly rounded value of the rational `5p/t`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::ExtractionStatus;

pub const NO_CODE_REWARD: f64 = -2.0;
pub const MAX_REWARD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardInput {
    pub extraction_status: ExtractionStatus,
    pub syntax_ok: bool,
    pub passed: u64,
    pub total: u64,
}

impl RewardInput {
    /// Counts where each case contributes its weight instead of 1. Only used
    /// when weighted rewards are explicitly requested.
    pub fn weighted(
        extraction_status: ExtractionStatus,
        syntax_ok: bool,
        cases: impl IntoIterator<Item = (u32, bool)>,
    ) -> Self {
        let (mut passed, mut total) = (0u64, 0u64);
        for (weight, ok) in cases {
            total += u64::from(weight);
            if ok {
                passed += u64::from(weight);
            }
        }
        RewardInput { extraction_status, syntax_ok, passed, total }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub value: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RewardError {
    #[error("passed ({passed}) exceeds total ({total})")]
    PassedExceedsTotal { passed: u64, total: u64 },
    #[error("total must be at least 1 for a program that parses")]
    EmptySuite,
}

pub fn compute_reward(input: &RewardInput) -> Result<Reward, RewardError> {
    if input.extraction_status != ExtractionStatus::Extracted || !input.syntax_ok {
        return Ok(Reward { value: NO_CODE_REWARD });
    }
    if input.total == 0 {
        return Err(RewardError::EmptySuite);
    }
    if input.passed > input.total {
        return Err(RewardError::PassedExceedsTotal { passed: input.passed, total: input.total });
    }
    if input.passed == 0 {
        return Ok(Reward { value: 0.0 });
    }
    Ok(Reward { value: (MAX_REWARD * input.passed as f64) / input.total as f64 })
}
