use serde::{Deserialize, Serialize};

use crate::dataset::normalized_score;
use crate::env::Env;
use crate::{Error, Policy, Result};

/// Evaluation episodes start at this seed, far above any training or dataset seed.
pub const EVAL_SEED_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean_return: f64,
    pub normalized_score: f64,
}

/// Episode seed `i` of an evaluation keyed by `seed`.
pub fn eval_episode_seed(seed: u64, episode: usize) -> u64 {
    EVAL_SEED_OFFSET
        .wrapping_add(seed.wrapping_mul(1_000_003))
        .wrapping_add(episode as u64)
}

/// Mean undiscounted return over `n_episodes` and its normalized score.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &mut P,
    env: &Env,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be >= 1".into()));
    }
    let mut total = 0.0;
    for i in 0..n_episodes {
        total += env.rollout(policy, eval_episode_seed(seed, i))?;
    }
    let mean_return = total / n_episodes as f64;
    let spec = env.spec();
    Ok(EvalResult {
        mean_return,
        normalized_score: normalized_score(
            mean_return,
            spec.reference_min_score,
            spec.reference_max_score,
        )?,
    })
}
