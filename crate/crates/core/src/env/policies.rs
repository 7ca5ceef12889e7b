use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{BehaviorPolicyKind, Dynamics, Env, Move};
use crate::{Error, Policy, Result};

/// Gaussian action-noise scale of the medium policy on continuous tasks.
pub const MEDIUM_ACTION_NOISE: f64 = 0.5;
/// Probability that the medium policy takes a random move on grid tasks.
pub const MEDIUM_RANDOM_MOVE_PROB: f64 = 0.3;

/// Uniform actions: a uniform box on continuous tasks, a uniform move on grids.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    grid: bool,
    bound: f64,
    act_dim: usize,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(env: &Env, seed: u64) -> Self {
        RandomPolicy {
            grid: matches!(env.dynamics(), Dynamics::GridMaze(_)),
            bound: env.spec().action_bound,
            act_dim: env.spec().act_dim,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _observation: &[f64]) -> Result<Vec<f64>> {
        if self.grid {
            let mv = Move::ALL[self.rng.random_range(0..4)];
            return Ok(mv.as_action().to_vec());
        }
        Ok((0..self.act_dim)
            .map(|_| self.rng.random_range(-self.bound..=self.bound))
            .collect())
    }
}

/// The scripted optimal controller of an environment.
#[derive(Debug, Clone)]
pub struct ExpertPolicy {
    env: Env,
}

impl ExpertPolicy {
    pub fn new(env: &Env) -> Self {
        ExpertPolicy { env: env.clone() }
    }
}

impl Policy for ExpertPolicy {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        Ok(self.env.expert_action(observation))
    }
}

/// Data-collection policy for one of the three base dataset flavors.
#[derive(Debug, Clone)]
pub enum BehaviorPolicy {
    Random(RandomPolicy),
    Expert(ExpertPolicy),
    /// Noisy expert.
    Medium {
        expert: ExpertPolicy,
        random: RandomPolicy,
        rng: ChaCha8Rng,
    },
}

impl BehaviorPolicy {
    pub fn new(env: &Env, kind: BehaviorPolicyKind, seed: u64) -> Result<Self> {
        Ok(match kind {
            BehaviorPolicyKind::Random => BehaviorPolicy::Random(RandomPolicy::new(env, seed)),
            BehaviorPolicyKind::Expert => BehaviorPolicy::Expert(ExpertPolicy::new(env)),
            BehaviorPolicyKind::Medium => BehaviorPolicy::Medium {
                expert: ExpertPolicy::new(env),
                random: RandomPolicy::new(env, seed ^ 0x9e37_79b9_7f4a_7c15),
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
            mixed => {
                return Err(Error::InvalidArgument(format!(
                    "{mixed} is a mixture, not a single behavior policy"
                )))
            }
        })
    }
}

impl Policy for BehaviorPolicy {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        match self {
            BehaviorPolicy::Random(p) => p.act(observation),
            BehaviorPolicy::Expert(p) => p.act(observation),
            BehaviorPolicy::Medium {
                expert,
                random,
                rng,
            } => {
                if random.grid {
                    if rng.random::<f64>() < MEDIUM_RANDOM_MOVE_PROB {
                        random.act(observation)
                    } else {
                        expert.act(observation)
                    }
                } else {
                    let noise =
                        Normal::new(0.0, MEDIUM_ACTION_NOISE).expect("positive standard deviation");
                    let bound = random.bound;
                    Ok(expert
                        .act(observation)?
                        .into_iter()
                        .map(|a| (a + noise.sample(rng)).clamp(-bound, bound))
                        .collect())
                }
            }
        }
    }
}
