//! Toy MDPs with known optima, scripted behavior policies and dataset generation.
//!
//! Two environments are provided:
//! - `pointmass2d`: deterministic, continuous, dense reward.
//! - `gridmaze` (slip 0.1) and `gridmaze-noslip`: stochastic (or not), sparse reward.

mod gridmaze;
mod pointmass;
mod policies;
pub mod tabular;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gridmaze::{
    Cell, GridMaze, GridObservation, Layout, Move, DEFAULT_HORIZON as GRIDMAZE_HORIZON,
    DEFAULT_LAYOUT, DEFAULT_P_SLIP,
};
pub use pointmass::PointMass2D;
pub use policies::{BehaviorPolicy, ExpertPolicy, RandomPolicy};

use crate::dataset::{OfflineDataset, Transition};
use crate::{Error, Policy, Result};

/// Seed of the first reference episode; episode `i` uses `REFERENCE_SEED + i`.
pub const REFERENCE_SEED: u64 = 1_000_000_007;
pub const REFERENCE_EPISODES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub action_bound: f64,
    pub horizon: usize,
    pub deterministic: bool,
    /// `J_r`: mean return of the uniform-random policy.
    pub reference_min_score: f64,
    /// `J_e`: mean return of the scripted expert.
    pub reference_max_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub step_index: usize,
    pub done: bool,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    PointMass(PointMass2D),
    GridMaze(GridMaze),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    spec: EnvSpec,
    dynamics: Dynamics,
}

/// Reference scores as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScores {
    pub env_name: String,
    #[serde(rename = "J_r")]
    pub j_r: f64,
    #[serde(rename = "J_e")]
    pub j_e: f64,
    pub n_episodes: usize,
    pub seed: u64,
}

const FROZEN_POINTMASS: &str = include_str!("../../assets/reference/pointmass2d.json");
const FROZEN_GRIDMAZE: &str = include_str!("../../assets/reference/gridmaze.json");
const FROZEN_GRIDMAZE_NOSLIP: &str = include_str!("../../assets/reference/gridmaze-noslip.json");

pub const ENV_NAMES: [&str; 3] = ["pointmass2d", "gridmaze", "gridmaze-noslip"];

impl Env {
    /// Builds an environment without reference scores (both set to NaN).
    pub fn from_dynamics(name: impl Into<String>, dynamics: Dynamics) -> Self {
        let spec = match &dynamics {
            Dynamics::PointMass(pm) => EnvSpec {
                name: name.into(),
                obs_dim: 2,
                act_dim: 2,
                action_bound: pm.action_bound,
                horizon: pm.horizon,
                deterministic: true,
                reference_min_score: f64::NAN,
                reference_max_score: f64::NAN,
            },
            Dynamics::GridMaze(g) => EnvSpec {
                name: name.into(),
                obs_dim: g.obs_dim(),
                act_dim: 2,
                action_bound: 1.0,
                horizon: g.horizon,
                deterministic: g.p_slip == 0.0,
                reference_min_score: f64::NAN,
                reference_max_score: f64::NAN,
            },
        };
        Env { spec, dynamics }
    }

    /// One of [`ENV_NAMES`], with its frozen reference scores.
    pub fn by_name(name: &str) -> Result<Self> {
        let (dynamics, frozen) = match name {
            "pointmass2d" => (
                Dynamics::PointMass(PointMass2D::default()),
                FROZEN_POINTMASS,
            ),
            "gridmaze" | "gridmaze-noslip" => {
                let p_slip = if name == "gridmaze" {
                    DEFAULT_P_SLIP
                } else {
                    0.0
                };
                let maze = GridMaze::new(
                    Layout::parse(DEFAULT_LAYOUT)?,
                    p_slip,
                    GRIDMAZE_HORIZON,
                    GridObservation::Coordinates,
                )?;
                let frozen = if p_slip > 0.0 {
                    FROZEN_GRIDMAZE
                } else {
                    FROZEN_GRIDMAZE_NOSLIP
                };
                (Dynamics::GridMaze(maze), frozen)
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown environment {other:?} (expected one of {ENV_NAMES:?})"
                )))
            }
        };
        let refs: ReferenceScores = serde_json::from_str(frozen)?;
        Env::from_dynamics(name, dynamics).with_reference(refs.j_r, refs.j_e)
    }

    pub fn with_reference(mut self, j_r: f64, j_e: f64) -> Result<Self> {
        if !(j_e > j_r) {
            return Err(Error::InvalidArgument(format!(
                "reference max {j_e} must exceed reference min {j_r}"
            )));
        }
        self.spec.reference_min_score = j_r;
        self.spec.reference_max_score = j_e;
        Ok(self)
    }

    /// Runs the reference Monte Carlo and caches the result in the spec.
    pub fn with_computed_reference(self) -> Result<Self> {
        let refs = reference_scores(&self)?;
        self.with_reference(refs.j_r, refs.j_e)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn reset(&self, seed: u64) -> EnvState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let observation = match &self.dynamics {
            Dynamics::PointMass(pm) => (0..2)
                .map(|_| rng.random_range(pm.start_low..=pm.start_high))
                .collect(),
            Dynamics::GridMaze(g) => g.observe(g.layout.start),
        };
        EnvState {
            observation,
            step_index: 0,
            done: false,
            rng,
        }
    }

    pub fn step(&self, state: &EnvState, action: &[f64]) -> Result<StepOutcome> {
        if state.done {
            return Err(Error::EpisodeDone);
        }
        if action.len() != self.spec.act_dim {
            return Err(Error::Shape(format!(
                "action length {} != act_dim {}",
                action.len(),
                self.spec.act_dim
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("action".into()));
        }
        let bound = self.spec.action_bound;
        let clamped: Vec<f64> = action.iter().map(|a| a.clamp(-bound, bound)).collect();
        let mut rng = state.rng.clone();
        let step_index = state.step_index + 1;
        let (observation, reward, terminal) = match &self.dynamics {
            Dynamics::PointMass(pm) => pm.transition(&state.observation, &clamped),
            Dynamics::GridMaze(g) => {
                let cell = g.decode(&state.observation);
                let intended = Move::snap(&clamped);
                let executed = if g.p_slip > 0.0 && rng.random::<f64>() < g.p_slip {
                    let others: Vec<Move> =
                        Move::ALL.into_iter().filter(|&m| m != intended).collect();
                    others[rng.random_range(0..others.len())]
                } else {
                    intended
                };
                let next = g.layout.successor(cell, executed);
                let at_goal = next == g.layout.goal;
                (g.observe(next), if at_goal { 1.0 } else { 0.0 }, at_goal)
            }
        };
        let done = terminal || step_index >= self.spec.horizon;
        Ok(StepOutcome {
            state: EnvState {
                observation,
                step_index,
                done,
                rng,
            },
            reward,
            done,
        })
    }

    /// The action actually applied by `step` (clamped; snapped to a unit move on grids).
    pub fn canonical_action(&self, action: &[f64]) -> Vec<f64> {
        let bound = self.spec.action_bound;
        match &self.dynamics {
            Dynamics::PointMass(_) => action.iter().map(|a| a.clamp(-bound, bound)).collect(),
            Dynamics::GridMaze(_) => Move::snap(action).as_action().to_vec(),
        }
    }

    pub fn expert_policy(&self, state: &EnvState) -> Vec<f64> {
        self.expert_action(&state.observation)
    }

    pub fn expert_action(&self, observation: &[f64]) -> Vec<f64> {
        match &self.dynamics {
            Dynamics::PointMass(pm) => pm.expert_action(observation),
            Dynamics::GridMaze(g) => g.expert_move(g.decode(observation)).as_action().to_vec(),
        }
    }

    /// Undiscounted return of one episode.
    pub fn rollout<P: Policy + ?Sized>(&self, policy: &mut P, seed: u64) -> Result<f64> {
        let mut state = self.reset(seed);
        let mut ret = 0.0;
        while !state.done {
            let action = policy.act(&state.observation)?;
            let out = self.step(&state, &action)?;
            ret += out.reward;
            state = out.state;
        }
        Ok(ret)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorPolicyKind {
    Random,
    Medium,
    Expert,
    MediumReplay,
    MediumExpert,
}

impl BehaviorPolicyKind {
    pub const ALL: [BehaviorPolicyKind; 5] = [
        BehaviorPolicyKind::Random,
        BehaviorPolicyKind::Medium,
        BehaviorPolicyKind::Expert,
        BehaviorPolicyKind::MediumReplay,
        BehaviorPolicyKind::MediumExpert,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorPolicyKind::Random => "random",
            BehaviorPolicyKind::Medium => "medium",
            BehaviorPolicyKind::Expert => "expert",
            BehaviorPolicyKind::MediumReplay => "medium_replay",
            BehaviorPolicyKind::MediumExpert => "medium_expert",
        }
    }
}

impl fmt::Display for BehaviorPolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorPolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        BehaviorPolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dataset kind {s:?}")))
    }
}

/// Rolls out `policy` until exactly `count` transitions are collected.
fn collect<P: Policy + ?Sized>(
    env: &Env,
    policy: &mut P,
    count: usize,
    episode_seed: u64,
    out: &mut Vec<Transition>,
) -> Result<()> {
    let mut remaining = count;
    let mut episode = 0u64;
    while remaining > 0 {
        let mut state = env.reset(episode_seed.wrapping_add(episode));
        episode += 1;
        while !state.done && remaining > 0 {
            let action = env.canonical_action(&policy.act(&state.observation)?);
            let step = env.step(&state, &action)?;
            out.push(Transition {
                s: state.observation.clone(),
                a: action,
                r: step.reward,
                s_next: step.state.observation.clone(),
                done: step.done,
            });
            remaining -= 1;
            state = step.state;
        }
    }
    Ok(())
}

/// D4RL-style dataset of exactly `n_transitions` transitions.
///
/// `medium_replay` is the random half followed by the medium half;
/// `medium_expert` is the medium half followed by the expert half.
pub fn generate_dataset(
    env: &Env,
    kind: BehaviorPolicyKind,
    n_transitions: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    if n_transitions == 0 {
        return Err(Error::InvalidArgument("n_transitions must be >= 1".into()));
    }
    use BehaviorPolicyKind as K;
    let parts: Vec<(K, usize)> = match kind {
        K::Random | K::Medium | K::Expert => vec![(kind, n_transitions)],
        K::MediumReplay => vec![
            (K::Random, n_transitions / 2),
            (K::Medium, n_transitions - n_transitions / 2),
        ],
        K::MediumExpert => vec![
            (K::Medium, n_transitions / 2),
            (K::Expert, n_transitions - n_transitions / 2),
        ],
    };
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n_transitions);
    for (part, count) in parts {
        let policy_seed = master.next_u64();
        let episode_seed = master.next_u64();
        let mut policy = BehaviorPolicy::new(env, part, policy_seed)?;
        collect(env, &mut policy, count, episode_seed, &mut transitions)?;
    }
    OfflineDataset::new(
        env.name(),
        env.spec().obs_dim,
        env.spec().act_dim,
        transitions,
        seed,
        kind.as_str(),
    )
}

/// `J_r` and `J_e` by Monte Carlo over [`REFERENCE_EPISODES`] fixed-seed episodes.
pub fn reference_scores(env: &Env) -> Result<ReferenceScores> {
    let mut random = RandomPolicy::new(env, REFERENCE_SEED);
    let mut expert = ExpertPolicy::new(env);
    let (mut sum_r, mut sum_e) = (0.0, 0.0);
    for i in 0..REFERENCE_EPISODES as u64 {
        sum_r += env.rollout(&mut random, REFERENCE_SEED + i)?;
        sum_e += env.rollout(&mut expert, REFERENCE_SEED + i)?;
    }
    Ok(ReferenceScores {
        env_name: env.name().to_string(),
        j_r: sum_r / REFERENCE_EPISODES as f64,
        j_e: sum_e / REFERENCE_EPISODES as f64,
        n_episodes: REFERENCE_EPISODES,
        seed: REFERENCE_SEED,
    })
}
