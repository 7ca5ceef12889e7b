//! `sawlab`: a desk-scale offline reinforcement-learning laboratory.
//!
//! The crate contains a state-to-state (QSS) offline learner that weights its
//! actor and state-proposal updates by the state advantage
//! `A(s, s') = Q(s, s') - V(s)`, with `V` fitted by expectile regression.
//! D3G and behavior cloning are provided as baselines, together with two toy
//! environments, D4RL-style dataset generation and an experiment harness.
//!
//! Module map:
//! - [`nn`]: dense MLPs, analytic gradients, Adam, Polyak averaging, checkpoints
//! - [`env`]: `PointMass2D` and `GridMaze`, scripted behavior policies, tabular oracles
//! - [`dataset`]: transitions, the binary dataset format, batch sampling, normalized score
//! - [`saw`]: the state-advantage-weighted agent
//! - [`baselines`]: D3G and behavior cloning
//! - [`harness`]: configs, offline and offline-to-online runs, evaluation, reports

pub mod baselines;
pub mod dataset;
pub mod env;
mod error;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod saw;

pub use baselines::{BcAgent, D3gAgent, D3gHyper};
pub use dataset::{normalized_score, Batch, BatchSampler, OfflineDataset, Transition};
pub use env::{BehaviorPolicyKind, Env, EnvSpec, EnvState};
pub use error::{Error, Result};
pub use nn::{AdamState, Gradient, Mlp, OutputActivation};
pub use policy::Policy;
pub use saw::{SawAgent, SawHyper};
