use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{AgentKind, RunConfig};
use crate::baselines::{BcAgent, D3gAgent, D3gHyper};
use crate::dataset::Batch;
use crate::env::EnvSpec;
use crate::nn::checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
use crate::nn::Mlp;
use crate::saw::SawAgent;
use crate::{Policy, Result};

/// Any trainable agent the harness can run.
#[derive(Debug, Clone)]
pub enum Agent {
    Saw(SawAgent),
    D3g(D3gAgent),
    Bc(BcAgent),
}

/// Losses and critic statistics of one step; `None` where an agent has no such model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
    pub loss_v: Option<f64>,
    pub loss_q: Option<f64>,
    pub loss_actor: Option<f64>,
    pub loss_fwd: Option<f64>,
    pub loss_pred: Option<f64>,
    pub mean_q: Option<f64>,
    pub max_q: Option<f64>,
    pub max_abs_q: Option<f64>,
}

impl Agent {
    pub fn new(config: &RunConfig, spec: &EnvSpec, seed: u64) -> Result<Self> {
        let (obs, act, bound) = (spec.obs_dim, spec.act_dim, spec.action_bound);
        let net = config.net.clone();
        Ok(match config.agent {
            AgentKind::Saw => Agent::Saw(SawAgent::new(
                obs,
                act,
                bound,
                config.saw.clone(),
                net,
                seed,
            )?),
            AgentKind::D3g => {
                let hyper = D3gHyper {
                    gamma: config.saw.gamma,
                    rho_polyak: config.saw.rho_polyak,
                };
                Agent::D3g(D3gAgent::new(obs, act, bound, hyper, net, seed)?)
            }
            AgentKind::Bc => Agent::Bc(BcAgent::new(obs, act, bound, net, seed)?),
        })
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Saw(_) => AgentKind::Saw,
            Agent::D3g(_) => AgentKind::D3g,
            Agent::Bc(_) => AgentKind::Bc,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Agent::Saw(a) => a.obs_dim(),
            Agent::D3g(a) => a.obs_dim(),
            Agent::Bc(a) => a.obs_dim(),
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        match self {
            Agent::Saw(a) => a.set_learning_rate(lr),
            Agent::D3g(a) => a.set_learning_rate(lr),
            Agent::Bc(a) => a.set_learning_rate(lr),
        }
    }

    pub fn train_step(&mut self, batch: &Batch) -> Result<StepMetrics> {
        Ok(match self {
            Agent::Saw(a) => {
                let s = a.train_step(batch)?;
                StepMetrics {
                    loss_v: Some(s.loss_v),
                    loss_q: Some(s.loss_q),
                    loss_actor: Some(s.loss_actor),
                    loss_fwd: Some(s.loss_fwd),
                    loss_pred: Some(s.loss_pred),
                    mean_q: Some(s.mean_q),
                    max_q: Some(s.max_q),
                    max_abs_q: Some(s.max_abs_q),
                }
            }
            Agent::D3g(a) => {
                let s = a.train_step(batch)?;
                StepMetrics {
                    loss_v: None,
                    loss_q: Some(s.loss_q),
                    loss_actor: Some(s.loss_actor),
                    loss_fwd: Some(s.loss_fwd),
                    loss_pred: Some(s.loss_pred),
                    mean_q: Some(s.mean_q),
                    max_q: Some(s.max_q),
                    max_abs_q: Some(s.max_abs_q),
                }
            }
            Agent::Bc(a) => StepMetrics {
                loss_actor: Some(a.update(batch)?.loss),
                ..StepMetrics::default()
            },
        })
    }

    pub fn act(&self, observation: &[f64]) -> Result<Vec<f64>> {
        match self {
            Agent::Saw(a) => a.act(observation),
            Agent::D3g(a) => a.act(observation),
            Agent::Bc(a) => a.act(observation),
        }
    }

    fn header_and_nets(&self, seed: u64, step: u64) -> Result<(CheckpointHeader, Vec<&Mlp>)> {
        Ok(match self {
            Agent::Saw(a) => (a.checkpoint_header(seed, step)?, a.networks().to_vec()),
            Agent::D3g(a) => (a.checkpoint_header(seed, step)?, a.networks().to_vec()),
            Agent::Bc(a) => (a.checkpoint_header(seed, step)?, a.networks().to_vec()),
        })
    }

    pub fn save(&self, path: &Path, seed: u64, step: u64) -> Result<()> {
        let (header, nets) = self.header_and_nets(seed, step)?;
        write_checkpoint(path, &header, &nets)
    }

    /// Restores parameters; optimizer state starts fresh.
    pub fn load(path: &Path) -> Result<(Self, CheckpointHeader)> {
        let (header, nets) = read_checkpoint(path)?;
        let agent = match header.agent.as_str() {
            "saw" => Agent::Saw(SawAgent::from_checkpoint(&header, nets)?),
            "d3g" => Agent::D3g(D3gAgent::from_checkpoint(&header, nets)?),
            "bc" => Agent::Bc(BcAgent::from_checkpoint(&header, nets)?),
            other => {
                return Err(crate::Error::MalformedHeader(format!(
                    "unknown agent {other:?} in checkpoint"
                )))
            }
        };
        Ok((agent, header))
    }
}

impl Policy for Agent {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        Agent::act(self, observation)
    }
}
