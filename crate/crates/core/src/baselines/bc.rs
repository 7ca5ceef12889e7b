use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Batch;
use crate::nn::checkpoint::{AgentMeta, CheckpointHeader};
use crate::nn::{
    layer_dims, weighted_regression, AdamState, Gradient, Mlp, NetConfig, OutputActivation,
};
use crate::{Error, Policy, Result};

/// Plain state-to-action regression `mean |pi(s) - a|^2`.
#[derive(Debug, Clone)]
pub struct BcAgent {
    pub policy: Mlp,
    action_bound: f64,
    net_config: NetConfig,
    opt: AdamState,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BcStepStats {
    pub loss: f64,
}

impl BcAgent {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        action_bound: f64,
        net_config: NetConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = Mlp::new(
            &layer_dims(obs_dim, &net_config.hidden, act_dim),
            OutputActivation::TanhScaled {
                bound: action_bound,
            },
            &mut rng,
        )?;
        Ok(Self::from_policy(policy, net_config, action_bound))
    }

    pub fn from_policy(policy: Mlp, net_config: NetConfig, action_bound: f64) -> Self {
        let opt = AdamState::new(&policy, net_config.learning_rate);
        BcAgent {
            policy,
            action_bound,
            net_config,
            opt,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy.output_dim()
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.net_config.learning_rate = lr;
        self.opt.learning_rate = lr;
    }

    pub fn loss_grad(&self, batch: &Batch) -> Result<(f64, Gradient)> {
        weighted_regression(
            &self.policy,
            batch.states.view(),
            batch.actions.view(),
            None,
        )
    }

    pub fn update(&mut self, batch: &Batch) -> Result<BcStepStats> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (loss, grad) = self.loss_grad(batch)?;
        self.opt.step(&mut self.policy, &grad)?;
        Ok(BcStepStats { loss })
    }

    pub fn act_batch(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.policy.forward_batch(states)
    }

    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation".into()));
        }
        self.policy.forward(s)
    }

    pub fn checkpoint_header(&self, seed: u64, step: u64) -> Result<CheckpointHeader> {
        let meta = AgentMeta {
            obs_dim: self.obs_dim(),
            act_dim: self.act_dim(),
            action_bound: self.action_bound,
            net: self.net_config.clone(),
            saw: None,
            gamma: None,
            rho_polyak: None,
        };
        CheckpointHeader::describe("bc", &["policy"], &[&self.policy], seed, step, &meta)
    }

    pub fn networks(&self) -> [&Mlp; 1] {
        [&self.policy]
    }

    pub fn from_checkpoint(header: &CheckpointHeader, nets: Vec<Mlp>) -> Result<Self> {
        header.expect_agent("bc")?;
        let meta = header.agent_meta()?;
        let [policy]: [Mlp; 1] = nets
            .try_into()
            .map_err(|_| Error::MalformedHeader("bc checkpoint needs 1 network".into()))?;
        Ok(Self::from_policy(policy, meta.net, meta.action_bound))
    }
}

impl Policy for BcAgent {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        BcAgent::act(self, observation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Transition;

    fn small() -> NetConfig {
        NetConfig {
            hidden: vec![16, 16],
            learning_rate: 1e-2,
        }
    }

    #[test]
    fn single_transition_is_memorized() {
        let t = Transition {
            s: vec![0.3, -0.2],
            a: vec![0.5, -0.25],
            r: 0.0,
            s_next: vec![0.35, -0.225],
            done: false,
        };
        let batch = Batch::from_transitions([&t]).unwrap();
        let mut agent = BcAgent::new(2, 2, 1.0, small(), 4).unwrap();
        for _ in 0..500 {
            agent.update(&batch).unwrap();
        }
        let a = agent.act(&t.s).unwrap();
        assert!(
            (a[0] - 0.5).abs() < 1e-3 && (a[1] + 0.25).abs() < 1e-3,
            "{a:?}"
        );
    }

    #[test]
    fn rewards_never_enter_the_loss() {
        let mk = |r: f64| Transition {
            s: vec![0.1, 0.2],
            a: vec![0.3, 0.4],
            r,
            s_next: vec![0.0, 0.0],
            done: r > 0.0,
        };
        let agent = BcAgent::new(2, 2, 1.0, small(), 1).unwrap();
        let (la, ga) = agent
            .loss_grad(&Batch::from_transitions([&mk(0.0)]).unwrap())
            .unwrap();
        let (lb, gb) = agent
            .loss_grad(&Batch::from_transitions([&mk(7.0)]).unwrap())
            .unwrap();
        assert_eq!(la, lb);
        assert_eq!(ga, gb);
    }

    #[test]
    fn actions_are_bounded() {
        let agent = BcAgent::new(2, 2, 0.5, small(), 2).unwrap();
        let a = agent.act(&[100.0, -100.0]).unwrap();
        assert!(a.iter().all(|v| v.abs() <= 0.5));
    }
}
