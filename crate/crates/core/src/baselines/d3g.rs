//! D3G: a QSS critic bootstrapped through a learned next-state proposal.
//!
//! Critics `Q_i(s, s')` regress toward `r + gamma (1 - d) min_i Q'_i(s', tau'(s'))`,
//! where `tau'` is a Polyak-averaged copy of the prediction model. Nothing
//! restrains the proposal to dataset states, which is where the critic's
//! estimates blow up.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Batch;
use crate::nn::checkpoint::{AgentMeta, CheckpointHeader};
use crate::nn::{
    hcat, layer_dims, polyak_update, weighted_regression, AdamState, Gradient, Mlp, NetConfig,
    OutputActivation,
};
use crate::saw::forward_model_loss_grad;
use crate::{Error, Policy, Result};

pub const NETWORK_NAMES: [&str; 8] = [
    "critic_1",
    "critic_2",
    "target_1",
    "target_2",
    "prediction",
    "prediction_target",
    "actor",
    "forward",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D3gHyper {
    pub gamma: f64,
    pub rho_polyak: f64,
}

impl Default for D3gHyper {
    fn default() -> Self {
        D3gHyper {
            gamma: 0.99,
            rho_polyak: 0.005,
        }
    }
}

impl D3gHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma {} outside (0, 1)",
                self.gamma
            )));
        }
        if !(self.rho_polyak > 0.0 && self.rho_polyak <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rho_polyak {} outside (0, 1]",
                self.rho_polyak
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct D3gStepStats {
    /// Mean of the two critic losses.
    pub loss_q: f64,
    pub loss_actor: f64,
    pub loss_fwd: f64,
    pub loss_pred: f64,
    /// Mean / max / max-abs of `min(Q'_1, Q'_2)(s, s')` on dataset pairs.
    pub mean_q: f64,
    pub max_q: f64,
    pub max_abs_q: f64,
    /// Largest `|min_i Q'_i(s', tau'(s'))|` bootstrapped this step.
    pub max_abs_bootstrap: f64,
}

#[derive(Debug, Clone)]
pub struct D3gAgent {
    pub critic_1: Mlp,
    pub critic_2: Mlp,
    pub target_1: Mlp,
    pub target_2: Mlp,
    pub prediction: Mlp,
    pub prediction_target: Mlp,
    pub actor: Mlp,
    pub forward_model: Mlp,
    pub hyper: D3gHyper,
    obs_dim: usize,
    act_dim: usize,
    action_bound: f64,
    net_config: NetConfig,
    critic_1_opt: AdamState,
    critic_2_opt: AdamState,
    prediction_opt: AdamState,
    actor_opt: AdamState,
    forward_opt: AdamState,
    /// Running maximum of `max_abs_q` over all steps.
    q_monitor: f64,
}

fn column(a: &Array2<f64>) -> Array1<f64> {
    a.column(0).to_owned()
}

fn min2(a: &Array1<f64>, b: &Array1<f64>) -> Array1<f64> {
    ndarray::Zip::from(a).and(b).map_collect(|&x, &y| x.min(y))
}

fn max_abs(a: &Array1<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl D3gAgent {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        action_bound: f64,
        hyper: D3gHyper,
        net_config: NetConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = &net_config.hidden;
        let id = OutputActivation::Identity;
        let critic_1 = Mlp::new(&layer_dims(2 * obs_dim, h, 1), id, &mut rng)?;
        let critic_2 = Mlp::new(&layer_dims(2 * obs_dim, h, 1), id, &mut rng)?;
        let prediction = Mlp::new(&layer_dims(obs_dim, h, obs_dim), id, &mut rng)?;
        let actor = Mlp::new(
            &layer_dims(2 * obs_dim, h, act_dim),
            OutputActivation::TanhScaled {
                bound: action_bound,
            },
            &mut rng,
        )?;
        let forward_model = Mlp::new(&layer_dims(obs_dim + act_dim, h, obs_dim), id, &mut rng)?;
        Self::from_networks(
            [
                critic_1.clone(),
                critic_2.clone(),
                critic_1,
                critic_2,
                prediction.clone(),
                prediction,
                actor,
                forward_model,
            ],
            hyper,
            net_config,
            action_bound,
        )
    }

    /// Assembles an agent from networks in [`NETWORK_NAMES`] order, with fresh optimizers.
    pub fn from_networks(
        nets: [Mlp; 8],
        hyper: D3gHyper,
        net_config: NetConfig,
        action_bound: f64,
    ) -> Result<Self> {
        hyper.validate()?;
        let [critic_1, critic_2, target_1, target_2, prediction, prediction_target, actor, forward_model] =
            nets;
        let obs_dim = prediction.input_dim();
        let act_dim = actor.output_dim();
        let shape_ok = critic_1.input_dim() == 2 * obs_dim
            && critic_1.output_dim() == 1
            && critic_2.same_architecture(&critic_1)
            && target_1.same_architecture(&critic_1)
            && target_2.same_architecture(&critic_2)
            && prediction.output_dim() == obs_dim
            && prediction_target.same_architecture(&prediction)
            && actor.input_dim() == 2 * obs_dim
            && forward_model.input_dim() == obs_dim + act_dim
            && forward_model.output_dim() == obs_dim;
        if !shape_ok {
            return Err(Error::Shape("inconsistent D3G network shapes".into()));
        }
        let lr = net_config.learning_rate;
        Ok(D3gAgent {
            critic_1_opt: AdamState::new(&critic_1, lr),
            critic_2_opt: AdamState::new(&critic_2, lr),
            prediction_opt: AdamState::new(&prediction, lr),
            actor_opt: AdamState::new(&actor, lr),
            forward_opt: AdamState::new(&forward_model, lr),
            critic_1,
            critic_2,
            target_1,
            target_2,
            prediction,
            prediction_target,
            actor,
            forward_model,
            hyper,
            obs_dim,
            act_dim,
            action_bound,
            net_config,
            q_monitor: 0.0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.net_config.learning_rate = lr;
        for opt in [
            &mut self.critic_1_opt,
            &mut self.critic_2_opt,
            &mut self.prediction_opt,
            &mut self.actor_opt,
            &mut self.forward_opt,
        ] {
            opt.learning_rate = lr;
        }
    }

    /// Largest `|Q|` seen by the divergence monitor so far.
    pub fn q_monitor(&self) -> f64 {
        self.q_monitor
    }

    pub fn networks(&self) -> [&Mlp; 8] {
        [
            &self.critic_1,
            &self.critic_2,
            &self.target_1,
            &self.target_2,
            &self.prediction,
            &self.prediction_target,
            &self.actor,
            &self.forward_model,
        ]
    }

    /// `min(Q'_1, Q'_2)(s, s')` per row.
    pub fn target_q(&self, states: ArrayView2<f64>, next: ArrayView2<f64>) -> Result<Array1<f64>> {
        let x = hcat(states, next);
        let q1 = column(&self.target_1.forward_batch(x.view())?);
        let q2 = column(&self.target_2.forward_batch(x.view())?);
        Ok(min2(&q1, &q2))
    }

    /// Bootstrapped values `min_i Q'_i(s', tau'(s'))`.
    pub fn bootstrap_values(&self, next: ArrayView2<f64>) -> Result<Array1<f64>> {
        let proposal = self.prediction_target.forward_batch(next)?;
        self.target_q(next, proposal.view())
    }

    /// `y = r + gamma (1 - d) min_i Q'_i(s', tau'(s'))`.
    pub fn critic_targets(&self, batch: &Batch) -> Result<Array1<f64>> {
        Ok(self.targets_and_bootstrap(batch)?.0)
    }

    fn targets_and_bootstrap(&self, batch: &Batch) -> Result<(Array1<f64>, Array1<f64>)> {
        let boot = self.bootstrap_values(batch.next_states.view())?;
        let y = &batch.rewards + &((1.0 - &batch.dones) * &boot * self.hyper.gamma);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("D3G critic target".into()));
        }
        Ok((y, boot))
    }

    /// MSE loss and gradient of critic `which` (0 or 1) against fixed targets.
    pub fn critic_loss_grad(
        &self,
        which: usize,
        batch: &Batch,
        y: &Array1<f64>,
    ) -> Result<(f64, Gradient)> {
        let critic = match which {
            0 => &self.critic_1,
            1 => &self.critic_2,
            _ => return Err(Error::InvalidArgument(format!("no critic {which}"))),
        };
        let x = hcat(batch.states.view(), batch.next_states.view());
        let targets = y.view().insert_axis(ndarray::Axis(1));
        weighted_regression(critic, x.view(), targets, None)
    }

    fn step_critics(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let (y, boot) = self.targets_and_bootstrap(batch)?;
        let boot = max_abs(&boot);
        let (l1, g1) = self.critic_loss_grad(0, batch, &y)?;
        let (l2, g2) = self.critic_loss_grad(1, batch, &y)?;
        self.critic_1_opt.step(&mut self.critic_1, &g1)?;
        self.critic_2_opt.step(&mut self.critic_2, &g2)?;
        Ok((0.5 * (l1 + l2), boot))
    }

    fn update_critic_targets(&mut self) -> Result<()> {
        polyak_update(&mut self.target_1, &self.critic_1, self.hyper.rho_polyak)?;
        polyak_update(&mut self.target_2, &self.critic_2, self.hyper.rho_polyak)
    }

    /// Critic step followed by the critic target update.
    pub fn update_critic(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, boot) = self.step_critics(batch)?;
        self.q_monitor = self.q_monitor.max(boot);
        self.update_critic_targets()?;
        Ok(loss)
    }

    /// Unweighted inverse-dynamics imitation `mean |I(s, s') - a|^2`.
    pub fn actor_loss_grad(&self, batch: &Batch) -> Result<(f64, Gradient)> {
        let x = hcat(batch.states.view(), batch.next_states.view());
        weighted_regression(&self.actor, x.view(), batch.actions.view(), None)
    }

    pub fn update_actor(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grad) = self.actor_loss_grad(batch)?;
        self.actor_opt.step(&mut self.actor, &grad)?;
        Ok(loss)
    }

    pub fn forward_loss_grad(&self, batch: &Batch) -> Result<(f64, Gradient)> {
        forward_model_loss_grad(&self.forward_model, batch)
    }

    pub fn update_forward(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grad) = self.forward_loss_grad(batch)?;
        self.forward_opt.step(&mut self.forward_model, &grad)?;
        Ok(loss)
    }

    /// `-mean Q_1(s, s_f) + mean |s_hat - s_f|^2` with `s_hat = tau(s)` and
    /// `s_f = f(s, I(s, s_hat))`; gradient with respect to `tau` only.
    pub fn prediction_loss_grad(&self, batch: &Batch) -> Result<(f64, Gradient)> {
        let (obs, n) = (self.obs_dim, batch.len());
        let nf = n as f64;
        let p_trace = self.prediction.forward_trace(batch.states.view())?;
        let s_hat = p_trace.output();
        let i_in = hcat(batch.states.view(), s_hat.view());
        let i_trace = self.actor.forward_trace(i_in.view())?;
        let f_in = hcat(batch.states.view(), i_trace.output().view());
        let f_trace = self.forward_model.forward_trace(f_in.view())?;
        let s_f = f_trace.output();
        let q_in = hcat(batch.states.view(), s_f.view());
        let q_trace = self.critic_1.forward_trace(q_in.view())?;

        let diff = s_hat - s_f;
        let loss = -q_trace.output().sum() / nf + diff.iter().map(|e| e * e).sum::<f64>() / nf;
        if !loss.is_finite() {
            return Err(Error::NonFinite("D3G prediction loss".into()));
        }

        let q_seed = Array2::from_elem((n, 1), -1.0 / nf);
        let (_, d_q_in) = self.critic_1.backward_trace(&q_trace, q_seed.view())?;
        let d_consistency = diff.mapv(|e| 2.0 * e / nf);
        let d_sf = &d_q_in.slice(s![.., obs..]) - &d_consistency;
        let (_, d_f_in) = self.forward_model.backward_trace(&f_trace, d_sf.view())?;
        let d_action = d_f_in.slice(s![.., obs..]).to_owned();
        let (_, d_i_in) = self.actor.backward_trace(&i_trace, d_action.view())?;
        let d_s_hat = &d_i_in.slice(s![.., obs..]) + &d_consistency;
        let (grad, _) = self.prediction.backward_trace(&p_trace, d_s_hat.view())?;
        Ok((loss, grad))
    }

    pub fn update_prediction(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grad) = self.prediction_loss_grad(batch)?;
        self.prediction_opt.step(&mut self.prediction, &grad)?;
        Ok(loss)
    }

    /// Critics, actor, forward model, prediction model, then all targets.
    pub fn train_step(&mut self, batch: &Batch) -> Result<D3gStepStats> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let q = self.target_q(batch.states.view(), batch.next_states.view())?;
        let (loss_q, boot) = self.step_critics(batch)?;
        let loss_actor = self.update_actor(batch)?;
        let loss_fwd = self.update_forward(batch)?;
        let loss_pred = self.update_prediction(batch)?;
        self.update_critic_targets()?;
        polyak_update(
            &mut self.prediction_target,
            &self.prediction,
            self.hyper.rho_polyak,
        )?;
        let max_abs_q = max_abs(&q);
        self.q_monitor = self.q_monitor.max(max_abs_q).max(boot);
        Ok(D3gStepStats {
            loss_q,
            loss_actor,
            loss_fwd,
            loss_pred,
            mean_q: q.mean().unwrap_or_default(),
            max_q: q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            max_abs_q,
            max_abs_bootstrap: boot,
        })
    }

    /// `a = I(s, tau(s))` for every row.
    pub fn act_batch(&self, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        let proposal = self.prediction.forward_batch(states)?;
        self.actor
            .forward_batch(hcat(states, proposal.view()).view())
    }

    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation".into()));
        }
        let st =
            ArrayView2::from_shape((1, s.len()), s).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.act_batch(st)?.row(0).to_vec())
    }

    pub fn checkpoint_header(&self, seed: u64, step: u64) -> Result<CheckpointHeader> {
        let meta = AgentMeta {
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            action_bound: self.action_bound,
            net: self.net_config.clone(),
            saw: None,
            gamma: Some(self.hyper.gamma),
            rho_polyak: Some(self.hyper.rho_polyak),
        };
        CheckpointHeader::describe("d3g", &NETWORK_NAMES, &self.networks(), seed, step, &meta)
    }

    pub fn from_checkpoint(header: &CheckpointHeader, nets: Vec<Mlp>) -> Result<Self> {
        header.expect_agent("d3g")?;
        let meta = header.agent_meta()?;
        let defaults = D3gHyper::default();
        let hyper = D3gHyper {
            gamma: meta.gamma.unwrap_or(defaults.gamma),
            rho_polyak: meta.rho_polyak.unwrap_or(defaults.rho_polyak),
        };
        let nets: [Mlp; 8] = nets
            .try_into()
            .map_err(|_| Error::MalformedHeader("d3g checkpoint needs 8 networks".into()))?;
        Self::from_networks(nets, hyper, meta.net, meta.action_bound)
    }
}

impl Policy for D3gAgent {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        D3gAgent::act(self, observation)
    }
}
