use ndarray::{s, Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    advantage_weight, alpha_normalization, expectile_loss, expectile_loss_grad, CriticLoss,
    SawHyper,
};
use crate::dataset::Batch;
use crate::nn::checkpoint::{AgentMeta, CheckpointHeader};
use crate::nn::{
    hcat, layer_dims, polyak_update, weighted_regression, AdamState, Gradient, Mlp, NetConfig,
    OutputActivation,
};
use crate::{Error, Policy, Result};

/// Network order used by checkpoints.
pub const NETWORK_NAMES: [&str; 8] = [
    "value",
    "critic_1",
    "critic_2",
    "target_1",
    "target_2",
    "forward",
    "prediction",
    "actor",
];

#[derive(Debug, Clone)]
pub struct SawAgent {
    pub value: Mlp,
    pub critic_1: Mlp,
    pub critic_2: Mlp,
    pub target_1: Mlp,
    pub target_2: Mlp,
    pub forward_model: Mlp,
    pub prediction: Mlp,
    pub actor: Mlp,
    pub hyper: SawHyper,
    obs_dim: usize,
    act_dim: usize,
    action_bound: f64,
    net_config: NetConfig,
    value_opt: AdamState,
    critic_1_opt: AdamState,
    critic_2_opt: AdamState,
    forward_opt: AdamState,
    prediction_opt: AdamState,
    actor_opt: AdamState,
}

/// Losses and target-critic statistics of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SawStepStats {
    pub loss_v: f64,
    /// Mean of the two critic losses.
    pub loss_q: f64,
    pub loss_actor: f64,
    pub loss_fwd: f64,
    pub loss_pred: f64,
    /// Mean / max / max-abs of `min(Q'_1, Q'_2)(s, s')` over the batch.
    pub mean_q: f64,
    pub max_q: f64,
    pub max_abs_q: f64,
}

fn column(a: &Array2<f64>) -> Array1<f64> {
    a.column(0).to_owned()
}

fn check_finite(values: &Array1<f64>, what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

impl SawAgent {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        action_bound: f64,
        hyper: SawHyper,
        net_config: NetConfig,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = &net_config.hidden;
        let id = OutputActivation::Identity;
        let value = Mlp::new(&layer_dims(obs_dim, h, 1), id, &mut rng)?;
        let critic_1 = Mlp::new(&layer_dims(2 * obs_dim, h, 1), id, &mut rng)?;
        let critic_2 = Mlp::new(&layer_dims(2 * obs_dim, h, 1), id, &mut rng)?;
        let forward_model = Mlp::new(&layer_dims(obs_dim + act_dim, h, obs_dim), id, &mut rng)?;
        let prediction = Mlp::new(&layer_dims(obs_dim, h, obs_dim), id, &mut rng)?;
        let actor = Mlp::new(
            &layer_dims(2 * obs_dim, h, act_dim),
            OutputActivation::TanhScaled {
                bound: action_bound,
            },
            &mut rng,
        )?;
        Self::from_networks(
            [
                value,
                critic_1.clone(),
                critic_2.clone(),
                critic_1,
                critic_2,
                forward_model,
                prediction,
                actor,
            ],
            hyper,
            net_config,
            action_bound,
        )
    }

    /// Assembles an agent from networks in [`NETWORK_NAMES`] order, with fresh optimizers.
    pub fn from_networks(
        nets: [Mlp; 8],
        hyper: SawHyper,
        net_config: NetConfig,
        action_bound: f64,
    ) -> Result<Self> {
        hyper.validate()?;
        let [value, critic_1, critic_2, target_1, target_2, forward_model, prediction, actor] =
            nets;
        let obs_dim = value.input_dim();
        let act_dim = actor.output_dim();
        let shape_ok = value.output_dim() == 1
            && critic_1.input_dim() == 2 * obs_dim
            && critic_1.output_dim() == 1
            && critic_2.same_architecture(&critic_1)
            && target_1.same_architecture(&critic_1)
            && target_2.same_architecture(&critic_2)
            && forward_model.input_dim() == obs_dim + act_dim
            && forward_model.output_dim() == obs_dim
            && prediction.input_dim() == obs_dim
            && prediction.output_dim() == obs_dim
            && actor.input_dim() == 2 * obs_dim;
        if !shape_ok {
            return Err(Error::Shape("inconsistent SAW network shapes".into()));
        }
        let lr = net_config.learning_rate;
        Ok(SawAgent {
            value_opt: AdamState::new(&value, lr),
            critic_1_opt: AdamState::new(&critic_1, lr),
            critic_2_opt: AdamState::new(&critic_2, lr),
            forward_opt: AdamState::new(&forward_model, lr),
            prediction_opt: AdamState::new(&prediction, lr),
            actor_opt: AdamState::new(&actor, lr),
            value,
            critic_1,
            critic_2,
            target_1,
            target_2,
            forward_model,
            prediction,
            actor,
            hyper,
            obs_dim,
            act_dim,
            action_bound,
            net_config,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    pub fn net_config(&self) -> &NetConfig {
        &self.net_config
    }

    /// Overrides the learning rate of every optimizer.
    pub fn set_learning_rate(&mut self, lr: f64) {
        self.net_config.learning_rate = lr;
        for opt in [
            &mut self.value_opt,
            &mut self.critic_1_opt,
            &mut self.critic_2_opt,
            &mut self.forward_opt,
            &mut self.prediction_opt,
            &mut self.actor_opt,
        ] {
            opt.learning_rate = lr;
        }
    }

    pub fn networks(&self) -> [&Mlp; 8] {
        [
            &self.value,
            &self.critic_1,
            &self.critic_2,
            &self.target_1,
            &self.target_2,
            &self.forward_model,
            &self.prediction,
            &self.actor,
        ]
    }

    /// `min(Q'_1, Q'_2)(s, s')` per row.
    pub fn target_q(&self, states: ArrayView2<f64>, next: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.target_values(states, next)?.1)
    }

    /// `(Q'_1, min(Q'_1, Q'_2))` per row.
    fn target_values(
        &self,
        states: ArrayView2<f64>,
        next: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let x = hcat(states, next);
        let q1 = column(&self.target_1.forward_batch(x.view())?);
        let q2 = column(&self.target_2.forward_batch(x.view())?);
        let min = ndarray::Zip::from(&q1)
            .and(&q2)
            .map_collect(|&a, &b| a.min(b));
        Ok((q1, min))
    }

    pub fn value_of(&self, states: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(column(&self.value.forward_batch(states)?))
    }

    /// `A(s, s') = min(Q'_1, Q'_2)(s, s') - V(s)`, without gradient.
    pub fn state_advantage(&self, s: &[f64], s_next: &[f64]) -> Result<f64> {
        let st =
            ArrayView2::from_shape((1, s.len()), s).map_err(|e| Error::Shape(e.to_string()))?;
        let nx = ArrayView2::from_shape((1, s_next.len()), s_next)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.advantages(st, nx)?[0])
    }

    pub fn advantages(
        &self,
        states: ArrayView2<f64>,
        next: ArrayView2<f64>,
    ) -> Result<Array1<f64>> {
        Ok(self.target_q(states, next)? - self.value_of(states)?)
    }

    /// `min(exp(beta A), weight_clip)` per row.
    pub fn advantage_weights(&self, batch: &Batch) -> Result<Array1<f64>> {
        let q = self.target_q(batch.states.view(), batch.next_states.view())?;
        self.weights_from(batch, &q)
    }

    fn weights_from(&self, batch: &Batch, q: &Array1<f64>) -> Result<Array1<f64>> {
        let adv = q - &self.value_of(batch.states.view())?;
        let w = adv.mapv(|a| advantage_weight(a, self.hyper.beta, self.hyper.weight_clip));
        check_finite(&w, "advantage weights")?;
        Ok(w)
    }

    /// Expectile value loss and its gradient with respect to the value network.
    pub fn value_loss_grad(&self, batch: &Batch) -> Result<(f64, Gradient)> {
        let q = self.target_q(batch.states.view(), batch.next_states.view())?;
        self.value_loss_grad_with_targets(batch, &q)
    }

    fn value_loss_grad_with_targets(
        &self,
        batch: &Batch,
        q: &Array1<f64>,
    ) -> Result<(f64, Gradient)> {
        let trace = self.value.forward_trace(batch.states.view())?;
        let v = trace.output().column(0);
        let n = batch.len() as f64;
        let tau = self.hyper.tau_expectile;
        let mut loss = 0.0;
        let mut upstream = Array2::zeros((batch.len(), 1));
        for i in 0..batch.len() {
            let u = q[i] - v[i];
            loss += expectile_loss(u, tau);
            // d/dV of L(q - V) = -L'(u)
            upstream[[i, 0]] = -expectile_loss_grad(u, tau) / n;
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite("value loss".into()));
        }
        let (grad, _) = self.value.backward_trace(&trace, upstream.view())?;
        Ok((loss, grad))
    }

    /// One Adam step on the value network; returns the loss before the step.
    pub fn update_value(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grad) = self.value_loss_grad(batch)?;
        self.value_opt.step(&mut self.value, &grad)?;
        Ok(loss)
    }

    /// `y = r + gamma (1 - d) V(s')`, with `V` held fixed.
    pub fn critic_targets(&self, batch: &Batch) -> Result<Array1<f64>> {
        let v_next = self.value_of(batch.next_states.view())?;
        let y = &batch.rewards + &((1.0 - &batch.dones) * &v_next * self.hyper.gamma);
        check_finite(&y, "critic target")?;
        Ok(y)
    }

    /// Loss and gradient of critic `which` (0 or 1) against fixed targets `y`.
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
        let trace = critic.forward_trace(x.view())?;
        let q = trace.output().column(0);
        let n = batch.len() as f64;
        let tau = self.hyper.tau_expectile;
        let mut loss = 0.0;
        let mut upstream = Array2::zeros((batch.len(), 1));
        for i in 0..batch.len() {
            let (l, d) = match self.hyper.critic_loss {
                CriticLoss::Mse => {
                    let e = q[i] - y[i];
                    (e * e, 2.0 * e)
                }
                CriticLoss::Expectile => {
                    let u = y[i] - q[i];
                    (expectile_loss(u, tau), -expectile_loss_grad(u, tau))
                }
            };
            loss += l;
            upstream[[i, 0]] = d / n;
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite("critic loss".into()));
        }
        let (grad, _) = critic.backward_trace(&trace, upstream.view())?;
        Ok((loss, grad))
    }

    /// One Adam step on both critics; returns the mean of the two losses.
    fn step_critics(&mut self, batch: &Batch) -> Result<f64> {
        let y = self.critic_targets(batch)?;
        let (l1, g1) = self.critic_loss_grad(0, batch, &y)?;
        let (l2, g2) = self.critic_loss_grad(1, batch, &y)?;
        self.critic_1_opt.step(&mut self.critic_1, &g1)?;
        self.critic_2_opt.step(&mut self.critic_2, &g2)?;
        Ok(0.5 * (l1 + l2))
    }

    /// Polyak-averages both target critics toward the online critics.
    pub fn update_targets(&mut self) -> Result<()> {
        polyak_update(&mut self.target_1, &self.critic_1, self.hyper.rho_polyak)?;
        polyak_update(&mut self.target_2, &self.critic_2, self.hyper.rho_polyak)
    }

    /// Critic step followed by the target update.
    pub fn update_critics(&mut self, batch: &Batch) -> Result<f64> {
        let loss = self.step_critics(batch)?;
        self.update_targets()?;
        Ok(loss)
    }

    pub fn actor_loss_grad(&self, batch: &Batch) -> Result<(f64, Gradient)> {
        self.actor_loss_grad_with(batch, &self.advantage_weights(batch)?)
    }

    fn actor_loss_grad_with(&self, batch: &Batch, w: &Array1<f64>) -> Result<(f64, Gradient)> {
        let x = hcat(batch.states.view(), batch.next_states.view());
        weighted_regression(&self.actor, x.view(), batch.actions.view(), Some(w.view()))
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

    /// Per-batch `alpha` for the prediction loss.
    pub fn prediction_alpha(&self, batch: &Batch) -> Result<f64> {
        if !self.hyper.use_alpha_normalization {
            return Ok(self.hyper.alpha);
        }
        let (q1, _) = self.target_values(batch.states.view(), batch.next_states.view())?;
        self.alpha_from(&q1)
    }

    /// `N / sum_i |Q'_1(s_i, s'_i)|`, or the fixed `alpha`.
    fn alpha_from(&self, q1: &Array1<f64>) -> Result<f64> {
        if self.hyper.use_alpha_normalization {
            alpha_normalization(q1.as_slice().expect("contiguous"))
        } else {
            Ok(self.hyper.alpha)
        }
    }

    /// Prediction-model loss
    /// `mean_i [w_i |s'_i - F(s_i, a'_i)|^2 - alpha V(F(s_i, a'_i))]` with
    /// `a' = I(s, M(s))`, and its gradient with respect to `M` only.
    ///
    /// `I`, `F` and `V` are frozen; the gradient flows through them into `M`'s output.
    pub fn prediction_loss_grad(&self, batch: &Batch) -> Result<(f64, Gradient)> {
        let w = self.advantage_weights(batch)?;
        let alpha = self.prediction_alpha(batch)?;
        self.prediction_loss_grad_with(batch, &w, alpha)
    }

    fn prediction_loss_grad_with(
        &self,
        batch: &Batch,
        w: &Array1<f64>,
        alpha: f64,
    ) -> Result<(f64, Gradient)> {
        let (obs, n) = (self.obs_dim, batch.len());
        let nf = n as f64;

        let m_trace = self.prediction.forward_trace(batch.states.view())?;
        let i_in = hcat(batch.states.view(), m_trace.output().view());
        let i_trace = self.actor.forward_trace(i_in.view())?;
        let f_in = hcat(batch.states.view(), i_trace.output().view());
        let f_trace = self.forward_model.forward_trace(f_in.view())?;
        let s_f = f_trace.output();
        let v_trace = self.value.forward_trace(s_f.view())?;
        let v_f = v_trace.output().column(0);

        let mut loss = 0.0;
        let mut d_sf = s_f - &batch.next_states;
        for (i, mut row) in d_sf.rows_mut().into_iter().enumerate() {
            loss += w[i] * row.iter().map(|e| e * e).sum::<f64>() - alpha * v_f[i];
            row.mapv_inplace(|e| 2.0 * w[i] * e / nf);
        }
        let loss = loss / nf;
        if !loss.is_finite() {
            return Err(Error::NonFinite("prediction loss".into()));
        }

        let v_seed = Array2::from_elem((n, 1), -alpha / nf);
        let (_, d_sf_from_v) = self.value.backward_trace(&v_trace, v_seed.view())?;
        d_sf += &d_sf_from_v;

        let (_, d_f_in) = self.forward_model.backward_trace(&f_trace, d_sf.view())?;
        let d_action = d_f_in.slice(s![.., obs..]).to_owned();
        let (_, d_i_in) = self.actor.backward_trace(&i_trace, d_action.view())?;
        let d_proposal = d_i_in.slice(s![.., obs..]).to_owned();
        let (grad, _) = self
            .prediction
            .backward_trace(&m_trace, d_proposal.view())?;
        Ok((loss, grad))
    }

    pub fn update_prediction(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, grad) = self.prediction_loss_grad(batch)?;
        self.prediction_opt.step(&mut self.prediction, &grad)?;
        Ok(loss)
    }

    /// Value, critics, actor, forward model, prediction model, then targets.
    pub fn train_step(&mut self, batch: &Batch) -> Result<SawStepStats> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (q1, q) = self.target_values(batch.states.view(), batch.next_states.view())?;
        check_finite(&q1, "target critic")?;
        check_finite(&q, "target critic")?;
        let (loss_v, grad_v) = self.value_loss_grad_with_targets(batch, &q)?;
        self.value_opt.step(&mut self.value, &grad_v)?;
        let loss_q = self.step_critics(batch)?;
        // targets stay fixed until the end of the step, so q is reused
        let w = self.weights_from(batch, &q)?;
        let (loss_actor, grad_actor) = self.actor_loss_grad_with(batch, &w)?;
        self.actor_opt.step(&mut self.actor, &grad_actor)?;
        let loss_fwd = self.update_forward(batch)?;
        let alpha = self.alpha_from(&q1)?;
        let (loss_pred, grad_pred) = self.prediction_loss_grad_with(batch, &w, alpha)?;
        self.prediction_opt.step(&mut self.prediction, &grad_pred)?;
        self.update_targets()?;
        Ok(SawStepStats {
            loss_v,
            loss_q,
            loss_actor,
            loss_fwd,
            loss_pred,
            mean_q: q.mean().unwrap_or_default(),
            max_q: q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            max_abs_q: q.iter().fold(0.0, |m, v| m.max(v.abs())),
        })
    }

    /// `a = I(s, M(s))` for every row.
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
            saw: Some(self.hyper.clone()),
            gamma: None,
            rho_polyak: None,
        };
        CheckpointHeader::describe("saw", &NETWORK_NAMES, &self.networks(), seed, step, &meta)
    }

    pub fn from_checkpoint(header: &CheckpointHeader, nets: Vec<Mlp>) -> Result<Self> {
        header.expect_agent("saw")?;
        let meta = header.agent_meta()?;
        let hyper = meta
            .saw
            .ok_or_else(|| Error::MalformedHeader("missing saw hyperparameters".into()))?;
        let nets: [Mlp; 8] = nets
            .try_into()
            .map_err(|_| Error::MalformedHeader("saw checkpoint needs 8 networks".into()))?;
        Self::from_networks(nets, hyper, meta.net, meta.action_bound)
    }
}

/// `mean_i |F(s_i, a_i) - s'_i|^2` and its gradient; shared by SAW and D3G.
pub fn forward_model_loss_grad(net: &Mlp, batch: &Batch) -> Result<(f64, Gradient)> {
    let x = hcat(batch.states.view(), batch.actions.view());
    weighted_regression(net, x.view(), batch.next_states.view(), None)
}

impl Policy for SawAgent {
    fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        SawAgent::act(self, observation)
    }
}
