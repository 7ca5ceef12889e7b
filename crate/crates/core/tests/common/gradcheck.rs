//! Largest relative error between analytic and finite-difference gradients, per loss.

use super::{fd_gradient, random_batch, relative_error, small_net_config};
use sawlab::baselines::{BcAgent, D3gAgent, D3gHyper};
use sawlab::saw::CriticLoss;
use sawlab::{Batch, Gradient, Mlp, SawAgent, SawHyper};

pub const TOLERANCE: f64 = 1e-4;
const OBS: usize = 3;
const ACT: usize = 2;

fn error(net: &Mlp, analytic: &Gradient, loss: impl Fn(&Mlp) -> f64) -> f64 {
    relative_error(&analytic.to_flat(), &fd_gradient(net, loss))
}

fn saw(hyper: SawHyper, seed: u64) -> SawAgent {
    SawAgent::new(OBS, ACT, 1.0, hyper, small_net_config(), seed).unwrap()
}

fn d3g(seed: u64) -> D3gAgent {
    D3gAgent::new(OBS, ACT, 1.0, D3gHyper::default(), small_net_config(), seed).unwrap()
}

fn batch(seed: u64) -> Batch {
    random_batch(seed, 16, OBS, ACT)
}

fn saw_variants() -> Vec<SawHyper> {
    vec![
        SawHyper::default(),
        SawHyper {
            use_alpha_normalization: false,
            alpha: 0.3,
            beta: 1.0,
            tau_expectile: 0.3,
            critic_loss: CriticLoss::Expectile,
            ..SawHyper::default()
        },
    ]
}

/// Runs `f` over a few agents and batches and keeps the worst error.
fn worst(cases: impl Iterator<Item = f64>) -> f64 {
    cases.fold(0.0, f64::max)
}

pub fn saw_value() -> f64 {
    worst(saw_variants().into_iter().enumerate().map(|(k, hyper)| {
        let agent = saw(hyper, k as u64);
        let b = batch(10 + k as u64);
        let (_, g) = agent.value_loss_grad(&b).unwrap();
        error(&agent.value, &g, |net| {
            let mut a = agent.clone();
            a.value = net.clone();
            a.value_loss_grad(&b).unwrap().0
        })
    }))
}

fn critic_error<A: Clone>(
    agent: &A,
    nets: (&Mlp, &Mlp),
    set: impl Fn(&mut A, usize, Mlp),
    loss: impl Fn(&A, usize) -> (f64, Gradient),
) -> f64 {
    worst((0..2).map(|which| {
        let net = if which == 0 { nets.0 } else { nets.1 };
        let (_, g) = loss(agent, which);
        error(net, &g, |net| {
            let mut a = agent.clone();
            set(&mut a, which, net.clone());
            loss(&a, which).0
        })
    }))
}

pub fn saw_critics() -> f64 {
    worst(saw_variants().into_iter().enumerate().map(|(k, hyper)| {
        let agent = saw(hyper, 20 + k as u64);
        let b = batch(30 + k as u64);
        let y = agent.critic_targets(&b).unwrap();
        critic_error(
            &agent,
            (&agent.critic_1, &agent.critic_2),
            |a, which, net| {
                if which == 0 {
                    a.critic_1 = net
                } else {
                    a.critic_2 = net
                }
            },
            |a, which| a.critic_loss_grad(which, &b, &y).unwrap(),
        )
    }))
}

pub fn saw_forward() -> f64 {
    let agent = saw(SawHyper::default(), 40);
    let b = batch(41);
    let (_, g) = agent.forward_loss_grad(&b).unwrap();
    error(&agent.forward_model, &g, |net| {
        let mut a = agent.clone();
        a.forward_model = net.clone();
        a.forward_loss_grad(&b).unwrap().0
    })
}

pub fn saw_actor() -> f64 {
    worst(saw_variants().into_iter().enumerate().map(|(k, hyper)| {
        let agent = saw(hyper, 50 + k as u64);
        let b = batch(51 + k as u64);
        let (_, g) = agent.actor_loss_grad(&b).unwrap();
        error(&agent.actor, &g, |net| {
            let mut a = agent.clone();
            a.actor = net.clone();
            a.actor_loss_grad(&b).unwrap().0
        })
    }))
}

pub fn saw_prediction() -> f64 {
    worst(
        saw_variants()
            .into_iter()
            .enumerate()
            .flat_map(|(k, hyper)| {
                (0..3u64).map(move |seed| {
                    let agent = saw(hyper.clone(), 60 + 10 * k as u64 + seed);
                    let b = batch(70 + seed);
                    let (_, g) = agent.prediction_loss_grad(&b).unwrap();
                    error(&agent.prediction, &g, |net| {
                        let mut a = agent.clone();
                        a.prediction = net.clone();
                        a.prediction_loss_grad(&b).unwrap().0
                    })
                })
            }),
    )
}

pub fn d3g_critics() -> f64 {
    let agent = d3g(80);
    let b = batch(81);
    let y = agent.critic_targets(&b).unwrap();
    critic_error(
        &agent,
        (&agent.critic_1, &agent.critic_2),
        |a, which, net| {
            if which == 0 {
                a.critic_1 = net
            } else {
                a.critic_2 = net
            }
        },
        |a, which| a.critic_loss_grad(which, &b, &y).unwrap(),
    )
}

pub fn d3g_actor() -> f64 {
    let agent = d3g(90);
    let b = batch(91);
    let (_, g) = agent.actor_loss_grad(&b).unwrap();
    error(&agent.actor, &g, |net| {
        let mut a = agent.clone();
        a.actor = net.clone();
        a.actor_loss_grad(&b).unwrap().0
    })
}

pub fn d3g_forward() -> f64 {
    let agent = d3g(92);
    let b = batch(93);
    let (_, g) = agent.forward_loss_grad(&b).unwrap();
    error(&agent.forward_model, &g, |net| {
        let mut a = agent.clone();
        a.forward_model = net.clone();
        a.forward_loss_grad(&b).unwrap().0
    })
}

pub fn d3g_prediction() -> f64 {
    worst((0..3u64).map(|seed| {
        let agent = d3g(100 + seed);
        let b = batch(110 + seed);
        let (_, g) = agent.prediction_loss_grad(&b).unwrap();
        error(&agent.prediction, &g, |net| {
            let mut a = agent.clone();
            a.prediction = net.clone();
            a.prediction_loss_grad(&b).unwrap().0
        })
    }))
}

pub fn bc() -> f64 {
    let agent = BcAgent::new(OBS, ACT, 1.0, small_net_config(), 120).unwrap();
    let b = batch(121);
    let (_, g) = agent.loss_grad(&b).unwrap();
    error(agent.networks()[0], &g, |net| {
        BcAgent::from_policy(net.clone(), small_net_config(), 1.0)
            .loss_grad(&b)
            .unwrap()
            .0
    })
}

/// Every loss, named after the model it trains.
pub fn all() -> Vec<(&'static str, fn() -> f64)> {
    vec![
        ("saw value", saw_value),
        ("saw critics", saw_critics),
        ("saw forward model", saw_forward),
        ("saw actor", saw_actor),
        ("saw prediction model", saw_prediction),
        ("d3g critics", d3g_critics),
        ("d3g actor", d3g_actor),
        ("d3g forward model", d3g_forward),
        ("d3g prediction model", d3g_prediction),
        ("bc policy", bc),
    ]
}
