#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sawlab::nn::NetConfig;
use sawlab::{Batch, Mlp};

pub mod gradcheck;

pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of `loss` with respect to every parameter of `net`.
pub fn fd_gradient(net: &Mlp, loss: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let base = net.params_flat();
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + FD_STEP;
        probe.set_params_flat(&params).unwrap();
        let up = loss(&probe);
        params[i] = base[i] - FD_STEP;
        probe.set_params_flat(&params).unwrap();
        let down = loss(&probe);
        params[i] = base[i];
        out.push((up - down) / (2.0 * FD_STEP));
    }
    out
}

/// `|a - b| / max(|a|, |b|)` over whole vectors.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn small_net_config() -> NetConfig {
    NetConfig {
        hidden: vec![8, 8],
        learning_rate: 1e-3,
    }
}

pub fn random_batch(seed: u64, n: usize, obs: usize, act: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mat = |rows, cols, scale: f64| {
        Array2::from_shape_fn((rows, cols), |_| scale * rng.random_range(-1.0..1.0))
    };
    let states = mat(n, obs, 1.0);
    let actions = mat(n, act, 1.0);
    let next_states = mat(n, obs, 1.0);
    let rewards = mat(n, 1, 1.0).column(0).to_owned();
    let dones = Array1::from_shape_fn(n, |i| if i % 5 == 4 { 1.0 } else { 0.0 });
    Batch {
        states,
        actions,
        rewards,
        next_states,
        dones,
    }
}

/// Network whose output is `value` everywhere (zero weights).
pub fn constant_net(dims: &[usize], value: f64) -> Mlp {
    let mut net = Mlp::zeros(dims, sawlab::OutputActivation::Identity).unwrap();
    let last = net.layers_mut().last_mut().unwrap();
    last.bias.fill(value);
    net
}

/// Single affine layer `x -> w x + b`.
pub fn affine(weights: Array2<f64>, bias: Array1<f64>, output: sawlab::OutputActivation) -> Mlp {
    Mlp::from_layers(vec![sawlab::nn::Layer { weights, bias }], output).unwrap()
}

/// `(s, a, r, s', done)`.
pub type Row<'a> = (&'a [f64], &'a [f64], f64, &'a [f64], bool);

pub fn batch_from(rows: &[Row]) -> Batch {
    let transitions: Vec<sawlab::Transition> = rows
        .iter()
        .map(|(s, a, r, s_next, done)| sawlab::Transition {
            s: s.to_vec(),
            a: a.to_vec(),
            r: *r,
            s_next: s_next.to_vec(),
            done: *done,
        })
        .collect();
    Batch::from_transitions(&transitions).unwrap()
}
