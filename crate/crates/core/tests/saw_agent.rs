mod common;

use common::{affine, batch_from, constant_net, random_batch, small_net_config, Row};
use nalgebra::{DMatrix, DVector};
use ndarray::{arr1, Array1, Array2};
use sawlab::env::tabular::TabularModel;
use sawlab::env::{GridMaze, GridObservation, Layout, Move, DEFAULT_LAYOUT, GRIDMAZE_HORIZON};
use sawlab::nn::checkpoint::{read_checkpoint, write_checkpoint};
use sawlab::nn::{hcat, weighted_regression, NetConfig};
use sawlab::saw::{forward_model_loss_grad, CriticLoss};
use sawlab::{Batch, BehaviorPolicyKind, Env, Error, Mlp, OutputActivation, SawAgent, SawHyper};

const OBS: usize = 3;
const ACT: usize = 2;

fn agent(hyper: SawHyper, seed: u64) -> SawAgent {
    SawAgent::new(OBS, ACT, 1.0, hyper, small_net_config(), seed).unwrap()
}

fn with_constant_critics(mut a: SawAgent, q: f64, v: f64) -> SawAgent {
    a.target_1 = constant_net(&[2 * OBS, 1], q);
    a.target_2 = constant_net(&[2 * OBS, 1], q);
    a.value = constant_net(&[OBS, 1], v);
    a
}

fn all_params(a: &SawAgent) -> Vec<Vec<f64>> {
    a.networks().iter().map(|n| n.params_flat()).collect()
}

#[test]
fn targets_start_equal_to_critics() {
    let a = agent(SawHyper::default(), 3);
    assert_eq!(a.target_1, a.critic_1);
    assert_eq!(a.target_2, a.critic_2);
    assert_ne!(a.critic_1, a.critic_2);
}

#[test]
fn state_advantage_examples() {
    let zero = with_constant_critics(agent(SawHyper::default(), 0), 0.0, 0.0);
    assert_eq!(
        zero.state_advantage(&[0.3, -1.0, 2.0], &[1.0, 1.0, 1.0])
            .unwrap(),
        0.0
    );

    let a = with_constant_critics(agent(SawHyper::default(), 0), 3.0, 1.0);
    assert_eq!(
        a.state_advantage(&[0.3, -1.0, 2.0], &[1.0, 1.0, 1.0])
            .unwrap(),
        2.0
    );

    let b = random_batch(1, 8, OBS, ACT);
    let mut base = agent(SawHyper::default(), 4);
    base.target_2 = base.target_1.clone();
    let before = base
        .advantages(b.states.view(), b.next_states.view())
        .unwrap();
    let c = 1.25;
    for net in [&mut base.target_1, &mut base.target_2] {
        net.layers_mut().last_mut().unwrap().bias[0] += c;
    }
    let after = base
        .advantages(b.states.view(), b.next_states.view())
        .unwrap();
    for (x, y) in before.iter().zip(&after) {
        assert!((y - x - c).abs() < 1e-12);
    }
}

#[test]
fn advantage_weight_examples() {
    let b = random_batch(2, 4, OBS, ACT);
    let zero_beta = SawHyper {
        beta: 0.0,
        ..SawHyper::default()
    };
    let a = with_constant_critics(agent(zero_beta, 0), 7.0, -2.0);
    assert!(a.advantage_weights(&b).unwrap().iter().all(|&w| w == 1.0));

    let a = with_constant_critics(agent(SawHyper::default(), 0), 1.2, 1.0);
    for w in a.advantage_weights(&b).unwrap() {
        assert!((w - std::f64::consts::E).abs() < 1e-12);
    }

    let a = with_constant_critics(agent(SawHyper::default(), 0), 1.0, 0.0);
    assert!(a.advantage_weights(&b).unwrap().iter().all(|&w| w == 100.0));
}

#[test]
fn half_expectile_value_gradient_is_half_regression() {
    let hyper = SawHyper {
        tau_expectile: 0.5,
        ..SawHyper::default()
    };
    let mut a = agent(hyper, 5);
    let c = 0.75;
    a.target_1 = constant_net(&[2 * OBS, 1], c);
    a.target_2 = constant_net(&[2 * OBS, 1], c);
    let b = random_batch(6, 16, OBS, ACT);
    let (loss, grad) = a.value_loss_grad(&b).unwrap();
    let targets = Array2::from_elem((16, 1), c);
    let (mse, mse_grad) =
        weighted_regression(&a.value, b.states.view(), targets.view(), None).unwrap();
    assert!((loss - 0.5 * mse).abs() < 1e-14);
    for (g, m) in grad.to_flat().iter().zip(mse_grad.to_flat()) {
        assert!((g - 0.5 * m).abs() < 1e-14);
    }
}

#[test]
fn zero_residual_value_gradient_vanishes() {
    let a = with_constant_critics(agent(SawHyper::default(), 0), 0.4, 0.4);
    let (loss, grad) = a.value_loss_grad(&random_batch(7, 8, OBS, ACT)).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.to_flat().iter().all(|&g| g == 0.0));
}

#[test]
fn critic_target_examples() {
    let mut a = agent(SawHyper::default(), 0);
    a.value = constant_net(&[OBS, 1], 50.0);
    let s = [0.0; OBS];
    let terminal = batch_from(&[(&s, &[0.0, 0.0], 1.0, &[1.0, 2.0, 3.0], true)]);
    assert_eq!(a.critic_targets(&terminal).unwrap()[0], 1.0);

    a.value = constant_net(&[OBS, 1], 0.0);
    let open = batch_from(&[(&s, &[0.0, 0.0], 1.0, &[1.0, 2.0, 3.0], false)]);
    assert_eq!(a.critic_targets(&open).unwrap()[0], 1.0);

    a.value = constant_net(&[OBS, 1], 2.0);
    assert_eq!(a.critic_targets(&open).unwrap()[0], 1.0 + 0.99 * 2.0);
}

/// Every (state, move) transition of the slip-free maze with one-hot observations.
fn tabular_dataset() -> (TabularModel, Batch, Vec<Vec<f64>>) {
    let maze = GridMaze::new(
        Layout::parse(DEFAULT_LAYOUT).unwrap(),
        0.0,
        GRIDMAZE_HORIZON,
        GridObservation::OneHot,
    )
    .unwrap();
    let model = TabularModel::from_maze(&maze);
    let obs: Vec<Vec<f64>> = model
        .cells
        .iter()
        .map(|&c| maze.observe(maze.layout.cell(c)))
        .collect();
    let mut rows = Vec::new();
    for s in (0..model.n_states()).filter(|&s| s != model.goal) {
        for (m, outcomes) in Move::ALL.iter().zip(&model.transitions[s]) {
            for &(next, _) in outcomes {
                rows.push(sawlab::Transition {
                    s: obs[s].clone(),
                    a: m.as_action().to_vec(),
                    r: model.reward(next),
                    s_next: obs[next].clone(),
                    done: next == model.goal,
                });
            }
        }
    }
    (model, Batch::from_transitions(&rows).unwrap(), obs)
}

#[test]
fn critics_converge_to_policy_evaluation_fixed_point() {
    let gamma = 0.9;
    let (model, batch, obs) = tabular_dataset();
    let n = model.n_states();

    // V(s) = mean over the dataset's transitions from s of r + gamma (1 - d) V(s')
    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut r = DVector::<f64>::zeros(n);
    let mut counts = vec![0.0; n];
    for s in (0..n).filter(|&s| s != model.goal) {
        for row in &model.transitions[s] {
            for &(next, _) in row {
                counts[s] += 1.0;
                r[s] += model.reward(next);
                if next != model.goal {
                    p[(s, next)] += 1.0;
                }
            }
        }
    }
    for s in 0..n {
        if counts[s] > 0.0 {
            r[s] /= counts[s];
            for j in 0..n {
                p[(s, j)] /= counts[s];
            }
        }
    }
    let system = DMatrix::<f64>::identity(n, n) - p * gamma;
    let v_star = system.lu().solve(&r).unwrap();

    let hyper = SawHyper {
        tau_expectile: 0.5,
        gamma,
        rho_polyak: 1.0,
        ..SawHyper::default()
    };
    let net = NetConfig {
        hidden: vec![],
        learning_rate: 1e-2,
    };
    let mut a = SawAgent::new(obs[0].len(), 2, 1.0, hyper, net, 0).unwrap();
    for (lr, sweeps) in [(3e-2, 3000), (3e-3, 2000), (3e-4, 2000)] {
        a.set_learning_rate(lr);
        for _ in 0..sweeps {
            a.update_value(&batch).unwrap();
            a.update_critics(&batch).unwrap();
        }
    }

    let states = Array2::from_shape_fn((n, obs[0].len()), |(i, j)| obs[i][j]);
    let v = a.value_of(states.view()).unwrap();
    for s in (0..n).filter(|&s| s != model.goal) {
        assert!(
            (v[s] - v_star[s]).abs() < 1e-3,
            "state {s}: {} vs {}",
            v[s],
            v_star[s]
        );
    }
    let y_star: Vec<f64> = (0..batch.len())
        .map(|i| {
            let next = (0..n)
                .find(|&j| batch.next_states.row(i).to_vec() == obs[j])
                .unwrap();
            let cont = if next == model.goal {
                0.0
            } else {
                gamma * v_star[next]
            };
            batch.rewards[i] + cont
        })
        .collect();
    let x = hcat(batch.states.view(), batch.next_states.view());
    for critic in [&a.critic_1, &a.critic_2] {
        let q = critic.forward_batch(x.view()).unwrap();
        for (i, y) in y_star.iter().enumerate() {
            assert!(
                (q[[i, 0]] - y).abs() < 1e-3,
                "row {i}: {} vs {y}",
                q[[i, 0]]
            );
        }
    }
}

#[test]
fn forward_model_learns_pointmass_dynamics() {
    let env = Env::by_name("pointmass2d").unwrap();
    let train = sawlab::env::generate_dataset(&env, BehaviorPolicyKind::Random, 20_000, 0).unwrap();
    let held_out =
        sawlab::env::generate_dataset(&env, BehaviorPolicyKind::Random, 2_000, 1).unwrap();
    let net = NetConfig {
        hidden: vec![64, 64],
        learning_rate: 1e-3,
    };
    let mut a = SawAgent::new(2, 2, 1.0, SawHyper::default(), net, 0).unwrap();
    let mut sampler = sawlab::BatchSampler::new(0, 256).unwrap();
    for step in 0..6000 {
        if step == 4000 {
            a.set_learning_rate(1e-4);
        }
        a.update_forward(&sampler.sample(&train).unwrap()).unwrap();
    }
    let b = Batch::from_transitions(held_out.transitions()).unwrap();
    let pred = a
        .forward_model
        .forward_batch(hcat(b.states.view(), b.actions.view()).view())
        .unwrap();
    let exact = &b.states + &(&b.actions * 0.1);
    for k in 0..2 {
        let err = (&pred.column(k) - &exact.column(k))
            .mapv(f64::abs)
            .mean()
            .unwrap();
        assert!(err < 1e-2, "coordinate {k}: mean error {err}");
    }
}

#[test]
fn forward_model_memorized_transition_has_zero_gradient() {
    let s_next = [0.5, -0.25, 1.0];
    let net = constant_net(&[OBS + ACT, 4, OBS], 0.0);
    let mut net = net;
    net.layers_mut()
        .last_mut()
        .unwrap()
        .bias
        .assign(&arr1(&s_next));
    let b = batch_from(&[(&[0.1, 0.2, 0.3], &[1.0, -1.0], 0.0, &s_next, false)]);
    let (loss, grad) = forward_model_loss_grad(&net, &b).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.to_flat().iter().all(|&g| g == 0.0));
}

#[test]
fn duplicated_transitions_match_proportional_weights() {
    let a = agent(SawHyper::default(), 9);
    let t1: Row = (&[0.1, 0.2, 0.3], &[1.0, 0.0], 0.0, &[0.2, 0.2, 0.2], false);
    let t2: Row = (
        &[-0.4, 0.0, 0.9],
        &[0.0, -1.0],
        0.0,
        &[-0.5, 0.1, 0.8],
        false,
    );
    let dup = batch_from(&[t1, t1, t2]);
    let dedup = batch_from(&[t1, t2]);
    let (l_dup, g_dup) = a.forward_loss_grad(&dup).unwrap();
    let x = hcat(dedup.states.view(), dedup.actions.view());
    let w = arr1(&[4.0 / 3.0, 2.0 / 3.0]);
    let (l_w, g_w) = weighted_regression(
        &a.forward_model,
        x.view(),
        dedup.next_states.view(),
        Some(w.view()),
    )
    .unwrap();
    assert!((l_dup - l_w).abs() < 1e-12);
    for (p, q) in g_dup.to_flat().iter().zip(g_w.to_flat()) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn alpha_uses_first_target_critic() {
    let mut a = agent(SawHyper::default(), 0);
    // Q'_1(s, s') = s'_0, Q'_2 = -10 everywhere
    let mut read = Array2::zeros((1, 2 * OBS));
    read[[0, OBS]] = 1.0;
    a.target_1 = affine(read, arr1(&[0.0]), OutputActivation::Identity);
    a.target_2 = constant_net(&[2 * OBS, 1], -10.0);
    let s = [0.0; OBS];
    let b = batch_from(&[
        (&s, &[0.0, 0.0], 0.0, &[1.0, 0.0, 0.0], false),
        (&s, &[0.0, 0.0], 0.0, &[-3.0, 0.0, 0.0], false),
    ]);
    assert_eq!(a.prediction_alpha(&b).unwrap(), 0.5);

    a.target_1 = constant_net(&[2 * OBS, 1], 0.0);
    assert!(matches!(
        a.prediction_alpha(&b),
        Err(Error::DegenerateCritic)
    ));

    let fixed = SawHyper {
        use_alpha_normalization: false,
        alpha: 0.25,
        ..SawHyper::default()
    };
    assert_eq!(agent(fixed, 0).prediction_alpha(&b).unwrap(), 0.25);
}

#[test]
fn prediction_loss_without_weights_or_value_is_consistency() {
    let hyper = SawHyper {
        beta: 0.0,
        use_alpha_normalization: false,
        alpha: 0.0,
        ..SawHyper::default()
    };
    let a = agent(hyper, 11);
    let b = random_batch(12, 16, OBS, ACT);
    let (loss, _) = a.prediction_loss_grad(&b).unwrap();
    let proposal = a.prediction.forward_batch(b.states.view()).unwrap();
    let action = a
        .actor
        .forward_batch(hcat(b.states.view(), proposal.view()).view())
        .unwrap();
    let s_f = a
        .forward_model
        .forward_batch(hcat(b.states.view(), action.view()).view())
        .unwrap();
    let expected = (&b.next_states - &s_f).mapv(|e| e * e).sum() / 16.0;
    assert!((loss - expected).abs() < 1e-12);
}

#[test]
fn value_term_gradient_follows_value_along_the_model_graph() {
    // The gradient difference between alpha = a and alpha = 0 is a times the
    // gradient of -mean V(F(s, I(s, M(s)))), which is checked by finite differences.
    let env = Env::by_name("pointmass2d").unwrap();
    let data = sawlab::env::generate_dataset(&env, BehaviorPolicyKind::Medium, 5_000, 2).unwrap();
    let net = NetConfig {
        hidden: vec![16, 16],
        learning_rate: 1e-3,
    };
    let mut a = SawAgent::new(2, 2, 1.0, SawHyper::default(), net, 13).unwrap();
    let mut sampler = sawlab::BatchSampler::new(1, 64).unwrap();
    for _ in 0..300 {
        a.train_step(&sampler.sample(&data).unwrap()).unwrap();
    }
    let b = sampler.sample(&data).unwrap();
    let alpha = 0.7;
    let with = |alpha: f64| {
        let mut c = a.clone();
        c.hyper.use_alpha_normalization = false;
        c.hyper.alpha = alpha;
        c.prediction_loss_grad(&b).unwrap().1.to_flat()
    };
    let (g_alpha, g_zero) = (with(alpha), with(0.0));
    let diff: Vec<f64> = g_alpha
        .iter()
        .zip(&g_zero)
        .map(|(x, y)| (x - y) / alpha)
        .collect();

    let neg_mean_value = |m: &Mlp| {
        let proposal = m.forward_batch(b.states.view()).unwrap();
        let action = a
            .actor
            .forward_batch(hcat(b.states.view(), proposal.view()).view())
            .unwrap();
        let s_f = a
            .forward_model
            .forward_batch(hcat(b.states.view(), action.view()).view())
            .unwrap();
        -a.value.forward_batch(s_f.view()).unwrap().mean().unwrap()
    };
    let fd = common::fd_gradient(&a.prediction, neg_mean_value);
    let err = common::relative_error(&diff, &fd);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn zero_networks_act_with_zero() {
    let mut a = agent(SawHyper::default(), 0);
    a.prediction = constant_net(&[OBS, 8, OBS], 0.0);
    let mut actor = Mlp::zeros(
        &[2 * OBS, 8, ACT],
        OutputActivation::TanhScaled { bound: 1.0 },
    )
    .unwrap();
    actor.layers_mut()[0].weights.fill(0.0);
    a.actor = actor;
    assert_eq!(a.act(&[0.4, -0.2, 9.0]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn acting_is_deterministic_and_bounded() {
    let net = NetConfig {
        hidden: vec![8],
        learning_rate: 1e-3,
    };
    let a = SawAgent::new(OBS, ACT, 0.5, SawHyper::default(), net, 1).unwrap();
    let s = [3.0, -20.0, 7.0];
    let first = a.act(&s).unwrap();
    assert_eq!(first, a.act(&s).unwrap());
    assert!(first.iter().all(|x| x.abs() <= 0.5));
    assert!(matches!(
        a.act(&[f64::NAN, 0.0, 0.0]),
        Err(Error::NonFinite(_))
    ));
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut a = agent(SawHyper::default(), 21);
        let losses: Vec<f64> = (0..20)
            .flat_map(|i| {
                let s = a.train_step(&random_batch(i, 16, OBS, ACT)).unwrap();
                [
                    s.loss_v,
                    s.loss_q,
                    s.loss_actor,
                    s.loss_fwd,
                    s.loss_pred,
                    s.mean_q,
                    s.max_q,
                ]
            })
            .collect();
        (losses, all_params(&a))
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let mut a = agent(SawHyper::default(), 22);
    a.set_learning_rate(0.0);
    let before = all_params(&a);
    let stats = a.train_step(&random_batch(23, 16, OBS, ACT)).unwrap();
    // Polyak averaging of equal values may round by an ulp
    for (x, y) in all_params(&a).iter().flatten().zip(before.iter().flatten()) {
        assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0));
    }
    for l in [
        stats.loss_v,
        stats.loss_q,
        stats.loss_actor,
        stats.loss_fwd,
        stats.loss_pred,
    ] {
        assert!(l.is_finite());
    }
}

#[test]
fn empty_batch_is_rejected() {
    let mut a = agent(SawHyper::default(), 0);
    let empty = Batch {
        states: Array2::zeros((0, OBS)),
        actions: Array2::zeros((0, ACT)),
        rewards: Array1::zeros(0),
        next_states: Array2::zeros((0, OBS)),
        dones: Array1::zeros(0),
    };
    assert!(matches!(a.train_step(&empty), Err(Error::EmptyDataset)));
}

#[test]
fn checkpoint_round_trip() {
    let hyper = SawHyper {
        beta: 3.0,
        critic_loss: CriticLoss::Expectile,
        ..SawHyper::default()
    };
    let mut a = agent(hyper, 30);
    for i in 0..5 {
        a.train_step(&random_batch(i, 16, OBS, ACT)).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("saw.bin");
    write_checkpoint(&path, &a.checkpoint_header(30, 5).unwrap(), &a.networks()).unwrap();
    let (header, nets) = read_checkpoint(&path).unwrap();
    assert_eq!((header.seed, header.step), (30, 5));
    let b = SawAgent::from_checkpoint(&header, nets).unwrap();
    assert_eq!(all_params(&a), all_params(&b));
    assert_eq!(b.hyper, a.hyper);
    let s = [0.1, 0.2, -0.3];
    assert_eq!(a.act(&s).unwrap(), b.act(&s).unwrap());

    let mut bad = header.clone();
    bad.agent = "bc".into();
    assert!(SawAgent::from_checkpoint(&bad, read_checkpoint(&path).unwrap().1).is_err());
}

#[test]
fn mismatched_networks_are_rejected() {
    let a = agent(SawHyper::default(), 0);
    let mut nets: Vec<Mlp> = a.networks().iter().map(|n| (*n).clone()).collect();
    nets[5] = constant_net(&[OBS, 4], 0.0);
    let nets: [Mlp; 8] = nets.try_into().unwrap();
    assert!(SawAgent::from_networks(nets, SawHyper::default(), small_net_config(), 1.0).is_err());
}
