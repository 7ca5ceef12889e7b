use std::fs;

use sawlab::env::{ExpertPolicy, RandomPolicy};
use sawlab::harness::report::{mean_std, SeedScore};
use sawlab::harness::{evaluate, run_offline, AgentKind, ReportRow, RunConfig};
use sawlab::{BehaviorPolicyKind, Env};

fn tiny_config(out: &std::path::Path) -> RunConfig {
    RunConfig {
        env: "pointmass2d".into(),
        dataset_kind: BehaviorPolicyKind::Medium,
        dataset_size: 2_000,
        agent: AgentKind::Saw,
        total_steps: 30,
        eval_every: 10,
        eval_episodes: 2,
        final_evals: 2,
        log_every: 10,
        seeds: vec![0, 1],
        batch_size: 16,
        net: sawlab::nn::NetConfig {
            hidden: vec![8, 8],
            ..Default::default()
        },
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

fn files_under(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        out.push((rel, fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            files.extend(walk(&path));
        } else {
            files.push(path);
        }
    }
    files
}

#[test]
fn zero_steps_evaluates_only_the_initial_agent() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny_config(dir.path());
    c.total_steps = 0;
    c.final_evals = 1;
    let out = run_offline(&c).unwrap();
    for seed in &out.seeds {
        let steps: Vec<u64> = seed.evaluations.iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![0]);
        assert!(seed.final_score().is_some());
    }
}

#[test]
fn identical_configs_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_offline(&tiny_config(a.path())).unwrap();
    run_offline(&tiny_config(b.path())).unwrap();
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb);
}

#[test]
fn scripted_policies_anchor_the_normalized_score() {
    for name in ["pointmass2d", "gridmaze"] {
        let env = Env::by_name(name).unwrap();
        let random = evaluate(&mut RandomPolicy::new(&env, 99), &env, 200, 7).unwrap();
        let expert = evaluate(&mut ExpertPolicy::new(&env), &env, 200, 7).unwrap();
        assert!(
            random.normalized_score.abs() < 10.0,
            "{name} random {}",
            random.normalized_score
        );
        assert!(
            (expert.normalized_score - 100.0).abs() < 10.0,
            "{name} expert {}",
            expert.normalized_score
        );
    }
}

#[test]
fn single_episode_evaluation_is_deterministic() {
    let env = Env::by_name("pointmass2d").unwrap();
    let first = evaluate(&mut RandomPolicy::new(&env, 1), &env, 1, 3).unwrap();
    let again = evaluate(&mut RandomPolicy::new(&env, 1), &env, 1, 3).unwrap();
    assert_eq!(first, again);
    assert!(evaluate(&mut RandomPolicy::new(&env, 1), &env, 0, 3).is_err());
}

#[test]
fn aggregate_ignores_seed_order() {
    let scores = [(4, 12.5), (0, -3.0), (2, 40.0), (1, 7.25), (3, 0.0)];
    let make = |order: &[usize]| {
        let seeds = order
            .iter()
            .map(|&i| SeedScore {
                seed: scores[i].0,
                final_score: Some(scores[i].1),
                failed: false,
            })
            .collect();
        ReportRow::from_seeds("saw", seeds)
    };
    let forward = make(&[0, 1, 2, 3, 4]);
    let reversed = make(&[4, 3, 2, 1, 0]);
    assert_eq!(forward, reversed);
    let values: Vec<f64> = scores.iter().map(|s| s.1).collect();
    let (m, s) = mean_std(&values).unwrap();
    assert_eq!((forward.mean.unwrap(), forward.std.unwrap()), (m, s));
}
