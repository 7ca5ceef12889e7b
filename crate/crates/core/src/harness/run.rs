use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::agent::{Agent, StepMetrics};
use super::config::RunConfig;
use super::eval::{evaluate, EvalResult};
use super::report::{
    self, write_metrics, MetricsRow, Report, ReportRow, SeedScore, FAILED_MARKER, METRICS_FILE,
};
use crate::dataset::{self as dataset_io, Batch, BatchSampler, OfflineDataset, Transition};
use crate::env::{generate_dataset, Env};
use crate::{Error, Result};

/// Online episodes reset from this seed upward, away from evaluation and dataset seeds.
pub const ONLINE_SEED_OFFSET: u64 = 1 << 50;
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// `eta(t) = 1 - t / (2T)`, the offline share of a fine-tuning batch.
pub fn eta(t: usize, total: usize) -> f64 {
    if total == 0 {
        return 1.0;
    }
    1.0 - t as f64 / (2.0 * total as f64)
}

/// `(offline, online)` sample counts at step `t`: `round(eta M)` and the rest.
pub fn batch_split(t: usize, total: usize, batch_size: usize) -> (usize, usize) {
    let offline = (eta(t, total) * batch_size as f64).round() as usize;
    (offline, batch_size - offline)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub step: u64,
    pub mean_return: f64,
    pub normalized_score: f64,
}

/// Outcome of one seed. `error` is set when training aborted.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub agent: Agent,
    pub rows: Vec<MetricsRow>,
    pub evaluations: Vec<Evaluation>,
    /// Largest `|min_i Q'_i(s, s')|` over all logged batches.
    pub max_abs_q: f64,
    pub error: Option<String>,
    pub final_evals: usize,
}

impl SeedRun {
    pub fn final_score(&self) -> Option<f64> {
        self.tail()
            .map(|t| t.iter().map(|e| e.normalized_score).sum::<f64>() / t.len() as f64)
    }

    pub fn final_return(&self) -> Option<f64> {
        self.tail()
            .map(|t| t.iter().map(|e| e.mean_return).sum::<f64>() / t.len() as f64)
    }

    fn tail(&self) -> Option<&[Evaluation]> {
        let n = self.evaluations.len();
        (n > 0).then(|| &self.evaluations[n.saturating_sub(self.final_evals)..])
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn score(&self) -> SeedScore {
        SeedScore {
            seed: self.seed,
            final_score: self.final_score(),
            failed: self.failed(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub dir: PathBuf,
    pub seeds: Vec<SeedRun>,
    pub report: Report,
}

impl RunOutput {
    pub fn row(&self) -> &ReportRow {
        &self.report.rows[0]
    }
}

/// Loads `config.dataset_path`, or generates the dataset from `(env, kind, size, dataset_seed)`.
pub fn load_or_generate(config: &RunConfig, env: &Env) -> Result<OfflineDataset> {
    let dataset = match &config.dataset_path {
        Some(path) => dataset_io::load(path)?,
        None => generate_dataset(
            env,
            config.dataset_kind,
            config.dataset_size,
            config.dataset_seed,
        )?,
    };
    if dataset.obs_dim() != env.spec().obs_dim || dataset.act_dim() != env.spec().act_dim {
        return Err(Error::Dimension(format!(
            "dataset dims ({}, {}) do not match {} ({}, {})",
            dataset.obs_dim(),
            dataset.act_dim(),
            env.name(),
            env.spec().obs_dim,
            env.spec().act_dim
        )));
    }
    Ok(dataset)
}

struct Recorder<'a> {
    run_id: &'a str,
    seed: u64,
    rows: Vec<MetricsRow>,
    evaluations: Vec<Evaluation>,
    max_abs_q: f64,
}

impl<'a> Recorder<'a> {
    fn new(run_id: &'a str, seed: u64) -> Self {
        Recorder {
            run_id,
            seed,
            rows: Vec::new(),
            evaluations: Vec::new(),
            max_abs_q: 0.0,
        }
    }

    fn record(
        &mut self,
        step: usize,
        metrics: Option<&StepMetrics>,
        eval: Option<EvalResult>,
        log: bool,
    ) {
        if let Some(q) = metrics.and_then(|m| m.max_abs_q) {
            self.max_abs_q = self.max_abs_q.max(q);
        }
        if !log && eval.is_none() {
            return;
        }
        let mut row = MetricsRow::new(self.run_id, self.seed, step as u64);
        if let Some(m) = metrics {
            row = row.with_step_metrics(m);
        }
        if let Some(e) = eval {
            row.eval_return = Some(e.mean_return);
            row.norm_score = Some(e.normalized_score);
            self.evaluations.push(Evaluation {
                step: step as u64,
                mean_return: e.mean_return,
                normalized_score: e.normalized_score,
            });
        }
        self.rows.push(row);
    }

    fn finish(self, agent: Agent, error: Option<Error>, final_evals: usize) -> SeedRun {
        SeedRun {
            seed: self.seed,
            agent,
            rows: self.rows,
            evaluations: self.evaluations,
            max_abs_q: self.max_abs_q,
            error: error.map(|e| e.to_string()),
            final_evals,
        }
    }
}

fn is_eval_step(step: usize, total: usize, every: usize) -> bool {
    step.is_multiple_of(every) || step == total
}

/// Offline training of one seed: evaluation at step 0, every `eval_every`
/// steps and at the last step.
pub fn train_offline_seed(
    config: &RunConfig,
    env: &Env,
    dataset: &OfflineDataset,
    seed: u64,
) -> Result<SeedRun> {
    let mut agent = Agent::new(config, env.spec(), seed)?;
    let run_id = config.run_id();
    let mut rec = Recorder::new(&run_id, seed);
    let mut sampler = BatchSampler::new(seed, config.batch_size)?;
    let initial = evaluate(&mut agent, env, config.eval_episodes, seed)?;
    rec.record(0, None, Some(initial), true);
    for step in 1..=config.total_steps {
        let batch = sampler.sample(dataset)?;
        let metrics = match agent.train_step(&batch) {
            Ok(m) => m,
            Err(e) => return Ok(rec.finish(agent, Some(e), config.final_evals)),
        };
        let eval = if is_eval_step(step, config.total_steps, config.eval_every) {
            match evaluate(&mut agent, env, config.eval_episodes, seed) {
                Ok(e) => Some(e),
                Err(e) => return Ok(rec.finish(agent, Some(e), config.final_evals)),
            }
        } else {
            None
        };
        let log = step % config.log_every == 0;
        rec.record(step, Some(&metrics), eval, log);
    }
    Ok(rec.finish(agent, None, config.final_evals))
}

/// Online fine-tuning of one seed with the `eta` mixing schedule.
///
/// The agent acts greedily in the live environment and stores every
/// transition in an online buffer. Each batch draws `round(eta M)` samples
/// from `dataset` and the rest from the buffer; while the buffer holds fewer
/// transitions than its quota, the shortfall comes from `dataset`.
pub fn finetune_seed(
    config: &RunConfig,
    env: &Env,
    dataset: &OfflineDataset,
    mut agent: Agent,
    seed: u64,
) -> Result<SeedRun> {
    let run_id = format!("finetune:{}", config.run_id());
    let mut rec = Recorder::new(&run_id, seed);
    let mut sampler = BatchSampler::new(seed, config.batch_size)?;
    let total = config.online_steps;
    let initial = evaluate(&mut agent, env, config.eval_episodes, seed)?;
    rec.record(0, None, Some(initial), true);

    let mut online: Vec<Transition> = Vec::with_capacity(total);
    let mut episode = 0u64;
    let episode_seed = |ep: u64| {
        ONLINE_SEED_OFFSET
            .wrapping_add(seed.wrapping_mul(1_000_003))
            .wrapping_add(ep)
    };
    let mut state = env.reset(episode_seed(episode));
    for t in 1..=total {
        let action = match agent.act(&state.observation) {
            Ok(a) => env.canonical_action(&a),
            Err(e) => return Ok(rec.finish(agent, Some(e), config.final_evals)),
        };
        let out = env.step(&state, &action)?;
        online.push(Transition {
            s: state.observation.clone(),
            a: action,
            r: out.reward,
            s_next: out.state.observation.clone(),
            done: out.done,
        });
        state = if out.done {
            episode += 1;
            env.reset(episode_seed(episode))
        } else {
            out.state
        };

        let (_, n_on) = batch_split(t, total, config.batch_size);
        let n_on = n_on.min(online.len());
        let n_off = config.batch_size - n_on;
        let mut picks = sampler.sample_from(dataset.transitions(), n_off)?;
        picks.extend(sampler.sample_from(&online, n_on)?);
        let batch = Batch::from_transitions(picks)?;
        let metrics = match agent.train_step(&batch) {
            Ok(m) => m,
            Err(e) => return Ok(rec.finish(agent, Some(e), config.final_evals)),
        };
        let eval = if is_eval_step(t, total, config.eval_every) {
            match evaluate(&mut agent, env, config.eval_episodes, seed) {
                Ok(e) => Some(e),
                Err(e) => return Ok(rec.finish(agent, Some(e), config.final_evals)),
            }
        } else {
            None
        };
        rec.record(t, Some(&metrics), eval, t % config.log_every == 0);
    }
    Ok(rec.finish(agent, None, config.final_evals))
}

fn write_seed(dir: &Path, run: &SeedRun) -> Result<()> {
    let seed_dir = dir.join(format!("seed_{}", run.seed));
    std::fs::create_dir_all(&seed_dir).map_err(|e| Error::io(&seed_dir, e))?;
    write_metrics(&seed_dir.join(METRICS_FILE), &run.rows)?;
    let marker = seed_dir.join(FAILED_MARKER);
    match &run.error {
        Some(msg) => {
            std::fs::write(&marker, format!("{msg}\n")).map_err(|e| Error::io(&marker, e))?
        }
        None => {
            if marker.exists() {
                std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
            }
            let step = run.rows.last().map_or(0, |r| r.step);
            run.agent
                .save(&seed_dir.join(CHECKPOINT_FILE), run.seed, step)?;
        }
    }
    Ok(())
}

fn finish_run(
    config: &RunConfig,
    run_id: String,
    dir: PathBuf,
    seeds: Vec<SeedRun>,
) -> Result<RunOutput> {
    let report = report::aggregate_dir(&dir, config.final_evals)?;
    report.write(&dir)?;
    Ok(RunOutput {
        run_id,
        dir,
        seeds,
        report,
    })
}

/// Trains every configured seed offline and writes metrics, checkpoints and a report
/// under `out_dir/<agent>-<env>-<kind>/`.
pub fn run_offline(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let env = Env::by_name(&config.env)?;
    let dataset = load_or_generate(config, &env)?;
    let dir = config.out_dir.join(config.run_dir_name());
    let mut seeds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let run = train_offline_seed(config, &env, &dataset, seed)?;
        write_seed(&dir, &run)?;
        seeds.push(run);
    }
    finish_run(config, config.run_id(), dir, seeds)
}

/// Fine-tunes the agent stored at `checkpoint` once per configured seed and
/// writes results under `out_dir/finetune-<agent>-<env>-<kind>/`.
pub fn run_offline_to_online(config: &RunConfig, checkpoint: &Path) -> Result<RunOutput> {
    config.validate()?;
    let env = Env::by_name(&config.env)?;
    let dataset = load_or_generate(config, &env)?;
    let (mut agent, _) = Agent::load(checkpoint)?;
    if agent.obs_dim() != env.spec().obs_dim {
        return Err(Error::Dimension(format!(
            "checkpoint observation size {} does not match {}",
            agent.obs_dim(),
            env.name()
        )));
    }
    agent.set_learning_rate(config.net.learning_rate);
    let mut config = config.clone();
    config.agent = agent.kind();
    let dir = config
        .out_dir
        .join(format!("finetune-{}", config.run_dir_name()));
    let mut seeds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let run = finetune_seed(&config, &env, &dataset, agent.clone(), seed)?;
        write_seed(&dir, &run)?;
        seeds.push(run);
    }
    finish_run(&config, format!("finetune:{}", config.run_id()), dir, seeds)
}
