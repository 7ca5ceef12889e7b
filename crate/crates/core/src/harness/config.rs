//! Run configuration.
//!
//! Config files are UTF-8, one `key = value` per line; `#` starts a comment.
//! Command-line overrides use the same keys as `--key=value` and win.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::BehaviorPolicyKind;
use crate::nn::NetConfig;
use crate::saw::{CriticLoss, SawHyper};
use crate::{Error, Result};

/// Environment variable that replaces the configured seed list.
pub const SEED_ENV_VAR: &str = "SAWLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Saw,
    D3g,
    Bc,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Saw => "saw",
            AgentKind::D3g => "d3g",
            AgentKind::Bc => "bc",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saw" => Ok(AgentKind::Saw),
            "d3g" => Ok(AgentKind::D3g),
            "bc" => Ok(AgentKind::Bc),
            other => Err(Error::Config(format!(
                "unknown agent {other:?} (expected saw, d3g or bc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: String,
    pub dataset_kind: BehaviorPolicyKind,
    /// Load the dataset from here instead of generating it.
    pub dataset_path: Option<PathBuf>,
    /// Size and seed of a generated dataset.
    pub dataset_size: usize,
    pub dataset_seed: u64,
    pub agent: AgentKind,
    /// Offline gradient steps.
    pub total_steps: usize,
    /// Online steps during fine-tuning.
    pub online_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Number of trailing evaluations averaged into the final score.
    pub final_evals: usize,
    /// Write a metrics row every `log_every` training steps (evaluation rows are always written).
    pub log_every: usize,
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    pub net: NetConfig,
    pub saw: SawHyper,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: "pointmass2d".into(),
            dataset_kind: BehaviorPolicyKind::Medium,
            dataset_path: None,
            dataset_size: 50_000,
            dataset_seed: 0,
            agent: AgentKind::Saw,
            total_steps: 50_000,
            online_steps: 10_000,
            eval_every: 1000,
            eval_episodes: 10,
            final_evals: 10,
            log_every: 1,
            seeds: vec![0, 1, 2, 3, 4],
            batch_size: crate::dataset::DEFAULT_BATCH_SIZE,
            net: NetConfig::default(),
            saw: SawHyper::default(),
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Every key accepted by [`RunConfig::set`].
pub const CONFIG_KEYS: [&str; 27] = [
    "env",
    "dataset_kind",
    "dataset_path",
    "dataset_size",
    "dataset_seed",
    "agent",
    "total_steps",
    "online_steps",
    "eval_every",
    "eval_episodes",
    "final_evals",
    "log_every",
    "seeds",
    "batch_size",
    "hidden",
    "learning_rate",
    "beta",
    "tau_expectile",
    "gamma",
    "rho_polyak",
    "use_alpha_normalization",
    "alpha",
    "weight_clip",
    "critic_loss",
    "out_dir",
    "seed",
    "n_seeds",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "env" => self.env = value.to_string(),
            "dataset_kind" => {
                self.dataset_kind = value
                    .parse()
                    .map_err(|e: Error| Error::Config(e.to_string()))?
            }
            "dataset_path" => self.dataset_path = (!value.is_empty()).then(|| PathBuf::from(value)),
            "dataset_size" => self.dataset_size = parse(key, value)?,
            "dataset_seed" => self.dataset_seed = parse(key, value)?,
            "agent" => self.agent = value.parse()?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "online_steps" => self.online_steps = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "final_evals" => self.final_evals = parse(key, value)?,
            "log_every" => self.log_every = parse(key, value)?,
            "seeds" | "seed" => self.seeds = parse_list(key, value)?,
            "n_seeds" => self.seeds = (0..parse::<u64>(key, value)?).collect(),
            "batch_size" => self.batch_size = parse(key, value)?,
            "hidden" => self.net.hidden = parse_list(key, value)?,
            "learning_rate" => self.net.learning_rate = parse(key, value)?,
            "beta" => self.saw.beta = parse(key, value)?,
            "tau_expectile" => self.saw.tau_expectile = parse(key, value)?,
            "gamma" => self.saw.gamma = parse(key, value)?,
            "rho_polyak" => self.saw.rho_polyak = parse(key, value)?,
            "use_alpha_normalization" => self.saw.use_alpha_normalization = parse(key, value)?,
            "alpha" => self.saw.alpha = parse(key, value)?,
            "weight_clip" => self.saw.weight_clip = parse(key, value)?,
            "critic_loss" => {
                self.saw.critic_loss = match value {
                    "mse" => CriticLoss::Mse,
                    "expectile" => CriticLoss::Expectile,
                    other => {
                        return Err(Error::Config(format!(
                            "invalid critic_loss {other:?} (expected mse or expectile)"
                        )))
                    }
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Applies `--key=value` (or `key=value`) overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for item in overrides {
            let item = item.as_ref();
            let body = item.strip_prefix("--").unwrap_or(item);
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not --key=value")))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Replaces the seed list with the value of `SAWLAB_SEED`, if set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        match std::env::var(SEED_ENV_VAR) {
            Ok(v) => self
                .set("seeds", &v)
                .map_err(|e| Error::Config(format!("{SEED_ENV_VAR}: {e}"))),
            Err(_) => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dataset_size", self.dataset_size),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
            ("final_evals", self.final_evals),
            ("log_every", self.log_every),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.net.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.net.learning_rate >= 0.0 && self.net.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be a non-negative real".into(),
            ));
        }
        self.saw
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// `agent:env:kind`, used as the run id in metrics files.
    pub fn run_id(&self) -> String {
        format!("{}:{}:{}", self.agent, self.env, self.dataset_kind)
    }

    /// Filesystem-safe form of [`RunConfig::run_id`].
    pub fn run_dir_name(&self) -> String {
        self.run_id().replace(':', "-")
    }
}
