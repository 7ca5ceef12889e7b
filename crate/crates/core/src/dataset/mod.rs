//! Transition storage, the binary dataset format, mini-batch sampling and
//! the normalized score.

mod io;
mod sampler;

pub use io::{decode, encode, load, save, DatasetHeader, FORMAT_VERSION};
pub use sampler::{Batch, BatchSampler, DEFAULT_BATCH_SIZE};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// An immutable, ordered, dimension-checked set of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    env_name: String,
    obs_dim: usize,
    act_dim: usize,
    transitions: Vec<Transition>,
    seed: u64,
    kind: String,
}

impl OfflineDataset {
    pub fn new(
        env_name: impl Into<String>,
        obs_dim: usize,
        act_dim: usize,
        transitions: Vec<Transition>,
        seed: u64,
        kind: impl Into<String>,
    ) -> Result<Self> {
        if obs_dim == 0 || act_dim == 0 {
            return Err(Error::Dimension(
                "obs_dim and act_dim must be positive".into(),
            ));
        }
        if transitions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, t) in transitions.iter().enumerate() {
            if t.s.len() != obs_dim || t.s_next.len() != obs_dim || t.a.len() != act_dim {
                return Err(Error::Dimension(format!(
                    "transition {i} does not match obs_dim {obs_dim} / act_dim {act_dim}"
                )));
            }
            if !t.r.is_finite() {
                return Err(Error::NonFinite(format!("reward of transition {i}")));
            }
        }
        Ok(OfflineDataset {
            env_name: env_name.into(),
            obs_dim,
            act_dim,
            transitions,
            seed,
            kind: kind.into(),
        })
    }

    pub fn env_name(&self) -> &str {
        &self.env_name
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Episode boundaries as `start..end` ranges; a trailing episode without
    /// a done flag is cut by the end of the dataset.
    pub fn episodes(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, t) in self.transitions.iter().enumerate() {
            if t.done {
                out.push(start..i + 1);
                start = i + 1;
            }
        }
        if start < self.transitions.len() {
            out.push(start..self.transitions.len());
        }
        out
    }

    /// Undiscounted return of every episode that ends with a done flag.
    pub fn complete_episode_returns(&self) -> Vec<f64> {
        self.episodes()
            .into_iter()
            .filter(|ep| self.transitions[ep.end - 1].done)
            .map(|ep| self.transitions[ep].iter().map(|t| t.r).sum())
            .collect()
    }

    /// Discounted return-to-go from every transition, within its episode.
    pub fn discounted_returns(&self, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.transitions.len()];
        for ep in self.episodes() {
            let mut acc = 0.0;
            for i in ep.rev() {
                acc = self.transitions[i].r + gamma * acc;
                out[i] = acc;
            }
        }
        out
    }

    /// Largest `|G_t|` over all transitions.
    pub fn max_abs_discounted_return(&self, gamma: f64) -> f64 {
        self.discounted_returns(gamma)
            .into_iter()
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// `(J_pi - J_r) / (J_e - J_r) * 100`, unclipped.
pub fn normalized_score(j_pi: f64, j_r: f64, j_e: f64) -> Result<f64> {
    if !(j_e > j_r) {
        return Err(Error::InvalidArgument(format!(
            "reference max {j_e} must exceed reference min {j_r}"
        )));
    }
    Ok((j_pi - j_r) / (j_e - j_r) * 100.0)
}
