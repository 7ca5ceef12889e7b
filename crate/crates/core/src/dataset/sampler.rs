use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{OfflineDataset, Transition};
use crate::{Error, Result};

pub const DEFAULT_BATCH_SIZE: usize = 256;

/// Column-stacked mini-batch, one row per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// 1.0 for terminal transitions, 0.0 otherwise.
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions<'a, I>(transitions: I) -> Result<Batch>
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        let items: Vec<&Transition> = transitions.into_iter().collect();
        let first = items.first().ok_or(Error::EmptyDataset)?;
        let (n, obs, act) = (items.len(), first.s.len(), first.a.len());
        let mut batch = Batch {
            states: Array2::zeros((n, obs)),
            actions: Array2::zeros((n, act)),
            rewards: Array1::zeros(n),
            next_states: Array2::zeros((n, obs)),
            dones: Array1::zeros(n),
        };
        for (i, t) in items.iter().enumerate() {
            if t.s.len() != obs || t.s_next.len() != obs || t.a.len() != act {
                return Err(Error::Dimension(format!(
                    "batch row {i} has inconsistent dims"
                )));
            }
            batch.states.row_mut(i).assign(&Array1::from(t.s.clone()));
            batch.actions.row_mut(i).assign(&Array1::from(t.a.clone()));
            batch.rewards[i] = t.r;
            batch
                .next_states
                .row_mut(i)
                .assign(&Array1::from(t.s_next.clone()));
            batch.dones[i] = if t.done { 1.0 } else { 0.0 };
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Uniform sampling with replacement, deterministic in its seed.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    rng: ChaCha8Rng,
    pub batch_size: usize,
}

impl BatchSampler {
    pub fn new(seed: u64, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(BatchSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            batch_size,
        })
    }

    pub fn sample_indices(&mut self, len: usize, n: usize) -> Result<Vec<usize>> {
        if len == 0 {
            return Err(Error::EmptyDataset);
        }
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be >= 1".into()));
        }
        Ok((0..n).map(|_| self.rng.random_range(0..len)).collect())
    }

    pub fn sample_batch(&mut self, dataset: &OfflineDataset, n: usize) -> Result<Vec<Transition>> {
        let idx = self.sample_indices(dataset.len(), n)?;
        Ok(idx
            .into_iter()
            .map(|i| dataset.transitions()[i].clone())
            .collect())
    }

    /// One mini-batch of `batch_size` rows.
    pub fn sample(&mut self, dataset: &OfflineDataset) -> Result<Batch> {
        let idx = self.sample_indices(dataset.len(), self.batch_size)?;
        Batch::from_transitions(idx.iter().map(|&i| &dataset.transitions()[i]))
    }

    /// Draws `n` transitions from `source` (uniformly, with replacement).
    pub fn sample_from<'a>(
        &mut self,
        source: &'a [Transition],
        n: usize,
    ) -> Result<Vec<&'a Transition>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let idx = self.sample_indices(source.len(), n)?;
        Ok(idx.into_iter().map(|i| &source[i]).collect())
    }
}
