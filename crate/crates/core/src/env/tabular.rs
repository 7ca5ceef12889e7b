//! Exact tabular dynamic programming on [`GridMaze`], used as test oracles.
//!
//! Rewards are 1 on entering the goal and 0 otherwise; the goal is terminal.

use super::{GridMaze, Move};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct TabularModel {
    /// Grid cell index (row-major) of each tabular state.
    pub cells: Vec<usize>,
    /// `transitions[s][a]` lists `(s', probability)`.
    pub transitions: Vec<[Vec<(usize, f64)>; 4]>,
    pub goal: usize,
    pub start: usize,
    pub deterministic: bool,
}

impl TabularModel {
    pub fn from_maze(maze: &GridMaze) -> Self {
        let layout = &maze.layout;
        let cells: Vec<usize> = layout.free_cells().map(|c| layout.index(c)).collect();
        let mut state_of = vec![usize::MAX; layout.width * layout.height];
        for (s, &c) in cells.iter().enumerate() {
            state_of[c] = s;
        }
        let transitions = cells
            .iter()
            .map(|&c| {
                let cell = layout.cell(c);
                Move::ALL.map(|intended| {
                    let mut row: Vec<(usize, f64)> = Vec::new();
                    for (executed, p) in maze.move_distribution(intended) {
                        if p == 0.0 {
                            continue;
                        }
                        let next = state_of[layout.index(layout.successor(cell, executed))];
                        match row.iter_mut().find(|(s, _)| *s == next) {
                            Some(entry) => entry.1 += p,
                            None => row.push((next, p)),
                        }
                    }
                    row
                })
            })
            .collect();
        TabularModel {
            goal: state_of[layout.index(layout.goal)],
            start: state_of[layout.index(layout.start)],
            cells,
            transitions,
            deterministic: maze.p_slip == 0.0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.cells.len()
    }

    pub fn reward(&self, next: usize) -> f64 {
        if next == self.goal {
            1.0
        } else {
            0.0
        }
    }

    /// States reachable in one step from `s` (deterministic successors).
    pub fn neighbours(&self, s: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for row in &self.transitions[s] {
            for &(next, p) in row {
                if p > 0.0 && !out.contains(&next) {
                    out.push(next);
                }
            }
        }
        out
    }
}

fn check_discount(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!(
            "discount {gamma} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Optimal state values from action-value iteration,
/// `Q(s,a) = sum_s' p(s'|s,a) [r + gamma max_a' Q(s',a')]`.
pub fn qsa_value_iteration(model: &TabularModel, gamma: f64, tol: f64) -> Result<Vec<f64>> {
    check_discount(gamma)?;
    let n = model.n_states();
    let mut v = vec![0.0; n];
    loop {
        let mut delta: f64 = 0.0;
        let mut next_v = vec![0.0; n];
        for s in 0..n {
            if s == model.goal {
                continue;
            }
            let best = model.transitions[s]
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&(sp, p)| p * (model.reward(sp) + gamma * v[sp]))
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - v[s]).abs());
            next_v[s] = best;
        }
        v = next_v;
        if delta < tol {
            return Ok(v);
        }
    }
}

/// Optimal state values from state-to-state value iteration,
/// `Q(s,s') = r(s,s') + gamma max_{s'' in N(s')} Q(s',s'')`, `V(s) = max_{s'} Q(s,s')`.
///
/// Only meaningful for deterministic dynamics.
pub fn qss_value_iteration(model: &TabularModel, gamma: f64, tol: f64) -> Result<Vec<f64>> {
    check_discount(gamma)?;
    if !model.deterministic {
        return Err(Error::InvalidArgument(
            "state-to-state backups need deterministic dynamics".into(),
        ));
    }
    let n = model.n_states();
    let neighbours: Vec<Vec<usize>> = (0..n).map(|s| model.neighbours(s)).collect();
    // q[s][k] is Q(s, neighbours[s][k])
    let mut q: Vec<Vec<f64>> = neighbours.iter().map(|nb| vec![0.0; nb.len()]).collect();
    let max_q = |q: &Vec<Vec<f64>>, s: usize| -> f64 {
        if s == model.goal {
            0.0
        } else {
            q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
    };
    loop {
        let mut delta: f64 = 0.0;
        let mut next_q = q.clone();
        for s in 0..n {
            if s == model.goal {
                continue;
            }
            for (k, &sp) in neighbours[s].iter().enumerate() {
                let target = model.reward(sp) + gamma * max_q(&q, sp);
                delta = delta.max((target - q[s][k]).abs());
                next_q[s][k] = target;
            }
        }
        q = next_q;
        if delta < tol {
            return Ok((0..n).map(|s| max_q(&q, s)).collect());
        }
    }
}

/// Probability of reaching the goal from the start within `horizon` steps,
/// either under the optimal policy (`policy = None`) or under a fixed
/// per-state move.
pub fn success_probability(model: &TabularModel, horizon: usize, policy: Option<&[Move]>) -> f64 {
    let n = model.n_states();
    // p[s] = probability of reaching the goal within k remaining steps
    let mut p = vec![0.0; n];
    p[model.goal] = 1.0;
    for _ in 0..horizon {
        let mut next = p.clone();
        for s in 0..n {
            if s == model.goal {
                continue;
            }
            let value_of = |a: usize| -> f64 {
                model.transitions[s][a]
                    .iter()
                    .map(|&(sp, pr)| pr * p[sp])
                    .sum::<f64>()
            };
            next[s] = match policy {
                Some(moves) => value_of(moves[s].index()),
                None => (0..4).map(value_of).fold(f64::NEG_INFINITY, f64::max),
            };
        }
        p = next;
    }
    p[model.start]
}

/// The scripted expert's move in every tabular state.
pub fn expert_moves(maze: &GridMaze, model: &TabularModel) -> Vec<Move> {
    model
        .cells
        .iter()
        .map(|&c| maze.expert_move(maze.layout.cell(c)))
        .collect()
}
