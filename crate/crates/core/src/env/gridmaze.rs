//! Stochastic sparse-reward grid maze.
//!
//! Actions are 2-d vectors `(dx, dy)` snapped to the nearest cardinal move;
//! `dx` moves along columns and `dy` along rows (positive `dy` is down).
//! With probability `p_slip` a uniformly chosen *other* move is executed.
//! Moves into walls or off the grid leave the agent in place.

use std::collections::VecDeque;

use crate::{Error, Result};

pub const DEFAULT_LAYOUT: &str = include_str!("../../assets/gridmaze.txt");
pub const DEFAULT_P_SLIP: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 50;

/// Cell coordinates `(row, col)`.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Right,
    Down,
    Left,
    Up,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Right, Move::Down, Move::Left, Move::Up];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Unit action vector `(dx, dy)`.
    pub fn as_action(self) -> [f64; 2] {
        match self {
            Move::Right => [1.0, 0.0],
            Move::Down => [0.0, 1.0],
            Move::Left => [-1.0, 0.0],
            Move::Up => [0.0, -1.0],
        }
    }

    /// Nearest cardinal direction; ties go to the horizontal axis.
    pub fn snap(action: &[f64]) -> Move {
        let (dx, dy) = (action[0], action[1]);
        if dx.abs() >= dy.abs() {
            if dx >= 0.0 {
                Move::Right
            } else {
                Move::Left
            }
        } else if dy > 0.0 {
            Move::Down
        } else {
            Move::Up
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridObservation {
    /// `(col / (width - 1), row / (height - 1))`
    Coordinates,
    /// One indicator per grid cell, row-major.
    OneHot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    pub start: Cell,
    pub goal: Cell,
}

impl Layout {
    /// Parses `#` wall, `.` free, `S` start, `G` goal. Blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("empty maze layout".into()));
        }
        let mut walls = Vec::with_capacity(width * height);
        let (mut start, mut goal) = (None, None);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::InvalidArgument(format!(
                    "maze row {r} has ragged width"
                )));
            }
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'S' => {
                        start = Some((r, c));
                        walls.push(false);
                    }
                    'G' => {
                        goal = Some((r, c));
                        walls.push(false);
                    }
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "unexpected maze character {other:?}"
                        )))
                    }
                }
            }
        }
        let start = start.ok_or_else(|| Error::InvalidArgument("maze has no start".into()))?;
        let goal = goal.ok_or_else(|| Error::InvalidArgument("maze has no goal".into()))?;
        let layout = Layout {
            width,
            height,
            walls,
            start,
            goal,
        };
        if layout.distances_to_goal()[layout.index(start)].is_none() {
            return Err(Error::InvalidArgument("goal unreachable from start".into()));
        }
        Ok(layout)
    }

    pub fn index(&self, (r, c): Cell) -> usize {
        r * self.width + c
    }

    pub fn cell(&self, index: usize) -> Cell {
        (index / self.width, index % self.width)
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.walls[self.index(cell)]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.width * self.height)
            .filter(|&i| !self.walls[i])
            .map(|i| self.cell(i))
    }

    /// Deterministic successor of `cell` under `mv`.
    pub fn successor(&self, (r, c): Cell, mv: Move) -> Cell {
        let (nr, nc) = match mv {
            Move::Right => (r as isize, c as isize + 1),
            Move::Down => (r as isize + 1, c as isize),
            Move::Left => (r as isize, c as isize - 1),
            Move::Up => (r as isize - 1, c as isize),
        };
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            return (r, c);
        }
        let next = (nr as usize, nc as usize);
        if self.is_wall(next) {
            (r, c)
        } else {
            next
        }
    }

    /// Shortest-path move counts to the goal, by breadth-first search.
    pub fn distances_to_goal(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.width * self.height];
        let mut queue = VecDeque::new();
        dist[self.index(self.goal)] = Some(0);
        queue.push_back(self.goal);
        while let Some(cell) = queue.pop_front() {
            let d = dist[self.index(cell)].unwrap_or_default();
            // moves are reversible, so predecessors are the free neighbours
            for mv in Move::ALL {
                let nb = self.successor(cell, mv);
                if nb != cell && dist[self.index(nb)].is_none() {
                    dist[self.index(nb)] = Some(d + 1);
                    queue.push_back(nb);
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMaze {
    pub layout: Layout,
    pub p_slip: f64,
    pub horizon: usize,
    pub observation: GridObservation,
    distances: Vec<Option<usize>>,
}

impl GridMaze {
    pub fn new(
        layout: Layout,
        p_slip: f64,
        horizon: usize,
        observation: GridObservation,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_slip) {
            return Err(Error::InvalidArgument(format!(
                "p_slip {p_slip} outside [0, 1]"
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        let distances = layout.distances_to_goal();
        Ok(GridMaze {
            layout,
            p_slip,
            horizon,
            observation,
            distances,
        })
    }

    pub fn obs_dim(&self) -> usize {
        match self.observation {
            GridObservation::Coordinates => 2,
            GridObservation::OneHot => self.layout.width * self.layout.height,
        }
    }

    pub fn observe(&self, (r, c): Cell) -> Vec<f64> {
        match self.observation {
            GridObservation::Coordinates => vec![
                c as f64 / (self.layout.width.max(2) - 1) as f64,
                r as f64 / (self.layout.height.max(2) - 1) as f64,
            ],
            GridObservation::OneHot => {
                let mut v = vec![0.0; self.obs_dim()];
                v[self.layout.index((r, c))] = 1.0;
                v
            }
        }
    }

    /// Inverse of [`GridMaze::observe`] (nearest cell for coordinates).
    pub fn decode(&self, obs: &[f64]) -> Cell {
        match self.observation {
            GridObservation::Coordinates => {
                let c = (obs[0] * (self.layout.width.max(2) - 1) as f64).round();
                let r = (obs[1] * (self.layout.height.max(2) - 1) as f64).round();
                (
                    (r.max(0.0) as usize).min(self.layout.height - 1),
                    (c.max(0.0) as usize).min(self.layout.width - 1),
                )
            }
            GridObservation::OneHot => {
                let (i, _) =
                    obs.iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                            if v > best.1 {
                                (i, v)
                            } else {
                                best
                            }
                        });
                self.layout.cell(i)
            }
        }
    }

    /// First move along a shortest path, preferring `Move::ALL` order on ties.
    pub fn expert_move(&self, cell: Cell) -> Move {
        let here = self.distances[self.layout.index(cell)];
        let mut best = (Move::Right, here);
        for mv in Move::ALL {
            let d = self.distances[self.layout.index(self.layout.successor(cell, mv))];
            if let Some(d) = d {
                if best.1.is_none_or(|b| d < b) {
                    best = (mv, Some(d));
                }
            }
        }
        best.0
    }

    /// Distribution over executed moves for an intended move.
    pub fn move_distribution(&self, intended: Move) -> [(Move, f64); 4] {
        let other = self.p_slip / 3.0;
        Move::ALL.map(|m| {
            (
                m,
                if m == intended {
                    1.0 - self.p_slip
                } else {
                    other
                },
            )
        })
    }
}
