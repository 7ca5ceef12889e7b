/// Deterministic 2-d point mass: `s' = s + 0.1 * clamp(a)`, reward `-|s' - goal|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass2D {
    pub goal: [f64; 2],
    pub start_low: f64,
    pub start_high: f64,
    pub step_scale: f64,
    pub goal_radius: f64,
    pub action_bound: f64,
    pub horizon: usize,
}

impl Default for PointMass2D {
    fn default() -> Self {
        PointMass2D {
            goal: [1.0, 1.0],
            start_low: -1.0,
            start_high: 1.0,
            step_scale: 0.1,
            goal_radius: 0.05,
            action_bound: 1.0,
            horizon: 100,
        }
    }
}

impl PointMass2D {
    pub fn distance_to_goal(&self, s: &[f64]) -> f64 {
        ((s[0] - self.goal[0]).powi(2) + (s[1] - self.goal[1]).powi(2)).sqrt()
    }

    /// Returns `(s', reward, reached_goal)` for an already-clamped action.
    pub fn transition(&self, s: &[f64], a: &[f64]) -> (Vec<f64>, f64, bool) {
        let next = vec![s[0] + self.step_scale * a[0], s[1] + self.step_scale * a[1]];
        let dist = self.distance_to_goal(&next);
        (next, -dist, dist <= self.goal_radius)
    }

    /// Straight-line controller: `clamp((goal - s) / 0.1)`.
    pub fn expert_action(&self, s: &[f64]) -> Vec<f64> {
        (0..2)
            .map(|i| {
                ((self.goal[i] - s[i]) / self.step_scale)
                    .clamp(-self.action_bound, self.action_bound)
            })
            .collect()
    }
}
