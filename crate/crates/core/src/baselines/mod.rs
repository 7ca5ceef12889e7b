//! Baseline agents: D3G (a QSS learner without value regularization) and
//! behavior cloning.

mod bc;
mod d3g;

pub use bc::{BcAgent, BcStepStats};
pub use d3g::{D3gAgent, D3gHyper, D3gStepStats};
