//! State-advantage-weighted QSS learning.
//!
//! The agent learns
//! - a value function `V(s)` by expectile regression toward `min_i Q'_i(s, s')`,
//! - two state critics `Q_i(s, s')` by regression toward `r + gamma (1 - d) V(s')`,
//! - an inverse-dynamics actor `I(s, s')`, imitation weighted by `exp(beta A(s, s'))`,
//! - a forward model `F(s, a)` predicting `s'`,
//! - a prediction model `M(s)` proposing the next state to reach.
//!
//! At evaluation time the agent acts with `a = I(s, M(s))`.

mod agent;

pub use agent::{forward_model_loss_grad, SawAgent, SawStepStats, NETWORK_NAMES};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Loss used for the critics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticLoss {
    /// Plain mean squared error (default).
    Mse,
    /// Expectile loss with `tau_expectile` on `y - Q`.
    Expectile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawHyper {
    /// Advantage temperature.
    pub beta: f64,
    pub tau_expectile: f64,
    pub gamma: f64,
    pub rho_polyak: f64,
    /// `alpha = N / sum_i |Q'(s_i, s'_i)|` per batch when set, otherwise `alpha`.
    pub use_alpha_normalization: bool,
    pub alpha: f64,
    pub weight_clip: f64,
    pub critic_loss: CriticLoss,
}

impl Default for SawHyper {
    fn default() -> Self {
        SawHyper {
            beta: 5.0,
            tau_expectile: 0.7,
            gamma: 0.99,
            rho_polyak: 0.005,
            use_alpha_normalization: true,
            alpha: 1.0,
            weight_clip: 100.0,
            critic_loss: CriticLoss::Mse,
        }
    }
}

impl SawHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta {} must be a non-negative real", self.beta));
        }
        if !(self.tau_expectile > 0.0 && self.tau_expectile < 1.0) {
            return bad(format!(
                "tau_expectile {} outside (0, 1)",
                self.tau_expectile
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(self.rho_polyak > 0.0 && self.rho_polyak <= 1.0) {
            return bad(format!("rho_polyak {} outside (0, 1]", self.rho_polyak));
        }
        if !(self.weight_clip > 0.0) {
            return bad(format!("weight_clip {} must be positive", self.weight_clip));
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        Ok(())
    }
}

/// `|tau - 1(u < 0)| * u^2`.
pub fn expectile_loss(u: f64, tau: f64) -> f64 {
    expectile_weight(u, tau) * u * u
}

/// Derivative of [`expectile_loss`] with respect to `u`.
pub fn expectile_loss_grad(u: f64, tau: f64) -> f64 {
    2.0 * expectile_weight(u, tau) * u
}

fn expectile_weight(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

/// `N / sum_i |q_i|`.
pub fn alpha_normalization(q: &[f64]) -> Result<f64> {
    let total: f64 = q.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return Err(Error::DegenerateCritic);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("alpha normalization".into()));
    }
    Ok(q.len() as f64 / total)
}

/// `min(exp(beta * A), clip)`, kept strictly positive when `exp` underflows.
pub fn advantage_weight(advantage: f64, beta: f64, clip: f64) -> f64 {
    (beta * advantage).exp().clamp(f64::MIN_POSITIVE, clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn expectile_examples() {
        assert_eq!(expectile_loss(2.0, 0.5), 2.0);
        assert!((expectile_loss(2.0, 0.7) - 2.8).abs() < 1e-15);
        assert!((expectile_loss(-2.0, 0.7) - 1.2).abs() < 1e-15);
        for tau in [0.1, 0.5, 0.9] {
            assert_eq!(expectile_loss(0.0, tau), 0.0);
        }
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_normalization(&[1.0, -3.0]).unwrap(), 0.5);
        assert!(matches!(
            alpha_normalization(&[0.0, 0.0]),
            Err(Error::DegenerateCritic)
        ));
    }

    #[test]
    fn weight_examples() {
        assert_eq!(advantage_weight(0.0, 0.0, 100.0), 1.0);
        assert_eq!(advantage_weight(123.0, 0.0, 100.0), 1.0);
        assert!((advantage_weight(0.2, 5.0, 100.0) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(advantage_weight(1.0, 5.0, 100.0), 100.0);
        assert_eq!(advantage_weight(1e6, 5.0, 100.0), 100.0);
    }

    #[test]
    fn defaults_are_valid() {
        SawHyper::default().validate().unwrap();
        let bad = SawHyper {
            tau_expectile: 1.0,
            ..SawHyper::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn half_expectile_is_half_square(u in -1e3f64..1e3) {
            prop_assert_eq!(expectile_loss(u, 0.5), 0.5 * u * u);
        }

        #[test]
        fn expectile_is_non_negative(u in -1e3f64..1e3, tau in 0.01f64..0.99) {
            prop_assert!(expectile_loss(u, tau) >= 0.0);
        }

        #[test]
        fn weights_positive_and_capped(a in -50.0f64..50.0, beta in 0.0f64..20.0) {
            let w = advantage_weight(a, beta, 100.0);
            prop_assert!(w > 0.0 && w <= 100.0);
        }
    }
}
