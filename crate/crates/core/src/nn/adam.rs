use ndarray::Zip;

use super::mlp::{Gradient, Mlp};
use crate::Result;

pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;

/// Bias-corrected Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Gradient,
    second_moment: Gradient,
}

impl AdamState {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        AdamState {
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: Gradient::zeros_like(net),
            second_moment: Gradient::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grad: &Gradient) -> Result<()> {
        grad.check_against(net)?;
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);

        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            Zip::from(&mut layer.weights)
                .and(&mut self.first_moment.weights[k])
                .and(&mut self.second_moment.weights[k])
                .and(&grad.weights[k])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut self.first_moment.biases[k])
                .and(&mut self.second_moment.biases[k])
                .and(&grad.biases[k])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}

/// Applies one Adam update to `net` in place.
pub fn adam_step(net: &mut Mlp, state: &mut AdamState, grad: &Gradient) -> Result<()> {
    state.step(net, grad)
}
