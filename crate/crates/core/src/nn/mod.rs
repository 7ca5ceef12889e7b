//! Minimal neural-network substrate: dense MLPs, backprop, Adam, Polyak averaging.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::{adam_step, AdamState, DEFAULT_LEARNING_RATE};
pub use mlp::{polyak_update, Gradient, HiddenActivation, Layer, Mlp, OutputActivation, Trace};

use ndarray::{concatenate, Array2, ArrayView2, Axis};

/// Default hidden widths: two relu layers of 256 units.
pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

/// `[input, hidden..., output]`.
pub fn layer_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input);
    dims.extend_from_slice(hidden);
    dims.push(output);
    dims
}

/// Column-wise concatenation of two batches with the same row count.
pub fn hcat(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    concatenate![Axis(1), a, b]
}

/// Hidden widths and learning rate shared by every network of an agent.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }
}

/// Loss `mean_i w_i |f(x_i) - t_i|^2` and its parameter gradient.
///
/// `weights = None` means every weight is exactly 1.0; both cases share one
/// code path, so unit weights reproduce the unweighted gradient bit for bit.
pub fn weighted_regression(
    net: &Mlp,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    weights: Option<ndarray::ArrayView1<f64>>,
) -> crate::Result<(f64, Gradient)> {
    let trace = net.forward_trace(inputs)?;
    let pred = trace.output();
    if pred.dim() != targets.dim() {
        return Err(crate::Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            targets.dim()
        )));
    }
    let n = pred.nrows() as f64;
    let mut upstream = pred - &targets;
    let mut loss = 0.0;
    for (i, mut row) in upstream.rows_mut().into_iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        loss += w * row.iter().map(|e| e * e).sum::<f64>();
        row.mapv_inplace(|e| 2.0 * w * e / n);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(crate::Error::NonFinite("regression loss".into()));
    }
    let (grad, _) = net.backward_trace(&trace, upstream.view())?;
    Ok((loss, grad))
}
