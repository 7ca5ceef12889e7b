//! Dense feed-forward networks with analytic backpropagation.
//!
//! Every layer computes `z = x Wᵀ + b`. Hidden layers apply relu, the last
//! layer applies the network's [`OutputActivation`]. Weights are stored
//! row-major with shape `(out_dim, in_dim)`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputActivation {
    Identity,
    /// `bound * tanh(z)`, used for actions.
    TanhScaled {
        bound: f64,
    },
}

impl OutputActivation {
    fn apply(self, z: &mut Array2<f64>) {
        if let OutputActivation::TanhScaled { bound } = self {
            z.mapv_inplace(|v| bound * v.tanh());
        }
    }

    /// Turns `dL/dy` into `dL/dz` in place, given the activated output `y`.
    fn backprop(self, y: &Array2<f64>, d: &mut Array2<f64>) {
        if let OutputActivation::TanhScaled { bound } = self {
            Zip::from(d).and(y).for_each(|d, &y| {
                let t = y / bound;
                *d *= bound * (1.0 - t * t);
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    hidden: HiddenActivation,
    output: OutputActivation,
}

/// Activations recorded by [`Mlp::forward_trace`], consumed by [`Mlp::backward_trace`].
#[derive(Debug, Clone)]
pub struct Trace {
    layer_inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn into_output(self) -> Array2<f64> {
        self.output
    }
}

/// Per-parameter gradient, shape-matched to an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradient {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradient {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Flattened in checkpoint order: per layer, weights row-major then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn l2_norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn matches(&self, net: &Mlp) -> bool {
        self.weights.len() == net.layers.len()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(&net.layers)
                .all(|((w, b), l)| w.dim() == l.weights.dim() && b.len() == l.bias.len())
    }

    pub(crate) fn check_against(&self, net: &Mlp) -> Result<()> {
        if !self.matches(net) {
            return Err(Error::Shape(
                "gradient does not match network architecture".into(),
            ));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok(())
    }
}

impl Mlp {
    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(dims, output)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.in_dim() as f64).sqrt();
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-bound..=bound));
            layer
                .bias
                .mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize], output: OutputActivation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "an mlp needs at least an input and an output dimension".into(),
            ));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(
                "layer dimensions must be positive".into(),
            ));
        }
        if let OutputActivation::TanhScaled { bound } = output {
            if !(bound.is_finite() && bound > 0.0) {
                return Err(Error::InvalidArgument("tanh bound must be positive".into()));
            }
        }
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Mlp {
            layers,
            hidden: HiddenActivation::Relu,
            output,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, output: OutputActivation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Shape(format!("layer {k}: bias length != out dim")));
            }
            if k > 0 && layers[k - 1].out_dim() != l.in_dim() {
                return Err(Error::Shape(format!(
                    "layer {k}: input dim {} does not follow output dim {}",
                    l.in_dim(),
                    layers[k - 1].out_dim()
                )));
            }
        }
        Ok(Mlp {
            layers,
            hidden: HiddenActivation::Relu,
            output,
        })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Layer::out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> HiddenActivation {
        self.hidden
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_dims() == other.layer_dims()
            && self.hidden == other.hidden
            && self.output == other.output
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flattened parameters: per layer, weights row-major then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = it.next().unwrap_or_default();
            }
            for b in l.bias.iter_mut() {
                *b = it.next().unwrap_or_default();
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let last = self.layers.len() - 1;
        let mut x = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weights.t());
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(relu);
            }
            x = z;
        }
        self.output.apply(&mut x);
        Ok(x)
    }

    pub fn forward_trace(&self, input: ArrayView2<f64>) -> Result<Trace> {
        self.check_input(&input)?;
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weights.t());
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(relu);
            }
            layer_inputs.push(x);
            x = z;
        }
        self.output.apply(&mut x);
        Ok(Trace {
            layer_inputs,
            output: x,
        })
    }

    /// Gradient of `sum_rows <upstream_row, output_row>` with respect to the
    /// parameters and to the input batch.
    pub fn backward_trace(
        &self,
        trace: &Trace,
        upstream: ArrayView2<f64>,
    ) -> Result<(Gradient, Array2<f64>)> {
        if upstream.dim() != trace.output.dim() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.dim(),
                trace.output.dim()
            )));
        }
        if upstream.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("upstream gradient".into()));
        }
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut dz = upstream.to_owned();
        self.output.backprop(&trace.output, &mut dz);
        for k in (0..n).rev() {
            let x = &trace.layer_inputs[k];
            weights.push(dz.t().dot(x));
            biases.push(dz.sum_axis(Axis(0)));
            let mut dx = dz.dot(&self.layers[k].weights);
            if k > 0 {
                // relu'(z) is 1 exactly where the stored activation is positive
                Zip::from(&mut dx).and(x).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            dz = dx;
        }
        weights.reverse();
        biases.reverse();
        Ok((Gradient { weights, biases }, dz))
    }

    /// Runs a forward pass on `input` and backpropagates `upstream`.
    pub fn backward(&self, input: ArrayView2<f64>, upstream: ArrayView2<f64>) -> Result<Gradient> {
        let trace = self.forward_trace(input)?;
        Ok(self.backward_trace(&trace, upstream)?.0)
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input width {} != network input dim {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// `target <- rate * online + (1 - rate) * target`, parameter by parameter.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, rate: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::Shape(
            "polyak update across different architectures".into(),
        ));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "polyak rate {rate} outside [0, 1]"
        )));
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weights)
            .and(&o.weights)
            .for_each(|t, &o| *t = rate * o + (1.0 - rate) * *t);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = rate * o + (1.0 - rate) * *t);
    }
    Ok(())
}
