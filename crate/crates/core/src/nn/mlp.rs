//! Dense feedforward networks over a single flat parameter vector.
//!
//! Layer `l` maps `cols` inputs to `rows` outputs. Its weights are stored
//! row-major (`rows x cols`) followed by `rows` biases, and layers are laid out
//! back to back. Batched evaluation uses row-per-sample matrices.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Negative-side slope of [`Activation::LeakyRelu`].
pub const LEAKY_RELU_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_RELU_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative at pre-activation `z` with output `a = apply(z)`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    /// True when the activation has a kink at zero.
    pub fn is_piecewise(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::LeakyRelu => 2,
            Activation::Tanh => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::LeakyRelu,
            3 => Activation::Tanh,
            _ => return None,
        })
    }
}

/// Shape of one dense layer: `rows` outputs, `cols` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols + self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width followed by the output width of every layer.
    pub layer_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        layer_widths: Vec<usize>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let spec = MlpSpec {
            layer_widths,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need an input width and at least one layer, got widths {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "widths must be positive, got {:?}",
                self.layer_widths
            )));
        }
        if self.hidden_activation == Activation::Identity {
            return Err(Error::InvalidSpec(
                "hidden activation must be relu, leaky_relu or tanh".into(),
            ));
        }
        if !matches!(
            self.output_activation,
            Activation::Identity | Activation::Tanh
        ) {
            return Err(Error::InvalidSpec(
                "output activation must be identity or tanh".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn layout(&self) -> Vec<LayerShape> {
        self.layer_widths
            .windows(2)
            .map(|w| LayerShape {
                rows: w[1],
                cols: w[0],
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(LayerShape::len).sum()
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn zeros(&self) -> ParamVector {
        ParamVector::zeros(self.layout())
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let layout = self.layout();
        let mut values = Vec::with_capacity(self.param_count());
        for shape in &layout {
            let bound = 1.0 / (shape.cols as f64).sqrt();
            for _ in 0..shape.len() {
                values.push(rng.random_range(-bound..=bound));
            }
        }
        ParamVector { values, layout }
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.layout != self.layout() {
            return Err(Error::dims(
                "parameter layout",
                self.param_count(),
                params.len(),
            ));
        }
        Ok(())
    }

    /// Evaluates the network on a single input vector.
    pub fn forward(&self, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|_| Error::dims("forward input", self.input_dim(), input.len()))?;
        Ok(self.forward_batch(params, x)?.output().row(0).to_vec())
    }

    /// Reverse-mode gradients for a single input: `(param_grad, input_grad)`.
    pub fn backward(
        &self,
        params: &ParamVector,
        input: &[f64],
        upstream_grad: &[f64],
    ) -> Result<(ParamVector, Vec<f64>)> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|_| Error::dims("backward input", self.input_dim(), input.len()))?;
        let g = ArrayView2::from_shape((1, upstream_grad.len()), upstream_grad)
            .map_err(|_| Error::dims("upstream gradient", self.output_dim(), upstream_grad.len()))?;
        let trace = self.forward_batch(params, x)?;
        let (grad, dx) = self.backward_batch(params, &trace, g)?;
        Ok((
            ParamVector {
                values: grad,
                layout: params.layout.clone(),
            },
            dx.row(0).to_vec(),
        ))
    }

    /// Evaluates a batch (one sample per row), keeping what backprop needs.
    pub fn forward_batch(&self, params: &ParamVector, input: ArrayView2<f64>) -> Result<Trace> {
        self.check_params(params)?;
        if input.ncols() != self.input_dim() {
            return Err(Error::dims("forward input", self.input_dim(), input.ncols()));
        }
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        let mut pre = Vec::with_capacity(self.num_layers());
        activations.push(input.to_owned());
        for layer in 0..self.num_layers() {
            let (w, b) = params.layer(layer);
            let mut z = activations[layer].dot(&w.t());
            z += &b;
            let act = self.activation(layer);
            let a = z.mapv(|v| act.apply(v));
            pre.push(z);
            activations.push(a);
        }
        Ok(Trace { activations, pre })
    }

    /// Backpropagates `upstream` (d loss / d output, one row per sample).
    ///
    /// Parameter gradients are summed over the batch; scale `upstream` for a
    /// mean reduction.
    pub fn backward_batch(
        &self,
        params: &ParamVector,
        trace: &Trace,
        upstream: ArrayView2<f64>,
    ) -> Result<(Vec<f64>, Array2<f64>)> {
        self.check_params(params)?;
        let out = trace.output();
        if upstream.dim() != out.dim() {
            return Err(Error::dims(
                "upstream gradient",
                out.len(),
                upstream.len(),
            ));
        }
        let mut grad = vec![0.0; params.len()];
        let offsets = params.offsets();
        let mut delta = upstream.to_owned();
        for layer in (0..self.num_layers()).rev() {
            let act = self.activation(layer);
            if act != Activation::Identity {
                let z = &trace.pre[layer];
                let a = &trace.activations[layer + 1];
                ndarray::Zip::from(&mut delta)
                    .and(z)
                    .and(a)
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            }
            let shape = params.layout[layer];
            let start = offsets[layer];
            let input = &trace.activations[layer];
            let dw = delta.t().dot(input);
            let db = delta.sum_axis(Axis(0));
            let wlen = shape.rows * shape.cols;
            // `dot` may hand back a column-major result; iterate logically.
            for (g, v) in grad[start..start + wlen].iter_mut().zip(dw.iter()) {
                *g = *v;
            }
            for (g, v) in grad[start + wlen..start + shape.len()].iter_mut().zip(db.iter()) {
                *g = *v;
            }
            let (w, _) = params.layer(layer);
            delta = delta.dot(&w);
        }
        Ok((grad, delta))
    }
}

/// Intermediate values from [`MlpSpec::forward_batch`].
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().unwrap()
    }

    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }

    /// Signs of every pre-activation feeding a piecewise-linear unit. Two
    /// evaluations with equal patterns lie on the same smooth piece.
    pub fn kink_pattern(&self, spec: &MlpSpec) -> Vec<bool> {
        let mut out = Vec::new();
        for (layer, z) in self.pre.iter().enumerate() {
            if spec.activation(layer).is_piecewise() {
                out.extend(z.iter().map(|&v| v > 0.0));
            }
        }
        out
    }
}

/// Flat network parameters with their per-layer layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<LayerShape>,
}

impl ParamVector {
    pub fn zeros(layout: Vec<LayerShape>) -> Self {
        let len = layout.iter().map(LayerShape::len).sum();
        ParamVector {
            values: vec![0.0; len],
            layout,
        }
    }

    pub fn from_values(layout: Vec<LayerShape>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = layout.iter().map(LayerShape::len).sum();
        if values.len() != expected {
            return Err(Error::dims("parameter values", expected, values.len()));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[LayerShape] {
        &self.layout
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.layout
            .iter()
            .map(|s| {
                let o = acc;
                acc += s.len();
                o
            })
            .collect()
    }

    /// Views of layer `i`'s weight matrix and bias vector.
    pub fn layer(&self, i: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let start: usize = self.layout[..i].iter().map(LayerShape::len).sum();
        let shape = self.layout[i];
        let wlen = shape.rows * shape.cols;
        let w = ArrayView2::from_shape((shape.rows, shape.cols), &self.values[start..start + wlen])
            .expect("layout matches storage");
        let b = ArrayView1::from(&self.values[start + wlen..start + shape.len()]);
        (w, b)
    }

    /// Mutable access to layer `i`'s weights (row-major) and biases.
    pub fn layer_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let start: usize = self.layout[..i].iter().map(LayerShape::len).sum();
        let shape = self.layout[i];
        let wlen = shape.rows * shape.cols;
        let (w, b) = self.values[start..start + shape.len()].split_at_mut(wlen);
        (w, b)
    }

    /// In-place `self = (1 - tau) * self + tau * online`.
    pub fn blend_toward(&mut self, online: &ParamVector, tau: f64) -> Result<()> {
        check_tau(tau)?;
        if online.layout != self.layout {
            return Err(Error::dims("soft update", self.len(), online.len()));
        }
        for (t, &o) in self.values.iter_mut().zip(&online.values) {
            *t = (1.0 - tau) * *t + tau * o;
        }
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidConfig(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(())
}

/// Target-network blend `(1 - tau) * target + tau * online`.
pub fn soft_update(target: &ParamVector, online: &ParamVector, tau: f64) -> Result<ParamVector> {
    let mut out = target.clone();
    out.blend_toward(online, tau)?;
    Ok(out)
}

/// Numerically stable `log(1 + exp(z))`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic sigmoid, the derivative of [`softplus`].
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
