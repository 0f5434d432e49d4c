use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Rectifier,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Rectifier {
            z.mapv_inplace(|v| v.max(0.0));
        }
    }

    fn backprop(self, pre: &Array2<f64>, grad: &mut Array2<f64>) {
        if self == Activation::Rectifier {
            grad.zip_mut_with(pre, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
        }
    }
}

/// Fully connected layer `y = act(x Wᵀ + b)` over row batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

/// Gradients for one layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        LayerGrad {
            weight: Array2::zeros(layer.weight.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((outputs, inputs), || rng.random_range(-limit..limit));
        DenseLayer {
            weight,
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    /// Returns `(pre_activation, output)`.
    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut pre = x.dot(&self.weight.t());
        pre += &self.bias;
        let mut out = pre.clone();
        self.activation.apply(&mut out);
        (pre, out)
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.dot(&self.weight.t());
        out += &self.bias;
        self.activation.apply(&mut out);
        out
    }

    /// Given the layer input, its pre-activation and `∂L/∂output`, returns
    /// parameter gradients and `∂L/∂input`.
    pub fn backward(&self, input: ArrayView2<f64>, pre: &Array2<f64>, mut grad_out: Array2<f64>) -> (LayerGrad, Array2<f64>) {
        self.activation.backprop(pre, &mut grad_out);
        let weight = grad_out.t().dot(&input);
        let bias = grad_out.sum_axis(Axis(0));
        let grad_in = grad_out.dot(&self.weight);
        (LayerGrad { weight, bias }, grad_in)
    }
}

/// Intermediate values of a forward pass through a stack of layers.
#[derive(Debug, Clone)]
pub struct StackCache {
    /// Input to each layer.
    pub inputs: Vec<Array2<f64>>,
    pub pres: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

pub fn forward_stack(layers: &[DenseLayer], x: ArrayView2<f64>) -> StackCache {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pres = Vec::with_capacity(layers.len());
    let mut cur = x.to_owned();
    for layer in layers {
        let (pre, out) = layer.forward(cur.view());
        inputs.push(cur);
        pres.push(pre);
        cur = out;
    }
    StackCache {
        inputs,
        pres,
        output: cur,
    }
}

pub fn apply_stack(layers: &[DenseLayer], x: ArrayView2<f64>) -> Array2<f64> {
    let mut cur = x.to_owned();
    for layer in layers {
        cur = layer.apply(cur.view());
    }
    cur
}

/// Backpropagates `grad_out` through the cached stack. Returns per-layer
/// gradients and `∂L/∂input`.
pub fn backward_stack(layers: &[DenseLayer], cache: &StackCache, grad_out: Array2<f64>) -> (Vec<LayerGrad>, Array2<f64>) {
    let mut grads = Vec::with_capacity(layers.len());
    let mut g = grad_out;
    for (l, layer) in layers.iter().enumerate().rev() {
        let (lg, gi) = layer.backward(cache.inputs[l].view(), &cache.pres[l], g);
        grads.push(lg);
        g = gi;
    }
    grads.reverse();
    (grads, g)
}
