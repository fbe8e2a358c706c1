use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{as_slice, as_slice_mut, Activation, Parameters};

/// Fully connected layer `y = act(x Wᵀ + b)` with `W` stored as `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Uniform initialization in `±1/√fan_in` for weights and bias.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((output, input), || rng.gen_range(-bound..bound));
        let bias = Array1::from_shape_simple_fn(output, || rng.gen_range(-bound..bound));
        Self {
            weights,
            bias,
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim(), self.activation)
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weights.t());
        y += &self.bias;
        if self.activation != Activation::Identity {
            let act = self.activation;
            y.mapv_inplace(|v| act.apply(v));
        }
        y
    }

    /// Accumulates parameter gradients into `grads` and returns `∂L/∂x`.
    ///
    /// `y` is this layer's forward output for `x`; `dy` is `∂L/∂y`.
    pub fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
        dy: ArrayView2<'_, f64>,
        grads: &mut DenseLayer,
        need_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let dz = self.pre_activation_grad(y, dy);
        grads.weights += &dz.t().dot(&x);
        grads.bias += &dz.sum_axis(Axis(0));
        need_input_grad.then(|| dz.dot(&self.weights))
    }

    fn pre_activation_grad(&self, y: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        let act = self.activation;
        let mut dz = dy.to_owned();
        if act != Activation::Identity {
            dz.zip_mut_with(&y, |g, &out| *g *= act.derivative_from_output(out));
        }
        dz
    }
}

impl Parameters for DenseLayer {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("weight", as_slice(&self.weights));
        f("bias", as_slice(&self.bias));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("weight", as_slice_mut(&mut self.weights));
        f("bias", as_slice_mut(&mut self.bias));
    }
}
