use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{GradientTape, StepCache};
use super::{as_slice, as_slice_mut, check_cols, Activation, CellKind, DenseLayer, NeuralError, Parameters, RecurrentCell};
use crate::evidence::EvidenceVector;

/// Width of the encoder and recurrent state.
pub const HIDDEN_WIDTH: usize = 64;

/// Sizes that fix every tensor of an [`AgentNetwork`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    /// Observation width plus the one-hot agent id.
    pub input_dim: usize,
    pub hidden: usize,
    pub n_agents: usize,
    pub n_actions: usize,
    pub cell: CellKind,
    /// Plain Q-value head used by the evidence-free baseline.
    pub q_head: bool,
}

impl NetworkShape {
    pub fn new(input_dim: usize, n_agents: usize, n_actions: usize) -> Self {
        Self {
            input_dim,
            hidden: HIDDEN_WIDTH,
            n_agents,
            n_actions,
            cell: CellKind::Gru,
            q_head: false,
        }
    }

    /// Closed-form parameter count:
    ///
    /// ```text
    /// encoder    (I·H + H) + 2·(H·H + H)
    /// recurrent  g·H·(I' + H) + 2·g·H       with g = 3 (GRU) or 1, I' = H
    /// evidence   n·(H·K + K)
    /// selector   H·n + n
    /// q head     H·K + K                    (baseline only)
    /// mixer      n + 1                      (per-agent temperature, shared bias)
    /// ```
    pub fn parameter_count(&self) -> usize {
        let (i, h, n, k) = (self.input_dim, self.hidden, self.n_agents, self.n_actions);
        let g = self.cell.gate_count();
        let encoder = (i * h + h) + 2 * (h * h + h);
        let recurrent = g * h * (h + h) + 2 * g * h;
        let evidence = n * (h * k + k);
        let selector = h * n + n;
        let q = if self.q_head { h * k + k } else { 0 };
        encoder + recurrent + evidence + selector + q + n + 1
    }
}

/// Shared per-agent network: three-layer observation encoder, recurrent
/// cell, one evidence head per teammate, a communication selector and the
/// per-agent mixing temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNetwork {
    pub shape: NetworkShape,
    pub seed: u64,
    pub encoder: [DenseLayer; 3],
    pub recurrent: RecurrentCell,
    /// Head `j` produces evidence addressed to agent `j`; a node's own index
    /// gives its local evidence.
    pub evidence_heads: Vec<DenseLayer>,
    pub selector: DenseLayer,
    pub q_head: Option<DenseLayer>,
    pub temperatures: Array1<f64>,
    /// Constant added to the team value; lets the sum of non-negative
    /// per-agent values track negative returns.
    pub mixer_bias: Array1<f64>,
}

/// Outputs of one forward step for a batch of rows.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub hidden: Array2<f64>,
    /// `n_agents` arrays of shape `(batch, K)`.
    pub evidence: Vec<Array2<f64>>,
    /// `(batch, n_agents)` communication probabilities.
    pub selector: Array2<f64>,
    pub q: Option<Array2<f64>>,
}

impl AgentNetwork {
    pub fn new(shape: NetworkShape, seed: u64, temperature_init: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = shape.hidden;
        let encoder = [
            DenseLayer::new(shape.input_dim, h, Activation::Relu, &mut rng),
            DenseLayer::new(h, h, Activation::Relu, &mut rng),
            DenseLayer::new(h, h, Activation::Relu, &mut rng),
        ];
        let recurrent = RecurrentCell::new(shape.cell, h, h, &mut rng);
        let evidence_heads = (0..shape.n_agents)
            .map(|_| DenseLayer::new(h, shape.n_actions, Activation::Relu, &mut rng))
            .collect();
        let selector = DenseLayer::new(h, shape.n_agents, Activation::Sigmoid, &mut rng);
        let q_head = shape
            .q_head
            .then(|| DenseLayer::new(h, shape.n_actions, Activation::Identity, &mut rng));
        Self {
            shape,
            seed,
            encoder,
            recurrent,
            evidence_heads,
            selector,
            q_head,
            temperatures: Array1::from_elem(shape.n_agents, temperature_init),
            mixer_bias: Array1::zeros(1),
        }
    }

    /// All parameters zero; also the accumulator layout for gradients.
    pub fn zeros(shape: NetworkShape) -> Self {
        let h = shape.hidden;
        Self {
            shape,
            seed: 0,
            encoder: [
                DenseLayer::zeros(shape.input_dim, h, Activation::Relu),
                DenseLayer::zeros(h, h, Activation::Relu),
                DenseLayer::zeros(h, h, Activation::Relu),
            ],
            recurrent: RecurrentCell::zeros(shape.cell, h, h),
            evidence_heads: (0..shape.n_agents)
                .map(|_| DenseLayer::zeros(h, shape.n_actions, Activation::Relu))
                .collect(),
            selector: DenseLayer::zeros(h, shape.n_agents, Activation::Sigmoid),
            q_head: shape
                .q_head
                .then(|| DenseLayer::zeros(h, shape.n_actions, Activation::Identity)),
            temperatures: Array1::zeros(shape.n_agents),
            mixer_bias: Array1::zeros(1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape)
    }

    pub fn initial_hidden(&self, batch: usize) -> Array2<f64> {
        Array2::zeros((batch, self.shape.hidden))
    }

    /// One forward step without recording.
    pub fn step(&self, x: ArrayView2<'_, f64>, h_prev: ArrayView2<'_, f64>) -> Result<StepOutput, NeuralError> {
        self.check_step(x, h_prev)?;
        let a1 = self.encoder[0].forward(x);
        let a2 = self.encoder[1].forward(a1.view());
        let a3 = self.encoder[2].forward(a2.view());
        let (hidden, _) = self.recurrent.forward(a3.view(), h_prev);
        Ok(self.heads(hidden))
    }

    /// One forward step that records its activations on `tape`.
    pub fn step_recorded(
        &self,
        x: ArrayView2<'_, f64>,
        h_prev: ArrayView2<'_, f64>,
        tape: &mut GradientTape,
    ) -> Result<StepOutput, NeuralError> {
        let (out, cache) = self.step_inner(x, h_prev)?;
        tape.push(cache);
        Ok(out)
    }

    fn check_step(&self, x: ArrayView2<'_, f64>, h_prev: ArrayView2<'_, f64>) -> Result<(), NeuralError> {
        check_cols("observation width", x.ncols(), self.shape.input_dim)?;
        check_cols("hidden width", h_prev.ncols(), self.shape.hidden)?;
        if x.nrows() != h_prev.nrows() {
            return Err(NeuralError::Dimension {
                what: "batch rows",
                expected: x.nrows(),
                actual: h_prev.nrows(),
            });
        }
        Ok(())
    }

    fn step_inner(&self, x: ArrayView2<'_, f64>, h_prev: ArrayView2<'_, f64>) -> Result<(StepOutput, StepCache), NeuralError> {
        self.check_step(x, h_prev)?;
        let a1 = self.encoder[0].forward(x);
        let a2 = self.encoder[1].forward(a1.view());
        let a3 = self.encoder[2].forward(a2.view());
        let (hidden, cell) = self.recurrent.forward(a3.view(), h_prev);
        let out = self.heads(hidden);
        let cache = StepCache {
            x: x.to_owned(),
            encoded: [a1, a2, a3],
            cell,
            hidden: out.hidden.clone(),
            evidence: out.evidence.clone(),
            selector: out.selector.clone(),
            q: out.q.clone(),
        };
        Ok((out, cache))
    }

    fn heads(&self, hidden: Array2<f64>) -> StepOutput {
        let evidence = self.evidence_heads.iter().map(|head| head.forward(hidden.view())).collect();
        let selector = self.selector.forward(hidden.view());
        let q = self.q_head.as_ref().map(|head| head.forward(hidden.view()));
        StepOutput {
            hidden,
            evidence,
            selector,
            q,
        }
    }

    /// Encodes a single observation: `h = cell(MLP(obs), h_prev)`.
    pub fn encode(&self, obs: &[f64], h_prev: &[f64]) -> Result<(Vec<f64>, GradientTape), NeuralError> {
        let x = row(obs);
        let h = row(h_prev);
        let mut tape = GradientTape::new();
        let out = self.step_recorded(x.view(), h.view(), &mut tape)?;
        Ok((out.hidden.row(0).to_vec(), tape))
    }

    /// Evidence from every head for a single hidden state.
    pub fn evidence_heads_forward(&self, h: &[f64]) -> Result<Vec<EvidenceVector>, NeuralError> {
        let out = self.heads_for(h)?;
        Ok(out
            .evidence
            .iter()
            .map(|e| EvidenceVector::new(e.row(0).to_vec()).expect("relu output is non-negative"))
            .collect())
    }

    /// Communication probabilities `p_ij` for a single hidden state.
    pub fn selector_forward(&self, h: &[f64]) -> Result<Vec<f64>, NeuralError> {
        Ok(self.heads_for(h)?.selector.row(0).to_vec())
    }

    fn heads_for(&self, h: &[f64]) -> Result<StepOutput, NeuralError> {
        if h.len() != self.shape.hidden {
            return Err(NeuralError::Dimension {
                what: "hidden width",
                expected: self.shape.hidden,
                actual: h.len(),
            });
        }
        Ok(self.heads(row(h)))
    }

    /// Adds `other` into `self` tensor by tensor.
    pub fn accumulate(&mut self, other: &AgentNetwork) {
        let flat = other.to_flat();
        let mut offset = 0;
        self.visit_mut(&mut |_, s| {
            for (a, b) in s.iter_mut().zip(&flat[offset..]) {
                *a += b;
            }
            offset += s.len();
        });
    }

    pub fn scale(&mut self, factor: f64) {
        self.visit_mut(&mut |_, s| s.iter_mut().for_each(|v| *v *= factor));
    }

    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        self.visit(&mut |_, s| sum += s.iter().map(|v| v * v).sum::<f64>());
        sum.sqrt()
    }
}

fn row(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape")
}

impl Parameters for AgentNetwork {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (l, layer) in self.encoder.iter().enumerate() {
            layer.visit(&mut |name, s| f(&format!("encoder.{l}.{name}"), s));
        }
        self.recurrent.visit(&mut |name, s| f(&format!("recurrent.{name}"), s));
        for (j, head) in self.evidence_heads.iter().enumerate() {
            head.visit(&mut |name, s| f(&format!("evidence.{j}.{name}"), s));
        }
        self.selector.visit(&mut |name, s| f(&format!("selector.{name}"), s));
        if let Some(q) = &self.q_head {
            q.visit(&mut |name, s| f(&format!("q_head.{name}"), s));
        }
        f("mixer.temperature", as_slice(&self.temperatures));
        f("mixer.bias", as_slice(&self.mixer_bias));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (l, layer) in self.encoder.iter_mut().enumerate() {
            layer.visit_mut(&mut |name, s| f(&format!("encoder.{l}.{name}"), s));
        }
        self.recurrent.visit_mut(&mut |name, s| f(&format!("recurrent.{name}"), s));
        for (j, head) in self.evidence_heads.iter_mut().enumerate() {
            head.visit_mut(&mut |name, s| f(&format!("evidence.{j}.{name}"), s));
        }
        self.selector.visit_mut(&mut |name, s| f(&format!("selector.{name}"), s));
        if let Some(q) = &mut self.q_head {
            q.visit_mut(&mut |name, s| f(&format!("q_head.{name}"), s));
        }
        f("mixer.temperature", as_slice_mut(&mut self.temperatures));
        f("mixer.bias", as_slice_mut(&mut self.mixer_bias));
    }
}
