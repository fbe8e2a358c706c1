use ndarray::{s, Array2, ArrayView2};

use super::{AgentNetwork, CellCache, NeuralError};

/// Forward activations of one recorded step.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Array2<f64>,
    pub encoded: [Array2<f64>; 3],
    pub cell: CellCache,
    pub hidden: Array2<f64>,
    pub evidence: Vec<Array2<f64>>,
    pub selector: Array2<f64>,
    pub q: Option<Array2<f64>>,
}

/// Loss gradients with respect to one step's head outputs (post-activation).
/// `None` means the head does not enter the loss at that step.
#[derive(Debug, Clone, Default)]
pub struct OutputGrads {
    pub evidence: Option<Vec<Array2<f64>>>,
    pub selector: Option<Array2<f64>>,
    pub q: Option<Array2<f64>>,
}

/// Activations recorded over an unrolled sequence, consumed by a single
/// backward pass through time.
#[derive(Debug, Default)]
pub struct GradientTape {
    steps: Vec<StepCache>,
    consumed: bool,
}

impl GradientTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, cache: StepCache) {
        self.steps.push(cache);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[StepCache] {
        &self.steps
    }

    /// Reverse-mode pass over every recorded step.
    ///
    /// Returns parameter gradients laid out like `net`. The mixer
    /// parameters are not touched here; they enter the loss outside the
    /// network and their gradient is added by the caller.
    pub fn backward(&mut self, net: &AgentNetwork, output_grads: &[OutputGrads]) -> Result<AgentNetwork, NeuralError> {
        self.backward_with(net, output_grads, true)
    }

    /// Like [`backward`](Self::backward); when `selector_reaches_encoder` is
    /// false the selector head still learns but its gradient stops at the
    /// hidden state.
    ///
    /// Steps may shrink in row count over time (finished sequences dropped
    /// from the end of the batch); the hidden-state carry is zero-padded.
    pub fn backward_with(
        &mut self,
        net: &AgentNetwork,
        output_grads: &[OutputGrads],
        selector_reaches_encoder: bool,
    ) -> Result<AgentNetwork, NeuralError> {
        if self.consumed {
            return Err(NeuralError::TapeConsumed);
        }
        if output_grads.len() != self.steps.len() {
            return Err(NeuralError::Dimension {
                what: "output gradient steps",
                expected: self.steps.len(),
                actual: output_grads.len(),
            });
        }
        self.consumed = true;
        let mut grads = net.zeros_like();
        let mut carry: Option<Array2<f64>> = None;
        for (cache, out) in self.steps.iter().zip(output_grads).rev() {
            let rows = cache.hidden.nrows();
            let mut dh = Array2::zeros(cache.hidden.raw_dim());
            if let Some(c) = carry.take() {
                if c.nrows() > rows {
                    return Err(NeuralError::Dimension {
                        what: "rows of a later step",
                        expected: rows,
                        actual: c.nrows(),
                    });
                }
                dh.slice_mut(s![..c.nrows(), ..]).assign(&c);
            }
            let h = cache.hidden.view();
            if let Some(evidence) = &out.evidence {
                for (j, g) in evidence.iter().enumerate() {
                    let head = &net.evidence_heads[j];
                    let dx = head
                        .backward(h, cache.evidence[j].view(), g.view(), &mut grads.evidence_heads[j], true)
                        .expect("input gradient requested");
                    dh += &dx;
                }
            }
            if let Some(g) = &out.selector {
                let dx = net.selector.backward(
                    h,
                    cache.selector.view(),
                    g.view(),
                    &mut grads.selector,
                    selector_reaches_encoder,
                );
                if let Some(dx) = dx {
                    dh += &dx;
                }
            }
            if let (Some(g), Some(head), Some(y)) = (&out.q, &net.q_head, &cache.q) {
                let q_grads = grads.q_head.as_mut().expect("gradient layout mirrors network");
                let dx = head
                    .backward(h, y.view(), g.view(), q_grads, true)
                    .expect("input gradient requested");
                dh += &dx;
            }
            let (d_encoded, dh_prev) = net.recurrent.backward(&cache.cell, dh.view(), &mut grads.recurrent);
            carry = Some(dh_prev);
            backward_encoder(net, cache, d_encoded, &mut grads);
        }
        Ok(grads)
    }
}

fn backward_encoder(net: &AgentNetwork, cache: &StepCache, d_out: Array2<f64>, grads: &mut AgentNetwork) {
    let [a1, a2, a3] = &cache.encoded;
    let inputs: [ArrayView2<'_, f64>; 3] = [cache.x.view(), a1.view(), a2.view()];
    let outputs = [a1, a2, a3];
    let mut d = d_out;
    for l in (0..3).rev() {
        let next = net.encoder[l].backward(inputs[l], outputs[l].view(), d.view(), &mut grads.encoder[l], l > 0);
        match next {
            Some(dx) => d = dx,
            None => break,
        }
    }
}
