//! Small dense/recurrent networks with hand-written reverse-mode gradients.
//!
//! Every layer works on row batches: an input of shape `(batch, in)` maps to
//! `(batch, out)`. The recurrent agent network is unrolled over an episode
//! with [`GradientTape`] recording what backpropagation through time needs.

mod adam;
mod checkpoint;
mod dense;
mod network;
mod recurrent;
mod tape;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use dense::DenseLayer;
pub use network::{AgentNetwork, NetworkShape, StepOutput, HIDDEN_WIDTH};
pub use recurrent::{CellCache, CellKind, RecurrentCell};
pub use tape::{GradientTape, OutputGrads, StepCache};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("{what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("gradient tape was already consumed by a backward pass")]
    TapeConsumed,
    #[error("{count} non-finite gradient entries, first in `{tensor}` at index {index}")]
    NonFiniteGradient {
        tensor: String,
        index: usize,
        count: usize,
    },
    #[error("parameter shapes differ between network and gradients")]
    ShapeMismatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A collection of named parameter tensors visited in declaration order.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, s| n += s.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        self.visit(&mut |_, s| out.extend_from_slice(s));
        out
    }

    /// Copies a flat vector back in declaration order. Panics on a length mismatch.
    fn load_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut(&mut |_, s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// Order-sensitive FNV-1a hash over the raw parameter bits.
    fn checksum(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        self.visit(&mut |_, s| {
            for v in s {
                hash ^= v.to_bits();
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        });
        hash
    }
}

impl Parameters for Vec<f64> {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("values", self)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("values", self)
    }
}

pub(crate) fn check_cols(what: &'static str, actual: usize, expected: usize) -> Result<(), NeuralError> {
    if actual != expected {
        return Err(NeuralError::Dimension {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}


/// Row-major slice of an owned standard-layout array.
pub(crate) fn as_slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("parameters are stored in standard layout")
}

pub(crate) fn as_slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored in standard layout")
}
