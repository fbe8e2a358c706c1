use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{as_slice, as_slice_mut, sigmoid, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    /// Gated recurrent unit with reset, update and candidate transforms.
    #[default]
    Gru,
    /// `h' = tanh(W_x x + b_x + W_h h + b_h)`.
    Tanh,
}

impl CellKind {
    pub fn gate_count(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Tanh => 1,
        }
    }
}

/// Recurrent cell. For the GRU, the stacked gate rows are ordered
/// reset, update, candidate:
///
/// ```text
/// r  = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z  = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentCell {
    pub kind: CellKind,
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub b_input: Array1<f64>,
    pub b_hidden: Array1<f64>,
}

/// Forward values needed to differentiate one cell application.
#[derive(Debug, Clone)]
pub struct CellCache {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    /// GRU: `[r | z | n]`; tanh cell: the new hidden state.
    pub gates: Array2<f64>,
    /// GRU only: `W_hn h + b_hn`.
    pub hidden_candidate: Array2<f64>,
}

impl RecurrentCell {
    pub fn new<R: Rng + ?Sized>(kind: CellKind, input: usize, hidden: usize, rng: &mut R) -> Self {
        let rows = kind.gate_count() * hidden;
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut draw = || rng.gen_range(-bound..bound);
        Self {
            kind,
            w_input: Array2::from_shape_simple_fn((rows, input), &mut draw),
            w_hidden: Array2::from_shape_simple_fn((rows, hidden), &mut draw),
            b_input: Array1::from_shape_simple_fn(rows, &mut draw),
            b_hidden: Array1::from_shape_simple_fn(rows, &mut draw),
        }
    }

    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        let rows = kind.gate_count() * hidden;
        Self {
            kind,
            w_input: Array2::zeros((rows, input)),
            w_hidden: Array2::zeros((rows, hidden)),
            b_input: Array1::zeros(rows),
            b_hidden: Array1::zeros(rows),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind, self.input_dim(), self.hidden_dim())
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.ncols()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>, h_prev: ArrayView2<'_, f64>) -> (Array2<f64>, CellCache) {
        let hd = self.hidden_dim();
        let mut gi = x.dot(&self.w_input.t());
        gi += &self.b_input;
        let mut gh = h_prev.dot(&self.w_hidden.t());
        gh += &self.b_hidden;
        match self.kind {
            CellKind::Tanh => {
                gi += &gh;
                gi.mapv_inplace(f64::tanh);
                let h = gi.clone();
                let cache = CellCache {
                    x: x.to_owned(),
                    h_prev: h_prev.to_owned(),
                    gates: gi,
                    hidden_candidate: Array2::zeros((0, 0)),
                };
                (h, cache)
            }
            CellKind::Gru => {
                let batch = x.nrows();
                let mut gates = Array2::zeros((batch, 3 * hd));
                let mut h = Array2::zeros((batch, hd));
                let hidden_candidate = gh.slice(s![.., 2 * hd..]).to_owned();
                for b in 0..batch {
                    for k in 0..hd {
                        let r = sigmoid(gi[[b, k]] + gh[[b, k]]);
                        let z = sigmoid(gi[[b, hd + k]] + gh[[b, hd + k]]);
                        let n = (gi[[b, 2 * hd + k]] + r * hidden_candidate[[b, k]]).tanh();
                        gates[[b, k]] = r;
                        gates[[b, hd + k]] = z;
                        gates[[b, 2 * hd + k]] = n;
                        h[[b, k]] = (1.0 - z) * n + z * h_prev[[b, k]];
                    }
                }
                let cache = CellCache {
                    x: x.to_owned(),
                    h_prev: h_prev.to_owned(),
                    gates,
                    hidden_candidate,
                };
                (h, cache)
            }
        }
    }

    /// Returns `(∂L/∂x, ∂L/∂h_prev)` and accumulates parameter gradients.
    pub fn backward(&self, cache: &CellCache, dh: ArrayView2<'_, f64>, grads: &mut RecurrentCell) -> (Array2<f64>, Array2<f64>) {
        let hd = self.hidden_dim();
        let batch = dh.nrows();
        let (d_input_pre, d_hidden_pre, mut dh_prev) = match self.kind {
            CellKind::Tanh => {
                let mut dz = dh.to_owned();
                dz.zip_mut_with(&cache.gates, |g, &y| *g *= 1.0 - y * y);
                (dz.clone(), dz, Array2::zeros((batch, hd)))
            }
            CellKind::Gru => {
                let mut d_in = Array2::zeros((batch, 3 * hd));
                let mut d_hid = Array2::zeros((batch, 3 * hd));
                let mut dh_direct = Array2::zeros((batch, hd));
                for b in 0..batch {
                    for k in 0..hd {
                        let r = cache.gates[[b, k]];
                        let z = cache.gates[[b, hd + k]];
                        let n = cache.gates[[b, 2 * hd + k]];
                        let hp = cache.h_prev[[b, k]];
                        let g = dh[[b, k]];
                        let dn_pre = g * (1.0 - z) * (1.0 - n * n);
                        let dz_pre = g * (hp - n) * z * (1.0 - z);
                        let dr_pre = dn_pre * cache.hidden_candidate[[b, k]] * r * (1.0 - r);
                        d_in[[b, k]] = dr_pre;
                        d_in[[b, hd + k]] = dz_pre;
                        d_in[[b, 2 * hd + k]] = dn_pre;
                        d_hid[[b, k]] = dr_pre;
                        d_hid[[b, hd + k]] = dz_pre;
                        d_hid[[b, 2 * hd + k]] = dn_pre * r;
                        dh_direct[[b, k]] = g * z;
                    }
                }
                (d_in, d_hid, dh_direct)
            }
        };
        grads.w_input += &d_input_pre.t().dot(&cache.x);
        grads.b_input += &d_input_pre.sum_axis(Axis(0));
        grads.w_hidden += &d_hidden_pre.t().dot(&cache.h_prev);
        grads.b_hidden += &d_hidden_pre.sum_axis(Axis(0));
        let dx = d_input_pre.dot(&self.w_input);
        dh_prev += &d_hidden_pre.dot(&self.w_hidden);
        (dx, dh_prev)
    }
}

impl Parameters for RecurrentCell {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("w_input", as_slice(&self.w_input));
        f("w_hidden", as_slice(&self.w_hidden));
        f("b_input", as_slice(&self.b_input));
        f("b_hidden", as_slice(&self.b_hidden));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("w_input", as_slice_mut(&mut self.w_input));
        f("w_hidden", as_slice_mut(&mut self.w_hidden));
        f("b_input", as_slice_mut(&mut self.b_input));
        f("b_hidden", as_slice_mut(&mut self.b_hidden));
    }
}
