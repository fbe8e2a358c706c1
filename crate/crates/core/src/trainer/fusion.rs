//! Differentiable fusion on raw slices, used inside the TD update.
//!
//! The forward pass repeats the arithmetic of
//! [`combine_pair`](crate::evidence::combine_pair) term for term so the
//! learner sees exactly the opinions the agents acted on.

use crate::evidence::DEFAULT_CONFLICT_EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct Opinion {
    pub beliefs: Vec<f64>,
    pub uncertainty: f64,
}

impl Opinion {
    pub fn from_evidence(evidence: &[f64]) -> (Self, f64) {
        let k = evidence.len() as f64;
        let strength = evidence.iter().sum::<f64>() + k;
        (
            Opinion {
                beliefs: evidence.iter().map(|e| e / strength).collect(),
                uncertainty: k / strength,
            },
            strength,
        )
    }

    /// `b^a + u / K` for every action.
    pub fn expected(&self) -> impl Iterator<Item = f64> + '_ {
        let base = self.uncertainty / self.beliefs.len() as f64;
        self.beliefs.iter().map(move |b| b + base)
    }
}

/// Gradient with respect to an opinion's belief vector and uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionGrad {
    pub beliefs: Vec<f64>,
    pub uncertainty: f64,
}

impl OpinionGrad {
    pub fn zeros(k: usize) -> Self {
        Self {
            beliefs: vec![0.0; k],
            uncertainty: 0.0,
        }
    }

    /// Adds the gradient of `scale · (b^a + u/K)`.
    pub fn add_expected(&mut self, action: usize, scale: f64) {
        self.beliefs[action] += scale;
        self.uncertainty += scale / self.beliefs.len() as f64;
    }
}

fn combine(left: &Opinion, right: &Opinion) -> Option<Opinion> {
    let right_total: f64 = right.beliefs.iter().sum();
    let conflict: f64 = left
        .beliefs
        .iter()
        .zip(&right.beliefs)
        .map(|(bi, bj)| bi * (right_total - bj))
        .sum();
    let margin = 1.0 - conflict;
    if margin <= DEFAULT_CONFLICT_EPSILON {
        return None;
    }
    let (ui, uj) = (left.uncertainty, right.uncertainty);
    Some(Opinion {
        beliefs: left
            .beliefs
            .iter()
            .zip(&right.beliefs)
            .map(|(bi, bj)| (bi * bj + bi * uj + bj * ui) / margin)
            .collect(),
        uncertainty: ui * uj / margin,
    })
}

/// Vector-Jacobian product of one pairwise combination.
pub fn combine_vjp(left: &Opinion, right: &Opinion, out: &Opinion, g: &OpinionGrad) -> (OpinionGrad, OpinionGrad) {
    let total_i: f64 = left.beliefs.iter().sum();
    let total_j: f64 = right.beliefs.iter().sum();
    let conflict: f64 = left
        .beliefs
        .iter()
        .zip(&right.beliefs)
        .map(|(bi, bj)| bi * (total_j - bj))
        .sum();
    let margin = 1.0 - conflict;
    let (ui, uj) = (left.uncertainty, right.uncertainty);
    // out = N / D with D = 1 - C; ∂L/∂C = -∂L/∂D = (Σ g_b·b + g_u·u) / D
    let g_conflict = (g.beliefs.iter().zip(&out.beliefs).map(|(a, b)| a * b).sum::<f64>()
        + g.uncertainty * out.uncertainty)
        / margin;
    let g_unc = g.uncertainty / margin;
    let mut gl = OpinionGrad::zeros(left.beliefs.len());
    let mut gr = OpinionGrad::zeros(left.beliefs.len());
    gl.uncertainty = g_unc * uj;
    gr.uncertainty = g_unc * ui;
    for k in 0..left.beliefs.len() {
        let gn = g.beliefs[k] / margin;
        let (bi, bj) = (left.beliefs[k], right.beliefs[k]);
        gl.beliefs[k] = gn * (bj + uj) + g_conflict * (total_j - bj);
        gr.beliefs[k] = gn * (bi + ui) + g_conflict * (total_i - bi);
        gl.uncertainty += gn * bj;
        gr.uncertainty += gn * bi;
    }
    (gl, gr)
}

/// Backward of `b = e / S`, `u = K / S` with `S = Σe + K`.
pub fn evidence_vjp(opinion: &Opinion, strength: f64, g: &OpinionGrad) -> Vec<f64> {
    let shared = g.beliefs.iter().zip(&opinion.beliefs).map(|(a, b)| a * b).sum::<f64>()
        + g.uncertainty * opinion.uncertainty;
    g.beliefs.iter().map(|gb| (gb - shared) / strength).collect()
}

/// Record of a left fold `((s0 ⊕ s1) ⊕ s2) ⊕ ...` over evidence sources.
#[derive(Debug, Clone)]
pub struct FusionTrace {
    sources: Vec<(Opinion, f64)>,
    /// Accumulator before merging source `s`; entry 0 unused.
    partials: Vec<Opinion>,
    used: Vec<bool>,
    pub fused: Opinion,
}

impl FusionTrace {
    /// Fuses `sources[0]` (the local evidence) with the rest in order,
    /// skipping any source in total conflict with the running result.
    pub fn forward<'a, I>(sources: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let sources: Vec<(Opinion, f64)> = sources.into_iter().map(Opinion::from_evidence).collect();
        assert!(!sources.is_empty(), "fusion needs at least the local source");
        let mut fused = sources[0].0.clone();
        let mut partials = Vec::with_capacity(sources.len());
        let mut used = vec![true; sources.len()];
        partials.push(fused.clone());
        for (s, (op, _)) in sources.iter().enumerate().skip(1) {
            partials.push(fused.clone());
            match combine(&fused, op) {
                Some(next) => fused = next,
                None => used[s] = false,
            }
        }
        Self {
            sources,
            partials,
            used,
            fused,
        }
    }

    pub fn skipped(&self) -> impl Iterator<Item = usize> + '_ {
        self.used.iter().enumerate().filter(|(_, u)| !**u).map(|(s, _)| s)
    }

    /// Gradient of the loss with respect to every source's evidence, given
    /// the gradient at the fused opinion. Skipped sources get zeros.
    pub fn backward(&self, g: &OpinionGrad) -> Vec<Vec<f64>> {
        let k = self.fused.beliefs.len();
        let n = self.sources.len();
        let mut source_grads: Vec<Option<OpinionGrad>> = vec![None; n];
        let mut g_acc = g.clone();
        // Outputs of each merge are needed; recompute them from the partials.
        for s in (1..n).rev() {
            if !self.used[s] {
                continue;
            }
            let out = self.merge_output(s);
            let (gl, gr) = combine_vjp(&self.partials[s], &self.sources[s].0, &out, &g_acc);
            source_grads[s] = Some(gr);
            g_acc = gl;
        }
        source_grads[0] = Some(g_acc);
        source_grads
            .into_iter()
            .zip(&self.sources)
            .map(|(grad, (op, strength))| match grad {
                Some(grad) => evidence_vjp(op, *strength, &grad),
                None => vec![0.0; k],
            })
            .collect()
    }

    fn merge_output(&self, s: usize) -> Opinion {
        // The accumulator after merge s is the partial before the next used
        // merge, or the final result.
        self.partials
            .get(s + 1..)
            .and_then(|rest| rest.first().cloned())
            .unwrap_or_else(|| self.fused.clone())
    }
}
