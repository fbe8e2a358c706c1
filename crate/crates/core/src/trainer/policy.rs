use rand::Rng;

use crate::evidence::{expected_action_values, opinion_from_evidence, EvidenceVector};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Epsilon-greedy over arbitrary action values. Returns the action and
/// whether it was drawn at random.
pub fn act_on_values<R: Rng + ?Sized>(values: &[f64], epsilon: f64, rng: &mut R) -> (usize, bool) {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        (rng.gen_range(0..values.len()), true)
    } else {
        (argmax(values), false)
    }
}

/// Epsilon-greedy on the expected Dirichlet probabilities of fused evidence.
pub fn act<R: Rng + ?Sized>(evidence: &EvidenceVector, epsilon: f64, rng: &mut R) -> (usize, bool) {
    let values = expected_action_values(&opinion_from_evidence(evidence));
    act_on_values(&values, epsilon, rng)
}

/// Linear anneal from `start` to `end` over the first `fraction` of
/// `total` episodes, flat afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_episodes: usize,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, total: usize, fraction: f64) -> Self {
        Self {
            start,
            end,
            anneal_episodes: ((total as f64) * fraction).round() as usize,
        }
    }

    pub fn at(&self, episode: usize) -> f64 {
        if self.anneal_episodes == 0 || episode >= self.anneal_episodes {
            return self.end;
        }
        let frac = episode as f64 / self.anneal_episodes as f64;
        self.start + (self.end - self.start) * frac
    }
}
