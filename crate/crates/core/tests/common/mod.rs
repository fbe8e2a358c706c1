//! Finite-difference helpers shared by the gradient and acceptance tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use t2mac::envs::{EnvName, EnvSettings};
use t2mac::neural::{AgentNetwork, CellKind, GradientTape, NetworkShape, OutputGrads, Parameters};
use t2mac::trainer::{
    batch_gradients, batch_loss, collect_episode, network_shape, EpisodeRecord, RolloutOptions, TrainConfig,
    UpdateSettings, Variant,
};

/// Parameter group of a tensor name, e.g. `encoder.1.weights` → `encoder.1`.
pub fn group_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    match parts[0] {
        "mixer" => name.to_string(),
        "evidence" | "encoder" => parts[..2].join("."),
        _ => parts[0].to_string(),
    }
}

/// Central differences at `probes` random coordinates per tensor; returns
/// `‖numeric − analytic‖ / max(‖numeric‖, ‖analytic‖)` per group.
pub fn fd_group_errors(
    base: &AgentNetwork,
    analytic: &AgentNetwork,
    loss: impl Fn(&AgentNetwork) -> f64,
    probes: usize,
    seed: u64,
) -> BTreeMap<String, f64> {
    let flat = base.to_flat();
    let grads = analytic.to_flat();
    let mut spans = Vec::new();
    let mut offset = 0;
    base.visit(&mut |name, s| {
        spans.push((name.to_string(), offset, s.len()));
        offset += s.len();
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sums: BTreeMap<String, (f64, f64, f64)> = BTreeMap::new();
    let h = 1e-6;
    let mut probe = base.clone();
    let mut eval_at = |idx: usize, delta: f64| {
        let mut p = flat.clone();
        p[idx] += delta;
        probe.load_flat(&p);
        loss(&probe)
    };
    for (name, start, len) in spans {
        for _ in 0..probes.min(len) {
            let idx = start + rng.gen_range(0..len);
            let numeric = (eval_at(idx, h) - eval_at(idx, -h)) / (2.0 * h);
            let e = sums.entry(group_of(&name)).or_default();
            e.0 += (numeric - grads[idx]).powi(2);
            e.1 += numeric.powi(2);
            e.2 += grads[idx].powi(2);
        }
    }
    sums.into_iter()
        .map(|(g, (diff, num, ana))| {
            let scale = num.max(ana).sqrt();
            (g, if scale == 0.0 { 0.0 } else { diff.sqrt() / scale })
        })
        .collect()
}

/// A network with every head active, its random weighted-sum loss over a
/// multi-step sequence, and the analytic gradient from the tape.
pub struct SequenceProblem {
    pub net: AgentNetwork,
    pub inputs: Vec<Array2<f64>>,
    pub weights: Vec<OutputGrads>,
}

impl SequenceProblem {
    pub fn new(cell: CellKind, seed: u64) -> Self {
        let shape = NetworkShape {
            input_dim: 7,
            hidden: 16,
            n_agents: 3,
            n_actions: 4,
            cell,
            q_head: true,
        };
        let net = AgentNetwork::new(shape, seed, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let rows = 5;
        let mut random = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0));
        let inputs = (0..4).map(|_| random(rows, 7)).collect();
        let weights = (0..4)
            .map(|_| OutputGrads {
                evidence: Some((0..3).map(|_| random(rows, 4)).collect()),
                selector: Some(random(rows, 3)),
                q: Some(random(rows, 4)),
            })
            .collect();
        Self { net, inputs, weights }
    }

    pub fn loss(&self, net: &AgentNetwork) -> f64 {
        let mut h = net.initial_hidden(self.inputs[0].nrows());
        let mut total = 0.0;
        for (x, w) in self.inputs.iter().zip(&self.weights) {
            let out = net.step(x.view(), h.view()).unwrap();
            for (e, we) in out.evidence.iter().zip(w.evidence.as_ref().unwrap()) {
                total += (e * we).sum();
            }
            total += (&out.selector * w.selector.as_ref().unwrap()).sum();
            total += (out.q.as_ref().unwrap() * w.q.as_ref().unwrap()).sum();
            h = out.hidden;
        }
        total
    }

    pub fn gradient(&self) -> AgentNetwork {
        let mut tape = GradientTape::new();
        let mut h = self.net.initial_hidden(self.inputs[0].nrows());
        for x in &self.inputs {
            h = self.net.step_recorded(x.view(), h.view(), &mut tape).unwrap().hidden;
        }
        tape.backward(&self.net, &self.weights).unwrap()
    }
}

fn episodes(variant: Variant, settings: &EnvSettings, net: &AgentNetwork, count: usize) -> Vec<EpisodeRecord> {
    let mut env = settings.build(0.99).unwrap();
    let opts = RolloutOptions::default();
    (0..count)
        .map(|s| collect_episode(env.as_mut(), net, variant, 0.6, 100 + s as u64, &opts).unwrap())
        .collect()
}

/// Per-group relative error of the full TD + BCE gradient on a few
/// exploratory episodes.
pub fn objective_gradient_errors(variant: Variant, env_name: EnvName, probes_per_tensor: usize) -> BTreeMap<String, f64> {
    let settings = EnvSettings::preset(env_name);
    let env = settings.build(0.99).unwrap();
    let config = TrainConfig {
        temperature_init: 3.0,
        ..TrainConfig::default()
    };
    let shape = network_shape(env.as_ref(), variant, &config);
    let mut online = AgentNetwork::new(shape, 5, 3.0);
    online.mixer_bias[0] = 0.4;
    let mut target = AgentNetwork::new(shape, 6, 2.5);
    target.mixer_bias[0] = -0.2;
    let eps = episodes(variant, &settings, &online, 4);
    let batch: Vec<&EpisodeRecord> = eps.iter().collect();
    let update = UpdateSettings {
        variant,
        gamma: 0.99,
        bce_weight: 1.0,
        selector_reaches_encoder: true,
    };
    let (_, grads) = batch_gradients(&online, &target, &batch, &update).unwrap();
    let loss = |net: &AgentNetwork| batch_loss(net, &target, &batch, &update).unwrap().total(1.0);
    fd_group_errors(&online, &grads, loss, probes_per_tensor, 11)
}

