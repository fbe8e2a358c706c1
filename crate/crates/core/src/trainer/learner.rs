use ndarray::{s, Array2};

use super::fusion::{FusionTrace, OpinionGrad};
use super::{EpisodeRecord, TrainError, Variant};
use crate::neural::{AgentNetwork, GradientTape, OutputGrads, StepOutput};

/// Probabilities are kept this far from 0 and 1 inside the BCE.
const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateSettings {
    pub variant: Variant,
    pub gamma: f64,
    pub bce_weight: f64,
    pub selector_reaches_encoder: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    /// Mean squared TD error over all valid transitions.
    pub td: f64,
    /// Mean link BCE (0 when the variant has no selector labels).
    pub bce: f64,
    pub transitions: usize,
    pub links: usize,
}

impl Losses {
    pub fn total(&self, bce_weight: f64) -> f64 {
        self.td + bce_weight * self.bce
    }
}

/// Episodes sorted longest first and laid out as row blocks per timestep.
/// Row `b·n + i` is agent `i` of episode `b`; step `t` only carries the
/// episodes still running, which form a prefix of the rows.
struct Layout<'a> {
    episodes: Vec<&'a EpisodeRecord>,
    n: usize,
    k: usize,
    horizon: usize,
    inputs: Vec<Array2<f64>>,
}

impl<'a> Layout<'a> {
    fn new(episodes: &[&'a EpisodeRecord], input_dim: usize) -> Result<Self, TrainError> {
        let mut episodes = episodes.to_vec();
        episodes.sort_by_key(|e| std::cmp::Reverse(e.len()));
        let first = episodes.first().ok_or(TrainError::EmptyBatch)?;
        let (n, k) = (first.n_agents, first.n_actions);
        if episodes.iter().any(|e| e.n_agents != n || e.n_actions != k || e.is_empty()) {
            return Err(TrainError::InconsistentBatch);
        }
        let obs_dim = input_dim.checked_sub(n).ok_or(TrainError::InconsistentBatch)?;
        let horizon = episodes.iter().map(|e| e.len()).max().unwrap_or(0);
        let inputs = (0..horizon)
            .map(|t| {
                let running = episodes.iter().take_while(|e| e.len() > t).count();
                let mut x = Array2::zeros((running * n, input_dim));
                for (b, ep) in episodes.iter().enumerate() {
                    if let Some(step) = ep.steps.get(t) {
                        for (i, agent) in step.agents.iter().enumerate() {
                            let r = b * n + i;
                            for (c, v) in agent.observation.iter().take(obs_dim).enumerate() {
                                x[[r, c]] = *v;
                            }
                            x[[r, obs_dim + i]] = 1.0;
                        }
                    }
                }
                x
            })
            .collect();
        Ok(Self {
            episodes,
            n,
            k,
            horizon,
            inputs,
        })
    }

    fn rows(&self, t: usize) -> usize {
        self.inputs[t].nrows()
    }
}

fn unroll(net: &AgentNetwork, layout: &Layout<'_>, tape: Option<&mut GradientTape>) -> Result<Vec<StepOutput>, TrainError> {
    let mut outputs: Vec<StepOutput> = Vec::with_capacity(layout.horizon);
    let mut tape = tape;
    for (t, x) in layout.inputs.iter().enumerate() {
        let h = match outputs.last() {
            Some(prev) => prev.hidden.slice(s![..x.nrows(), ..]).to_owned(),
            None => net.initial_hidden(layout.rows(t)),
        };
        let out = match tape.as_deref_mut() {
            Some(tape) => net.step_recorded(x.view(), h.view(), tape)?,
            None => net.step(x.view(), h.view())?,
        };
        outputs.push(out);
    }
    Ok(outputs)
}

/// Fusion for recipient `j` of episode `b` at one step, with the gates that
/// were actually used when acting.
fn fuse_for(out: &StepOutput, episode: &EpisodeRecord, t: usize, b: usize, j: usize, n: usize) -> (FusionTrace, Vec<usize>) {
    let gates = &episode.steps[t].gates;
    let head = &out.evidence[j];
    let mut order = vec![j];
    order.extend((0..n).filter(|&i| i != j && gates[[i, j]]));
    let sources: Vec<&[f64]> = order
        .iter()
        .map(|&i| head.row(b * n + i).to_slice().expect("standard layout"))
        .collect();
    (FusionTrace::forward(sources), order)
}

/// Team value of the greedy joint action at step `t` under `net`.
fn greedy_team_value(net: &AgentNetwork, out: &StepOutput, episode: &EpisodeRecord, t: usize, b: usize, layout: &Layout<'_>, variant: Variant) -> f64 {
    let n = layout.n;
    let mut total = net.mixer_bias[0];
    for j in 0..n {
        let best = if variant.uses_evidence() {
            let (trace, _) = fuse_for(out, episode, t, b, j, n);
            let w = net.temperatures[j];
            trace.fused.expected().map(|v| w * v).fold(f64::NEG_INFINITY, f64::max)
        } else {
            let q = out.q.as_ref().expect("baseline has a q head");
            q.row(b * n + j).iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        total += best;
    }
    total
}

struct Transition {
    b: usize,
    t: usize,
    delta: f64,
    traces: Vec<(FusionTrace, Vec<usize>, f64)>,
}

/// Loss on a batch of stored episodes without gradients.
pub fn batch_loss(
    online: &AgentNetwork,
    target: &AgentNetwork,
    episodes: &[&EpisodeRecord],
    settings: &UpdateSettings,
) -> Result<Losses, TrainError> {
    evaluate(online, target, episodes, settings, false).map(|(l, _)| l)
}

/// Loss and parameter gradients of `td + bce_weight · bce` on a batch.
///
/// The TD target is `r + γ (1 - done) · max_a Q_target(next)` with the
/// gates recorded at collection time. The selector only receives the BCE
/// term because gating is a hard threshold.
pub fn batch_gradients(
    online: &AgentNetwork,
    target: &AgentNetwork,
    episodes: &[&EpisodeRecord],
    settings: &UpdateSettings,
) -> Result<(Losses, AgentNetwork), TrainError> {
    evaluate(online, target, episodes, settings, true).map(|(l, g)| (l, g.expect("gradients requested")))
}

fn evaluate(
    online: &AgentNetwork,
    target: &AgentNetwork,
    episodes: &[&EpisodeRecord],
    settings: &UpdateSettings,
    want_grads: bool,
) -> Result<(Losses, Option<AgentNetwork>), TrainError> {
    let variant = settings.variant;
    if variant.uses_evidence() == online.shape.q_head {
        return Err(TrainError::MissingQHead);
    }
    let layout = Layout::new(episodes, online.shape.input_dim)?;
    let episodes = &layout.episodes;
    let (n, k) = (layout.n, layout.k);
    if online.shape.n_agents != n || online.shape.n_actions != k {
        return Err(TrainError::InconsistentBatch);
    }
    let mut tape = GradientTape::new();
    let online_out = unroll(online, &layout, want_grads.then_some(&mut tape))?;
    let target_out = unroll(target, &layout, None)?;

    let mut transitions = Vec::new();
    let mut td_sum = 0.0;
    for (b, ep) in episodes.iter().enumerate() {
        for (t, step) in ep.steps.iter().enumerate() {
            let mut q_tot = online.mixer_bias[0];
            let mut traces = Vec::new();
            for j in 0..n {
                let action = step.agents[j].action;
                if variant.uses_evidence() {
                    let (trace, order) = fuse_for(&online_out[t], ep, t, b, j, n);
                    let expected = trace.fused.expected().nth(action).expect("action in range");
                    q_tot += online.temperatures[j] * expected;
                    traces.push((trace, order, expected));
                } else {
                    let q = online_out[t].q.as_ref().expect("baseline has a q head");
                    q_tot += q[[b * n + j, action]];
                }
            }
            let bootstrap = if step.terminated {
                0.0
            } else {
                greedy_team_value(target, &target_out[t + 1], ep, t + 1, b, &layout, variant)
            };
            let delta = q_tot - (step.reward + settings.gamma * bootstrap);
            td_sum += delta * delta;
            transitions.push(Transition { b, t, delta, traces });
        }
    }
    let count = transitions.len();
    let mut losses = Losses {
        td: td_sum / count as f64,
        transitions: count,
        ..Losses::default()
    };

    let label_links: usize = if variant == Variant::T2mac {
        episodes.iter().flat_map(|e| &e.steps).map(|s| s.labels.len()).sum()
    } else {
        0
    };
    let mut bce_sum = 0.0;
    let mut selector_grads: Vec<Array2<f64>> = Vec::new();
    if want_grads && label_links > 0 {
        selector_grads = (0..layout.horizon).map(|t| Array2::zeros((layout.rows(t), n))).collect();
    }
    if label_links > 0 {
        let scale = settings.bce_weight / label_links as f64;
        for (b, ep) in episodes.iter().enumerate() {
            for (t, step) in ep.steps.iter().enumerate() {
                for link in &step.labels {
                    let r = b * n + link.sender;
                    let p = online_out[t].selector[[r, link.recipient]].clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    let y = f64::from(link.label);
                    bce_sum -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
                    if want_grads {
                        selector_grads[t][[r, link.recipient]] += scale * (p - y) / (p * (1.0 - p));
                    }
                }
            }
        }
        losses.bce = bce_sum / label_links as f64;
        losses.links = label_links;
    }

    if !want_grads {
        return Ok((losses, None));
    }

    let mut grads_out: Vec<OutputGrads> = (0..layout.horizon)
        .map(|t| layout.rows(t))
        .map(|rows| OutputGrads {
            evidence: variant
                .uses_evidence()
                .then(|| (0..n).map(|_| Array2::zeros((rows, k))).collect()),
            selector: None,
            q: (!variant.uses_evidence()).then(|| Array2::zeros((rows, k))),
        })
        .collect();
    for (t, sel) in selector_grads.into_iter().enumerate() {
        grads_out[t].selector = Some(sel);
    }
    let mut g_temperature = vec![0.0; n];
    let mut g_bias = 0.0;
    for tr in &transitions {
        let g = 2.0 * tr.delta / count as f64;
        g_bias += g;
        let step = &episodes[tr.b].steps[tr.t];
        for j in 0..n {
            let action = step.agents[j].action;
            if variant.uses_evidence() {
                let (trace, order, expected) = &tr.traces[j];
                g_temperature[j] += g * expected;
                let mut g_op = OpinionGrad::zeros(k);
                g_op.add_expected(action, g * online.temperatures[j]);
                let source_grads = trace.backward(&g_op);
                let head = &mut grads_out[tr.t].evidence.as_mut().expect("evidence grads")[j];
                for (&i, ge) in order.iter().zip(source_grads) {
                    let r = tr.b * n + i;
                    for (a, v) in ge.into_iter().enumerate() {
                        head[[r, a]] += v;
                    }
                }
            } else {
                grads_out[tr.t].q.as_mut().expect("q grads")[[tr.b * n + j, action]] += g;
            }
        }
    }
    let mut grads = tape.backward_with(online, &grads_out, settings.selector_reaches_encoder)?;
    for (gt, v) in grads.temperatures.iter_mut().zip(g_temperature) {
        *gt += v;
    }
    grads.mixer_bias[0] += g_bias;
    Ok((losses, Some(grads)))
}
