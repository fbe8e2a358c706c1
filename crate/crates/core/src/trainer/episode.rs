use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::{act, act_on_values};
use super::{TrainError, Variant};
use crate::comm::{
    comm_accounting, gate_messages_at, integrate_inbox, label_gated_step, label_step, CommStats, LabelSource,
    LinkLabel, LinkValueMode, TailoredMessage,
};
use crate::envs::Environment;
use crate::evidence::{opinion_from_evidence, EvidenceVector};
use crate::neural::AgentNetwork;

/// Everything one agent saw, sent, received and did at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    pub observation: Vec<f64>,
    pub hidden: Vec<f64>,
    /// Local evidence `e_i`; empty for the evidence-free baseline.
    pub local_evidence: EvidenceVector,
    /// `payloads[j]` is `e_ij`, entry `i` equals the local evidence.
    pub payloads: Vec<EvidenceVector>,
    /// Selector output `p_ij` for every recipient `j`.
    pub selector: Vec<f64>,
    /// Senders whose messages this agent received, ascending.
    pub inbox: Vec<usize>,
    /// Evidence after fusing the inbox; Q-values for the baseline.
    pub integrated: Vec<f64>,
    /// Uncertainty mass after fusion (0 for the baseline).
    pub uncertainty: f64,
    pub action: usize,
    pub explored: bool,
    /// Messages dropped for total conflict.
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub agents: Vec<AgentStep>,
    /// `gates[[i, j]]`: agent `i` sent to agent `j`.
    pub gates: Array2<bool>,
    /// Link labels over all payloads (only collected for the selective variant).
    pub labels: Vec<LinkLabel>,
    pub reward: f64,
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub variant: Variant,
    pub n_agents: usize,
    pub n_actions: usize,
    pub steps: Vec<StepRecord>,
    pub success: bool,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn comm_stats(&self) -> CommStats {
        comm_accounting(self.steps.iter().map(|s| &s.gates))
    }

    pub fn mean_uncertainty(&self) -> f64 {
        let (sum, count) = self
            .steps
            .iter()
            .flat_map(|s| &s.agents)
            .fold((0.0, 0usize), |(s, c), a| (s + a.uncertainty, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Recomputes link labels from the stored payloads and gates.
    pub fn relabel(&self, options: &RolloutOptions) -> Result<Vec<Vec<LinkLabel>>, TrainError> {
        self.steps
            .iter()
            .enumerate()
            .map(|(t, step)| {
                let payloads: Vec<Vec<EvidenceVector>> = step.agents.iter().map(|a| a.payloads.clone()).collect();
                step_labels(&payloads, &step.gates, t, options)
            })
            .collect()
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        for (t, step) in self.steps.iter().enumerate() {
            if step.agents.len() != self.n_agents {
                return Err(format!("step {t}: {} agents", step.agents.len()));
            }
            if step.gates.dim() != (self.n_agents, self.n_agents) {
                return Err(format!("step {t}: gate matrix {:?}", step.gates.dim()));
            }
            for (i, a) in step.agents.iter().enumerate() {
                if a.action >= self.n_actions {
                    return Err(format!("step {t} agent {i}: action {}", a.action));
                }
                if step.gates[[i, i]] {
                    return Err(format!("step {t}: self link for agent {i}"));
                }
            }
            let last = t + 1 == self.steps.len();
            if step.terminated != last {
                return Err(format!("step {t}: terminated={} but last={last}", step.terminated));
            }
        }
        Ok(())
    }
}

/// Settings that shape a rollout besides the network and the variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub label_threshold: f64,
    pub link_value_mode: LinkValueMode,
    pub label_source: LabelSource,
    pub gate_threshold: f64,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            label_threshold: crate::comm::DEFAULT_LABEL_THRESHOLD,
            link_value_mode: LinkValueMode::LeaveOneOut,
            label_source: LabelSource::ReplayFull,
            gate_threshold: crate::comm::GATE_PROBABILITY,
        }
    }
}

/// Network input rows: observation followed by a one-hot agent id.
pub fn build_inputs(observations: &[Vec<f64>], obs_dim: usize) -> Array2<f64> {
    let n = observations.len();
    let mut x = Array2::zeros((n, obs_dim + n));
    for (i, obs) in observations.iter().enumerate() {
        for (k, v) in obs.iter().enumerate() {
            x[[i, k]] = *v;
        }
        x[[i, obs_dim + i]] = 1.0;
    }
    x
}

/// Exploration stream for an episode, independent of the environment stream.
pub(crate) fn exploration_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0xa076_1d64_78bd_642f)
}

/// Runs one episode: every step each agent encodes its observation, emits
/// local evidence and tailored payloads, gates them, receives and fuses its
/// inbox, then acts on the fused evidence.
pub fn collect_episode(
    env: &mut dyn Environment,
    net: &AgentNetwork,
    variant: Variant,
    epsilon: f64,
    seed: u64,
    options: &RolloutOptions,
) -> Result<EpisodeRecord, TrainError> {
    let spec = env.spec();
    let n = spec.n_agents;
    let k = spec.n_actions;
    let mut rng = exploration_rng(seed);
    let mut observations = env.reset(seed).observations;
    let mut hidden = net.initial_hidden(n);
    let mut steps = Vec::new();
    let mut success = false;
    loop {
        let x = build_inputs(&observations, spec.obs_dim);
        let out = net.step(x.view(), hidden.view())?;
        let (agents, gates, labels) = if variant.uses_evidence() {
            evidence_step(&out.evidence, out.selector.view(), &observations, out.hidden.view(), variant, epsilon, steps.len(), options, &mut rng)?
        } else {
            let q = out.q.as_ref().ok_or(TrainError::MissingQHead)?;
            let agents = (0..n)
                .map(|i| {
                    let values = q.row(i).to_vec();
                    let (action, explored) = act_on_values(&values, epsilon, &mut rng);
                    AgentStep {
                        observation: observations[i].clone(),
                        hidden: out.hidden.row(i).to_vec(),
                        local_evidence: EvidenceVector::zeros(k),
                        payloads: Vec::new(),
                        selector: Vec::new(),
                        inbox: Vec::new(),
                        integrated: values,
                        uncertainty: 0.0,
                        action,
                        explored,
                        skipped: Vec::new(),
                    }
                })
                .collect();
            (agents, Array2::from_elem((n, n), false), Vec::new())
        };
        let actions: Vec<usize> = agents.iter().map(|a: &AgentStep| a.action).collect();
        let result = env.step(&actions)?;
        success |= result.info.success;
        steps.push(StepRecord {
            agents,
            gates,
            labels,
            reward: result.team_reward,
            terminated: result.terminated,
        });
        hidden = out.hidden;
        observations = result.observations;
        if result.terminated {
            break;
        }
    }
    Ok(EpisodeRecord {
        seed,
        variant,
        n_agents: n,
        n_actions: k,
        steps,
        success,
    })
}

#[allow(clippy::too_many_arguments)]
fn evidence_step(
    heads: &[Array2<f64>],
    probs: ArrayView2<'_, f64>,
    observations: &[Vec<f64>],
    hidden: ArrayView2<'_, f64>,
    variant: Variant,
    epsilon: f64,
    timestep: usize,
    options: &RolloutOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<AgentStep>, Array2<bool>, Vec<LinkLabel>), TrainError> {
    let n = observations.len();
    // payloads[i][j] = e_ij
    let payloads: Vec<Vec<EvidenceVector>> = (0..n)
        .map(|i| {
            heads
                .iter()
                .map(|head| EvidenceVector::new(head.row(i).to_vec()))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    let probs = probs.to_owned();
    let gates = gate_messages_at(&probs, variant.comm_mode(), options.gate_threshold);
    let mut agents = Vec::with_capacity(n);
    for j in 0..n {
        let local = payloads[j][j].clone();
        let inbox: Vec<TailoredMessage> = (0..n)
            .filter(|&i| gates[[i, j]])
            .map(|i| TailoredMessage::new(i, j, payloads[i][j].clone(), timestep))
            .collect::<Result<_, _>>()?;
        let fused = integrate_inbox(&opinion_from_evidence(&local), &inbox)?;
        let (action, explored) = act(&fused.evidence, epsilon, rng);
        agents.push(AgentStep {
            observation: observations[j].clone(),
            hidden: hidden.row(j).to_vec(),
            local_evidence: local,
            payloads: payloads[j].clone(),
            selector: probs.row(j).to_vec(),
            inbox: inbox.iter().map(|m| m.sender).collect(),
            integrated: fused.evidence.values().to_vec(),
            uncertainty: fused.opinion.uncertainty(),
            action,
            explored,
            skipped: fused.skipped,
        });
    }
    let labels = if variant == Variant::T2mac {
        step_labels(&payloads, &gates, timestep, options)?
    } else {
        Vec::new()
    };
    Ok((agents, gates, labels))
}

fn step_labels(
    payloads: &[Vec<EvidenceVector>],
    gates: &Array2<bool>,
    timestep: usize,
    options: &RolloutOptions,
) -> Result<Vec<LinkLabel>, TrainError> {
    let (threshold, mode) = (options.label_threshold, options.link_value_mode);
    Ok(match options.label_source {
        LabelSource::ReplayFull => label_step(payloads, timestep, threshold, mode)?,
        LabelSource::ReplayGated => label_gated_step(payloads, gates, timestep, threshold, mode)?,
    })
}
