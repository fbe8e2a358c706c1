//! Value-decomposition training with evidential per-agent values.
//!
//! Each agent's value for action `a` is its temperature times the expected
//! Dirichlet probability of the fused opinion, `w_j (b^a + u / K)`. The team
//! value sums agents plus a shared bias and is trained by one-step TD
//! against a periodically refreshed target network. In the selective
//! variant the selector learns only from BCE on link labels; that loss is
//! added to the TD loss and both go through one optimizer step.

mod episode;
mod fusion;
mod learner;
mod policy;
mod replay;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use episode::{build_inputs, collect_episode, AgentStep, EpisodeRecord, RolloutOptions, StepRecord};
pub use fusion::{combine_vjp, evidence_vjp, FusionTrace, Opinion, OpinionGrad};
pub use learner::{batch_gradients, batch_loss, Losses, UpdateSettings};
pub use policy::{act, act_on_values, argmax, EpsilonSchedule};
pub use replay::ReplayBuffer;

use crate::comm::{CommError, CommMode, CommStats, LabelSource, LinkValueMode};
use crate::envs::{EnvError, EnvSettings, Environment};
use crate::evidence::EvidenceError;
use crate::neural::{Adam, AgentNetwork, CellKind, NetworkShape, NeuralError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error("network has no q head but the variant needs one, or the reverse")]
    MissingQHead,
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch mixes episode shapes or contains an empty episode")]
    InconsistentBatch,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss (td {td}, bce {bce}) at update {update}")]
    NonFiniteLoss { td: f64, bce: f64, update: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Learned selective messaging.
    T2mac,
    /// Every payload is delivered.
    Fullcomm,
    /// Nothing is delivered; agents act on local evidence only.
    Nocomm,
    /// Plain recurrent Q-network without evidence or messages.
    Baseline,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::T2mac, Variant::Fullcomm, Variant::Nocomm, Variant::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::T2mac => "t2mac",
            Variant::Fullcomm => "fullcomm",
            Variant::Nocomm => "nocomm",
            Variant::Baseline => "baseline",
        }
    }

    pub fn comm_mode(self) -> CommMode {
        match self {
            Variant::T2mac => CommMode::Selective,
            Variant::Fullcomm => CommMode::Full,
            Variant::Nocomm | Variant::Baseline => CommMode::None,
        }
    }

    pub fn uses_evidence(self) -> bool {
        self != Variant::Baseline
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

/// Hyperparameters of one training run. Missing keys take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    /// Target refresh period, in gradient updates.
    pub target_update_interval: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of `episodes` over which epsilon anneals.
    pub epsilon_anneal_fraction: f64,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Gradient updates after every `update_every`-th episode.
    pub update_every: usize,
    pub label_threshold: f64,
    pub link_value_mode: LinkValueMode,
    /// Label every link against all payloads, or only the links that were open.
    pub label_source: LabelSource,
    pub gate_threshold: f64,
    pub temperature_init: f64,
    /// Initial bias of every evidence head. Positive so the relu outputs
    /// start away from zero, where they would get no gradient.
    pub evidence_bias_init: f64,
    pub bce_weight: f64,
    pub selector_reaches_encoder: bool,
    pub cell: CellKind,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 5000,
            batch_size: 32,
            buffer_capacity: 2000,
            learning_rate: 5e-4,
            gamma: 0.99,
            target_update_interval: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_fraction: 0.2,
            eval_interval: 100,
            eval_episodes: 32,
            grad_clip: 10.0,
            update_every: 1,
            label_threshold: crate::comm::DEFAULT_LABEL_THRESHOLD,
            link_value_mode: LinkValueMode::LeaveOneOut,
            label_source: LabelSource::ReplayFull,
            gate_threshold: crate::comm::GATE_PROBABILITY,
            temperature_init: 10.0,
            evidence_bias_init: 3.0,
            bce_weight: 1.0,
            selector_reaches_encoder: true,
            cell: CellKind::Gru,
            hidden: crate::neural::HIDDEN_WIDTH,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if self.episodes == 0 {
            return bad("episodes must be positive");
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return bad("batch_size must be in 1..=buffer_capacity");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1)");
        }
        if self.target_update_interval == 0 || self.eval_interval == 0 || self.eval_episodes == 0 || self.update_every == 0 {
            return bad("intervals and counts must be positive");
        }
        for (name, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end), ("epsilon_anneal_fraction", self.epsilon_anneal_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(TrainError::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.gate_threshold) {
            return bad("gate_threshold must be in [0, 1)");
        }
        if !(self.label_threshold >= 0.0) || !(self.bce_weight >= 0.0) {
            return bad("label_threshold and bce_weight must be non-negative");
        }
        if !self.evidence_bias_init.is_finite() || !self.temperature_init.is_finite() {
            return bad("evidence_bias_init and temperature_init must be finite");
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be non-negative");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        Ok(())
    }

    pub fn rollout_options(&self) -> RolloutOptions {
        RolloutOptions {
            label_threshold: self.label_threshold,
            link_value_mode: self.link_value_mode,
            label_source: self.label_source,
            gate_threshold: self.gate_threshold,
        }
    }

    pub fn update_settings(&self, variant: Variant) -> UpdateSettings {
        UpdateSettings {
            variant,
            gamma: self.gamma,
            bce_weight: self.bce_weight,
            selector_reaches_encoder: self.selector_reaches_encoder,
        }
    }
}

/// Independent seed streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Network,
    TrainEpisode,
    EvalEpisode,
    Replay,
}

/// Mixes a run seed, a stream tag and an index into a new seed (splitmix64).
pub fn derive_seed(seed: u64, stream: SeedStream, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add((stream as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Greedy evaluation over a fixed seed set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub comm: CommStats,
    pub mean_uncertainty: f64,
}

impl EvalSummary {
    pub fn comm_rate(&self) -> f64 {
        self.comm.rate()
    }
}

/// One row of a learning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub episode: usize,
    pub td_loss: f64,
    pub bce_loss: f64,
    pub eval_success: f64,
    pub comm_rate: f64,
    pub mean_uncertainty: f64,
}

pub fn network_shape(env: &dyn Environment, variant: Variant, config: &TrainConfig) -> NetworkShape {
    let spec = env.spec();
    NetworkShape {
        input_dim: spec.obs_dim + spec.n_agents,
        hidden: config.hidden,
        n_agents: spec.n_agents,
        n_actions: spec.n_actions,
        cell: config.cell,
        q_head: !variant.uses_evidence(),
    }
}

/// Runs `count` greedy episodes on the evaluation seeds of `seed`.
pub fn evaluate(
    env: &mut dyn Environment,
    net: &AgentNetwork,
    variant: Variant,
    seed: u64,
    count: usize,
    options: &RolloutOptions,
) -> Result<EvalSummary, TrainError> {
    let mut summary = EvalSummary {
        episodes: count,
        ..EvalSummary::default()
    };
    let (mut successes, mut returns, mut unc_sum, mut unc_n) = (0usize, 0.0, 0.0, 0usize);
    for e in 0..count {
        let ep = collect_episode(env, net, variant, 0.0, derive_seed(seed, SeedStream::EvalEpisode, e as u64), options)?;
        successes += usize::from(ep.success);
        returns += ep.total_reward();
        summary.comm = summary.comm.merge(ep.comm_stats());
        for a in ep.steps.iter().flat_map(|s| &s.agents) {
            unc_sum += a.uncertainty;
            unc_n += 1;
        }
    }
    if count > 0 {
        summary.success_rate = successes as f64 / count as f64;
        summary.mean_return = returns / count as f64;
    }
    if unc_n > 0 {
        summary.mean_uncertainty = unc_sum / unc_n as f64;
    }
    Ok(summary)
}

/// What an individual training episode did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeReport {
    pub episode: usize,
    pub epsilon: f64,
    pub success: bool,
    pub losses: Option<Losses>,
}

/// Online and target networks with their optimizer.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub online: AgentNetwork,
    pub target: AgentNetwork,
    pub adam: Adam,
    pub updates: usize,
    pub settings: UpdateSettings,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    pub target_update_interval: usize,
}

impl LearnerState {
    pub fn new(online: AgentNetwork, variant: Variant, config: &TrainConfig) -> Self {
        Self {
            target: online.clone(),
            online,
            adam: Adam::new(config.learning_rate),
            updates: 0,
            settings: config.update_settings(variant),
            grad_clip: config.grad_clip,
            target_update_interval: config.target_update_interval,
        }
    }

    /// One optimizer step on `batch`; refreshes the target network every
    /// `target_update_interval` updates.
    pub fn td_update(&mut self, batch: &[&EpisodeRecord]) -> Result<Losses, TrainError> {
        let (losses, mut grads) = batch_gradients(&self.online, &self.target, batch, &self.settings)?;
        if !losses.td.is_finite() || !losses.bce.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                td: losses.td,
                bce: losses.bce,
                update: self.updates,
            });
        }
        if self.grad_clip > 0.0 {
            let norm = grads.l2_norm();
            if norm > self.grad_clip {
                grads.scale(self.grad_clip / norm);
            }
        }
        self.adam.step(&mut self.online, &grads)?;
        self.updates += 1;
        if self.updates % self.target_update_interval == 0 {
            self.target = self.online.clone();
        }
        Ok(losses)
    }
}

/// Full training state for one (environment, variant, seed).
pub struct Trainer {
    config: TrainConfig,
    variant: Variant,
    seed: u64,
    env: Box<dyn Environment>,
    learner: LearnerState,
    buffer: ReplayBuffer,
    replay_rng: ChaCha8Rng,
    schedule: EpsilonSchedule,
    episodes_done: usize,
    window: (f64, f64, usize),
}

/// Fresh online network for `variant`. Evidence heads get a positive bias,
/// and the mixer bias is set so that a vacuous team is worth zero rather
/// than `n·w/K`.
pub fn initial_network(shape: NetworkShape, variant: Variant, config: &TrainConfig, seed: u64) -> AgentNetwork {
    let mut net = AgentNetwork::new(shape, seed, config.temperature_init);
    if variant.uses_evidence() {
        for head in &mut net.evidence_heads {
            head.bias.fill(config.evidence_bias_init);
        }
        net.mixer_bias[0] = -(shape.n_agents as f64) * config.temperature_init / shape.n_actions as f64;
    }
    net
}

impl Trainer {
    pub fn new(settings: &EnvSettings, variant: Variant, config: TrainConfig, seed: u64) -> Result<Self, TrainError> {
        config.validate()?;
        let env = settings.build(config.gamma)?;
        let shape = network_shape(env.as_ref(), variant, &config);
        let online = initial_network(shape, variant, &config, derive_seed(seed, SeedStream::Network, 0));
        Ok(Self {
            learner: LearnerState::new(online, variant, &config),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            replay_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, SeedStream::Replay, 0)),
            schedule: EpsilonSchedule::new(config.epsilon_start, config.epsilon_end, config.episodes, config.epsilon_anneal_fraction),
            episodes_done: 0,
            window: (0.0, 0.0, 0),
            env,
            config,
            variant,
            seed,
        })
    }

    pub fn online(&self) -> &AgentNetwork {
        &self.learner.online
    }

    pub fn target(&self) -> &AgentNetwork {
        &self.learner.target
    }

    pub fn learner(&self) -> &LearnerState {
        &self.learner
    }

    pub fn updates(&self) -> usize {
        self.learner.updates
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Collects one episode, stores it, and performs a gradient update when due.
    pub fn train_episode(&mut self) -> Result<EpisodeReport, TrainError> {
        let episode = self.episodes_done;
        let epsilon = self.schedule.at(episode);
        let seed = derive_seed(self.seed, SeedStream::TrainEpisode, episode as u64);
        let record = collect_episode(self.env.as_mut(), &self.learner.online, self.variant, epsilon, seed, &self.config.rollout_options())?;
        let success = record.success;
        self.buffer.push(record);
        self.episodes_done += 1;
        let mut losses = None;
        if self.buffer.len() >= self.config.batch_size && self.episodes_done % self.config.update_every == 0 {
            losses = Some(self.update()?);
        }
        Ok(EpisodeReport {
            episode,
            epsilon,
            success,
            losses,
        })
    }

    /// One gradient step on a sampled batch.
    pub fn update(&mut self) -> Result<Losses, TrainError> {
        let batch = self
            .buffer
            .sample(self.config.batch_size, &mut self.replay_rng)
            .ok_or(TrainError::EmptyBatch)?;
        let losses = self.learner.td_update(&batch)?;
        self.window.0 += losses.td;
        self.window.1 += losses.bce;
        self.window.2 += 1;
        Ok(losses)
    }

    pub fn evaluate(&mut self) -> Result<EvalSummary, TrainError> {
        evaluate(
            self.env.as_mut(),
            &self.learner.online,
            self.variant,
            self.seed,
            self.config.eval_episodes,
            &self.config.rollout_options(),
        )
    }

    /// Evaluates and closes the current loss window.
    pub fn metric_row(&mut self) -> Result<MetricRow, TrainError> {
        let eval = self.evaluate()?;
        let (td, bce, n) = std::mem::take(&mut self.window);
        let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
        Ok(MetricRow {
            episode: self.episodes_done,
            td_loss: mean(td),
            bce_loss: mean(bce),
            eval_success: eval.success_rate,
            comm_rate: eval.comm_rate(),
            mean_uncertainty: eval.mean_uncertainty,
        })
    }

    /// Trains until the configured number of episodes, evaluating every
    /// `eval_interval` episodes and once more at the end if needed. The
    /// trainer stays usable after an error, e.g. to dump its networks.
    pub fn run(&mut self, mut on_row: impl FnMut(&MetricRow)) -> Result<Vec<MetricRow>, TrainError> {
        let mut metrics = Vec::new();
        while self.episodes_done < self.config.episodes {
            self.train_episode()?;
            if self.episodes_done % self.config.eval_interval == 0 || self.episodes_done == self.config.episodes {
                let row = self.metric_row()?;
                on_row(&row);
                metrics.push(row);
            }
        }
        Ok(metrics)
    }

    pub fn into_network(self) -> AgentNetwork {
        self.learner.online
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricRow>,
    pub updates: usize,
    pub network: AgentNetwork,
}

impl TrainOutcome {
    pub fn final_row(&self) -> Option<&MetricRow> {
        self.metrics.last()
    }
}

/// Trains one seed to completion.
pub fn train(settings: &EnvSettings, variant: Variant, config: &TrainConfig, seed: u64) -> Result<TrainOutcome, TrainError> {
    let mut trainer = Trainer::new(settings, variant, config.clone(), seed)?;
    let metrics = trainer.run(|_| {})?;
    Ok(TrainOutcome {
        metrics,
        updates: trainer.updates(),
        network: trainer.into_network(),
    })
}
