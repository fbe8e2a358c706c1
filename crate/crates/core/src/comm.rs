//! Message routing, selective gating, link valuation and inbox fusion.
//!
//! Every step each agent emits one evidence payload per teammate. A gate
//! matrix decides which payloads are delivered. Recipients fold delivered
//! payloads into their local opinion with Dempster's rule. Link values
//! measure how much a single message lowers the recipient's uncertainty,
//! and thresholded values become pseudo-labels for the selector.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::{
    combine_pair, evidence_from_opinion, opinion_from_evidence, DirichletOpinion, EvidenceError, EvidenceVector,
};

/// Default pseudo-label threshold on link value, in uncertainty-mass units.
pub const DEFAULT_LABEL_THRESHOLD: f64 = 0.01;

/// Execution gate on selector output: a link opens when `p > 0.5`.
pub const GATE_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommError {
    #[error("message from agent {sender} to itself")]
    SelfMessage { sender: usize },
    #[error("no message from agent {sender} in the inbox")]
    MissingMessage { sender: usize },
    #[error("probability {0} outside (0, 1)")]
    ProbabilityRange(f64),
    #[error("{probs} probabilities but {labels} labels")]
    LengthMismatch { probs: usize, labels: usize },
    #[error("label threshold {0} must be non-negative")]
    NegativeThreshold(f64),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
}

/// Evidence sent from one agent to a specific teammate.
#[derive(Debug, Clone, PartialEq)]
pub struct TailoredMessage {
    pub sender: usize,
    pub recipient: usize,
    pub payload: EvidenceVector,
    pub timestep: usize,
}

impl TailoredMessage {
    pub fn new(sender: usize, recipient: usize, payload: EvidenceVector, timestep: usize) -> Result<Self, CommError> {
        if sender == recipient {
            return Err(CommError::SelfMessage { sender });
        }
        Ok(Self {
            sender,
            recipient,
            payload,
            timestep,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommMode {
    /// Links open where the selector says `p_ij > 0.5`.
    Selective,
    /// Every off-diagonal link is open.
    Full,
    /// Nothing is sent.
    None,
}

/// Selector probabilities and the resulting gates; rows are senders.
#[derive(Debug, Clone, PartialEq)]
pub struct CommDecision {
    pub probs: Array2<f64>,
    pub gates: Array2<bool>,
}

impl CommDecision {
    pub fn new(probs: Array2<f64>, mode: CommMode) -> Self {
        let gates = gate_messages(&probs, mode);
        Self { probs, gates }
    }

    pub fn open_links(&self) -> usize {
        self.gates.iter().filter(|&&g| g).count()
    }
}

/// Gate matrix for `probs[sender, recipient]`; the diagonal is always closed.
pub fn gate_messages(probs: &Array2<f64>, mode: CommMode) -> Array2<bool> {
    gate_messages_at(probs, mode, GATE_PROBABILITY)
}

/// Like [`gate_messages`] with a custom selective threshold.
pub fn gate_messages_at(probs: &Array2<f64>, mode: CommMode, threshold: f64) -> Array2<bool> {
    Array2::from_shape_fn(probs.raw_dim(), |(i, j)| {
        i != j
            && match mode {
                CommMode::Selective => probs[[i, j]] > threshold,
                CommMode::Full => true,
                CommMode::None => false,
            }
    })
}

/// Result of folding an inbox into a local opinion.
#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub evidence: EvidenceVector,
    pub opinion: DirichletOpinion,
    /// Senders whose message was dropped for total conflict.
    pub skipped: Vec<usize>,
}

/// Folds `inbox` into `local`: local first, then messages by ascending
/// sender. A message in total conflict with the running fusion is skipped.
pub fn integrate_inbox(local: &DirichletOpinion, inbox: &[TailoredMessage]) -> Result<Integration, CommError> {
    let mut order: Vec<&TailoredMessage> = inbox.iter().collect();
    order.sort_by_key(|m| m.sender);
    let mut fused = local.clone();
    let mut skipped = Vec::new();
    for message in order {
        let incoming = opinion_from_evidence(&message.payload);
        match combine_pair(&fused, &incoming) {
            Ok(next) => fused = next,
            Err(EvidenceError::FusionConflict { .. }) => skipped.push(message.sender),
            Err(other) => return Err(other.into()),
        }
    }
    Ok(Integration {
        evidence: evidence_from_opinion(&fused)?,
        opinion: fused,
        skipped,
    })
}

/// Which uncertainty counts as "before" when valuing a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkValueMode {
    /// Uncertainty with the full inbox minus this one message.
    #[default]
    LeaveOneOut,
    /// Uncertainty of the purely local opinion.
    BeforeCommunication,
}

/// `v_ij = u_j(reference) - u_j(full inbox)`; may be negative.
pub fn link_value(
    local: &DirichletOpinion,
    message: &TailoredMessage,
    inbox: &[TailoredMessage],
    mode: LinkValueMode,
) -> Result<f64, CommError> {
    let position = inbox
        .iter()
        .position(|m| m.sender == message.sender)
        .ok_or(CommError::MissingMessage { sender: message.sender })?;
    let full = integrate_inbox(local, inbox)?.opinion.uncertainty();
    let before = match mode {
        LinkValueMode::LeaveOneOut => {
            let rest: Vec<TailoredMessage> = inbox
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != position)
                .map(|(_, m)| m.clone())
                .collect();
            integrate_inbox(local, &rest)?.opinion.uncertainty()
        }
        LinkValueMode::BeforeCommunication => local.uncertainty(),
    };
    Ok(before - full)
}

/// Valued and labelled communication link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkLabel {
    pub sender: usize,
    pub recipient: usize,
    pub value: f64,
    pub label: u8,
}

/// `label = 1` iff `value > threshold`.
pub fn make_labels(values: &[(usize, usize, f64)], threshold: f64) -> Result<Vec<LinkLabel>, CommError> {
    if !(threshold >= 0.0) {
        return Err(CommError::NegativeThreshold(threshold));
    }
    Ok(values
        .iter()
        .map(|&(sender, recipient, value)| LinkLabel {
            sender,
            recipient,
            value,
            label: u8::from(value > threshold),
        })
        .collect())
}

/// Values and labels every off-diagonal link of one step, using all payloads
/// as the counterfactual full inbox. `payloads[i][j]` is `e_ij`; the diagonal
/// holds each agent's local evidence.
pub fn label_step(
    payloads: &[Vec<EvidenceVector>],
    timestep: usize,
    threshold: f64,
    mode: LinkValueMode,
) -> Result<Vec<LinkLabel>, CommError> {
    let n = payloads.len();
    let mut values = Vec::with_capacity(n * n.saturating_sub(1));
    for j in 0..n {
        let local = opinion_from_evidence(&payloads[j][j]);
        let inbox: Vec<TailoredMessage> = (0..n)
            .filter(|&i| i != j)
            .map(|i| TailoredMessage::new(i, j, payloads[i][j].clone(), timestep))
            .collect::<Result<_, _>>()?;
        for message in &inbox {
            values.push((message.sender, j, link_value(&local, message, &inbox, mode)?));
        }
    }
    values.sort_by_key(|&(i, j, _)| (i, j));
    make_labels(&values, threshold)
}

/// Which links get labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// Every off-diagonal link, valued against the inbox of all payloads.
    #[default]
    ReplayFull,
    /// Only links that were open, valued against the inbox actually received.
    ReplayGated,
}

/// Like [`label_step`] but restricted to open links: `gates[[i, j]]` means
/// agent `i` sent to agent `j`, and each value is taken against the gated
/// inbox of the recipient.
pub fn label_gated_step(
    payloads: &[Vec<EvidenceVector>],
    gates: &Array2<bool>,
    timestep: usize,
    threshold: f64,
    mode: LinkValueMode,
) -> Result<Vec<LinkLabel>, CommError> {
    let n = payloads.len();
    let mut values = Vec::new();
    for j in 0..n {
        let local = opinion_from_evidence(&payloads[j][j]);
        let inbox: Vec<TailoredMessage> = (0..n)
            .filter(|&i| i != j && gates[[i, j]])
            .map(|i| TailoredMessage::new(i, j, payloads[i][j].clone(), timestep))
            .collect::<Result<_, _>>()?;
        for message in &inbox {
            values.push((message.sender, j, link_value(&local, message, &inbox, mode)?));
        }
    }
    values.sort_by_key(|&(i, j, _)| (i, j));
    make_labels(&values, threshold)
}

/// Minimized binary cross-entropy and its gradient in `p`:
/// `L = -mean[y ln p + (1-y) ln(1-p)]`, `∂L/∂p = (p - y) / (p (1-p)) / N`.
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>), CommError> {
    if probs.len() != labels.len() {
        return Err(CommError::LengthMismatch {
            probs: probs.len(),
            labels: labels.len(),
        });
    }
    if let Some(&p) = probs.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(CommError::ProbabilityRange(p));
    }
    if probs.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let count = probs.len() as f64;
    let mut loss = 0.0;
    let grads = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            (p - y) / (p * (1.0 - p)) / count
        })
        .collect();
    Ok((loss / count, grads))
}

/// Link usage over an episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CommStats {
    pub opened: usize,
    pub possible: usize,
}

impl CommStats {
    pub fn rate(&self) -> f64 {
        if self.possible == 0 {
            0.0
        } else {
            self.opened as f64 / self.possible as f64
        }
    }

    pub fn merge(self, other: CommStats) -> CommStats {
        CommStats {
            opened: self.opened + other.opened,
            possible: self.possible + other.possible,
        }
    }
}

/// Counts open links over per-step gate matrices; `possible = n(n-1)·steps`.
pub fn comm_accounting<'a, I>(gates: I) -> CommStats
where
    I: IntoIterator<Item = &'a Array2<bool>>,
{
    gates.into_iter().fold(CommStats::default(), |acc, g| {
        let n = g.nrows();
        CommStats {
            opened: acc.opened + g.indexed_iter().filter(|((i, j), &open)| i != j && open).count(),
            possible: acc.possible + n * n.saturating_sub(1),
        }
    })
}

/// One line of the communication audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommLogRecord {
    pub step: usize,
    pub sender: usize,
    pub recipient: usize,
    pub gate: bool,
    pub p: f64,
    pub v: f64,
    pub y: u8,
}

/// Writes [`CommLogRecord`]s as JSON lines.
pub struct CommLogWriter<W: Write> {
    out: W,
}

impl<W: Write> CommLogWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &CommLogRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
