//! Cooperative partially observable environments behind one stepping
//! interface.
//!
//! * [`Hallway`]: one Markov chain per agent; everyone must reach cell 0 on
//!   the same step.
//! * [`CooperativeNavigation`]: agents must jointly cover every landmark on a
//!   grid.
//! * [`PredatorPrey`]: predators must surround a randomly moving prey.
//!
//! Agents never observe each other, so coordination has to go through
//! messages.

mod grid;
mod hallway;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{CooperativeNavigation, GridAction, GridConfig, PredatorPrey};
pub use hallway::{Hallway, HallwayAction, HallwayConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("action {action} of agent {agent} is outside 0..{num_actions}")]
    InvalidAction {
        agent: usize,
        action: usize,
        num_actions: usize,
    },
    #[error("expected {expected} actions, got {actual}")]
    WrongActionCount { expected: usize, actual: usize },
    #[error("episode has terminated; call reset first")]
    EpisodeOver,
    #[error("agent index {0} out of range")]
    NoSuchAgent(usize),
    #[error("invalid environment config: {0}")]
    Config(String),
}

/// Static description of a cooperative task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecPomdpSpec {
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_dim: usize,
    pub episode_limit: usize,
    pub gamma: f64,
}

impl DecPomdpSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n_agents < 2 {
            return Err(EnvError::Config("need at least two agents".into()));
        }
        if self.n_actions < 2 {
            return Err(EnvError::Config("need at least two actions".into()));
        }
        if self.episode_limit < 1 {
            return Err(EnvError::Config("episode_limit must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(EnvError::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        Ok(())
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub success: bool,
    pub timed_out: bool,
    pub step: usize,
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub team_reward: f64,
    pub terminated: bool,
    pub info: StepInfo,
}

pub trait Environment: Send {
    fn spec(&self) -> DecPomdpSpec;

    /// Starts a new episode; identical seeds give identical episodes.
    fn reset(&mut self, seed: u64) -> StepResult;

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError>;

    fn observe(&self, agent: usize) -> Result<Vec<f64>, EnvError>;

    /// Compact textual state for trajectory dumps.
    fn state_summary(&self) -> String;

    fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.spec().n_agents)
            .map(|i| self.observe(i).expect("agent index in range"))
            .collect()
    }
}

pub(crate) fn check_actions(actions: &[usize], n_agents: usize, n_actions: usize) -> Result<(), EnvError> {
    if actions.len() != n_agents {
        return Err(EnvError::WrongActionCount {
            expected: n_agents,
            actual: actions.len(),
        });
    }
    for (agent, &action) in actions.iter().enumerate() {
        if action >= n_actions {
            return Err(EnvError::InvalidAction {
                agent,
                action,
                num_actions: n_actions,
            });
        }
    }
    Ok(())
}

/// Named presets used by run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    HallwayEasy,
    HallwayHard,
    CnMedium,
    CnHard,
    PpMedium,
    PpHard,
}

impl EnvName {
    pub const ALL: [EnvName; 6] = [
        EnvName::HallwayEasy,
        EnvName::HallwayHard,
        EnvName::CnMedium,
        EnvName::CnHard,
        EnvName::PpMedium,
        EnvName::PpHard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::HallwayEasy => "hallway_easy",
            EnvName::HallwayHard => "hallway_hard",
            EnvName::CnMedium => "cn_medium",
            EnvName::CnHard => "cn_hard",
            EnvName::PpMedium => "pp_medium",
            EnvName::PpHard => "pp_hard",
        }
    }
}

impl std::fmt::Display for EnvName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fully resolved environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSettings {
    Hallway(HallwayConfig),
    CooperativeNavigation(GridConfig),
    PredatorPrey(GridConfig),
}

impl EnvSettings {
    pub fn preset(name: EnvName) -> Self {
        match name {
            EnvName::HallwayEasy => EnvSettings::Hallway(HallwayConfig::easy()),
            EnvName::HallwayHard => EnvSettings::Hallway(HallwayConfig::hard()),
            EnvName::CnMedium => EnvSettings::CooperativeNavigation(GridConfig::cn_medium()),
            EnvName::CnHard => EnvSettings::CooperativeNavigation(GridConfig::cn_hard()),
            EnvName::PpMedium => EnvSettings::PredatorPrey(GridConfig::pp_medium()),
            EnvName::PpHard => EnvSettings::PredatorPrey(GridConfig::pp_hard()),
        }
    }

    pub fn build(&self, gamma: f64) -> Result<Box<dyn Environment>, EnvError> {
        Ok(match self {
            EnvSettings::Hallway(c) => Box::new(Hallway::new(c.clone(), gamma)?),
            EnvSettings::CooperativeNavigation(c) => Box::new(CooperativeNavigation::new(c.clone(), gamma)?),
            EnvSettings::PredatorPrey(c) => Box::new(PredatorPrey::new(c.clone(), gamma)?),
        })
    }
}

/// One line of a trajectory dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub state: String,
    pub joint_action: Vec<usize>,
    pub reward: f64,
}

/// Writes trajectory records as JSON lines.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &TrajectoryRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
