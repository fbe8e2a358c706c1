use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_actions, DecPomdpSpec, EnvError, Environment, StepInfo, StepResult};

pub const HALLWAY_SUCCESS_REWARD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallwayConfig {
    /// Chain length `l_i` per agent; agent `i` lives on cells `0..=l_i`.
    pub chain_lengths: Vec<usize>,
    pub episode_limit: usize,
}

impl HallwayConfig {
    pub fn easy() -> Self {
        Self {
            chain_lengths: vec![4, 6],
            episode_limit: 20,
        }
    }

    pub fn hard() -> Self {
        Self {
            chain_lengths: vec![4, 6, 8, 10],
            episode_limit: 30,
        }
    }

    /// Observation width: one-hot over the longest chain's cells.
    pub fn obs_dim(&self) -> usize {
        self.chain_lengths.iter().copied().max().unwrap_or(0) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HallwayAction {
    Left = 0,
    Right = 1,
    Stay = 2,
}

impl HallwayAction {
    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Self::Left),
            1 => Some(Self::Right),
            2 => Some(Self::Stay),
            _ => None,
        }
    }
}

/// Agents walk their own chain; cell 0 is the goal. Reaching it together
/// pays +10, reaching it alone ends the episode with nothing.
#[derive(Debug, Clone)]
pub struct Hallway {
    config: HallwayConfig,
    gamma: f64,
    positions: Vec<usize>,
    steps: usize,
    done: bool,
}

impl Hallway {
    pub fn new(config: HallwayConfig, gamma: f64) -> Result<Self, EnvError> {
        if config.chain_lengths.iter().any(|&l| l == 0) {
            return Err(EnvError::Config("chain lengths must be positive".into()));
        }
        let env = Self {
            positions: vec![1; config.chain_lengths.len()],
            config,
            gamma,
            steps: 0,
            done: false,
        };
        env.spec().validate()?;
        Ok(env)
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Places agents directly; used by tests and examples.
    pub fn set_positions(&mut self, positions: &[usize]) -> Result<(), EnvError> {
        if positions.len() != self.positions.len()
            || positions.iter().zip(&self.config.chain_lengths).any(|(p, l)| p > l)
        {
            return Err(EnvError::Config(format!("invalid positions {positions:?}")));
        }
        self.positions = positions.to_vec();
        self.done = false;
        self.steps = 0;
        Ok(())
    }

    fn result(&self, reward: f64, info: StepInfo) -> StepResult {
        StepResult {
            observations: self.observations(),
            team_reward: reward,
            terminated: self.done,
            info,
        }
    }
}

impl Environment for Hallway {
    fn spec(&self) -> DecPomdpSpec {
        DecPomdpSpec {
            n_agents: self.config.chain_lengths.len(),
            n_actions: 3,
            obs_dim: self.config.obs_dim(),
            episode_limit: self.config.episode_limit,
            gamma: self.gamma,
        }
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.positions = self.config.chain_lengths.iter().map(|&l| rng.gen_range(1..=l)).collect();
        self.steps = 0;
        self.done = false;
        self.result(0.0, StepInfo::default())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        check_actions(actions, self.positions.len(), 3)?;
        for ((pos, &action), &len) in self.positions.iter_mut().zip(actions).zip(&self.config.chain_lengths) {
            match HallwayAction::from_index(action) {
                Some(HallwayAction::Left) => *pos = pos.saturating_sub(1),
                Some(HallwayAction::Right) => *pos = (*pos + 1).min(len),
                _ => {}
            }
        }
        self.steps += 1;
        let at_goal = self.positions.iter().filter(|&&p| p == 0).count();
        let mut info = StepInfo {
            step: self.steps,
            ..StepInfo::default()
        };
        let mut reward = 0.0;
        if at_goal == self.positions.len() {
            reward = HALLWAY_SUCCESS_REWARD;
            info.success = true;
            self.done = true;
        } else if at_goal > 0 {
            self.done = true;
        } else if self.steps >= self.config.episode_limit {
            info.timed_out = true;
            self.done = true;
        }
        Ok(self.result(reward, info))
    }

    fn observe(&self, agent: usize) -> Result<Vec<f64>, EnvError> {
        let pos = *self.positions.get(agent).ok_or(EnvError::NoSuchAgent(agent))?;
        let mut obs = vec![0.0; self.config.obs_dim()];
        obs[pos] = 1.0;
        Ok(obs)
    }

    fn state_summary(&self) -> String {
        format!("positions={:?} t={}", self.positions, self.steps)
    }
}
