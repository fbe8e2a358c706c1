use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_actions, DecPomdpSpec, EnvError, Environment, StepInfo, StepResult};

pub const GRID_SUCCESS_REWARD: f64 = 10.0;
pub const PREDATOR_STEP_PENALTY: f64 = -0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub n_agents: usize,
    /// Landmarks for navigation; predator-prey always has a single prey.
    pub n_targets: usize,
    /// Chebyshev radius within which targets are visible.
    pub vision_radius: usize,
    pub episode_limit: usize,
}

impl GridConfig {
    pub fn cn_medium() -> Self {
        Self {
            width: 7,
            height: 7,
            n_agents: 3,
            n_targets: 3,
            vision_radius: 2,
            episode_limit: 40,
        }
    }

    pub fn cn_hard() -> Self {
        Self {
            width: 9,
            height: 9,
            n_agents: 3,
            n_targets: 3,
            vision_radius: 1,
            episode_limit: 50,
        }
    }

    pub fn pp_medium() -> Self {
        Self {
            width: 5,
            height: 5,
            n_agents: 3,
            n_targets: 1,
            vision_radius: 1,
            episode_limit: 40,
        }
    }

    pub fn pp_hard() -> Self {
        Self {
            width: 7,
            height: 7,
            n_agents: 3,
            n_targets: 1,
            vision_radius: 1,
            episode_limit: 50,
        }
    }

    /// `2 + 3·targets`: own normalized position, then per target a relative
    /// offset pair and a visibility bit.
    pub fn obs_dim(&self) -> usize {
        2 + 3 * self.n_targets
    }

    fn validate(&self) -> Result<(), EnvError> {
        if self.width < 2 || self.height < 2 {
            return Err(EnvError::Config("grid must be at least 2x2".into()));
        }
        if self.width * self.height <= self.n_agents + self.n_targets {
            return Err(EnvError::Config("grid too small for agents and targets".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Left = 0,
    Right = 1,
    Up = 2,
    Down = 3,
    Stay = 4,
}

impl GridAction {
    pub const ALL: [GridAction; 5] = [Self::Left, Self::Right, Self::Up, Self::Down, Self::Stay];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Self::Left => (-1, 0),
            Self::Right => (1, 0),
            Self::Up => (0, 1),
            Self::Down => (0, -1),
            Self::Stay => (0, 0),
        }
    }
}

pub type Cell = (usize, usize);

#[derive(Debug, Clone)]
struct Grid {
    config: GridConfig,
    gamma: f64,
    agents: Vec<Cell>,
    targets: Vec<Cell>,
    steps: usize,
    done: bool,
}

impl Grid {
    fn new(config: GridConfig, gamma: f64) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self {
            agents: vec![(0, 0); config.n_agents],
            targets: vec![(0, 0); config.n_targets],
            config,
            gamma,
            steps: 0,
            done: false,
        })
    }

    fn spec(&self) -> DecPomdpSpec {
        DecPomdpSpec {
            n_agents: self.config.n_agents,
            n_actions: GridAction::ALL.len(),
            obs_dim: self.config.obs_dim(),
            episode_limit: self.config.episode_limit,
            gamma: self.gamma,
        }
    }

    fn place(&mut self, rng: &mut ChaCha8Rng) {
        let mut cells: Vec<Cell> = (0..self.config.width)
            .flat_map(|x| (0..self.config.height).map(move |y| (x, y)))
            .collect();
        cells.shuffle(rng);
        let n = self.config.n_agents;
        self.agents = cells[..n].to_vec();
        self.targets = cells[n..n + self.config.n_targets].to_vec();
        self.steps = 0;
        self.done = false;
    }

    fn moved(&self, from: Cell, action: GridAction) -> Cell {
        let (dx, dy) = action.delta();
        let x = (from.0 as isize + dx).clamp(0, self.config.width as isize - 1) as usize;
        let y = (from.1 as isize + dy).clamp(0, self.config.height as isize - 1) as usize;
        (x, y)
    }

    fn observe(&self, agent: usize) -> Result<Vec<f64>, EnvError> {
        let (x, y) = *self.agents.get(agent).ok_or(EnvError::NoSuchAgent(agent))?;
        let mut obs = Vec::with_capacity(self.config.obs_dim());
        obs.push(x as f64 / (self.config.width - 1) as f64);
        obs.push(y as f64 / (self.config.height - 1) as f64);
        let r = self.config.vision_radius as isize;
        for &(tx, ty) in &self.targets {
            let dx = tx as isize - x as isize;
            let dy = ty as isize - y as isize;
            if dx.abs().max(dy.abs()) <= r {
                let (ox, oy) = if r == 0 {
                    (0.5, 0.5)
                } else {
                    ((dx + r) as f64 / (2 * r) as f64, (dy + r) as f64 / (2 * r) as f64)
                };
                obs.extend_from_slice(&[ox, oy, 1.0]);
            } else {
                obs.extend_from_slice(&[0.0, 0.0, 0.0]);
            }
        }
        Ok(obs)
    }

    fn begin_step(&mut self, actions: &[usize]) -> Result<Vec<GridAction>, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        check_actions(actions, self.config.n_agents, GridAction::ALL.len())?;
        self.steps += 1;
        Ok(actions.iter().map(|&a| GridAction::ALL[a]).collect())
    }

    fn result(&self, reward: f64, info: StepInfo) -> StepResult {
        StepResult {
            observations: (0..self.config.n_agents).map(|i| self.observe(i).unwrap()).collect(),
            team_reward: reward,
            terminated: self.done,
            info,
        }
    }

    fn summary(&self) -> String {
        format!("agents={:?} targets={:?} t={}", self.agents, self.targets, self.steps)
    }
}

/// Agents must simultaneously occupy every landmark.
#[derive(Debug, Clone)]
pub struct CooperativeNavigation {
    grid: Grid,
}

impl CooperativeNavigation {
    pub fn new(config: GridConfig, gamma: f64) -> Result<Self, EnvError> {
        let grid = Grid::new(config, gamma)?;
        grid.spec().validate()?;
        Ok(Self { grid })
    }

    pub fn agents(&self) -> &[Cell] {
        &self.grid.agents
    }

    pub fn landmarks(&self) -> &[Cell] {
        &self.grid.targets
    }

    pub fn set_state(&mut self, agents: &[Cell], landmarks: &[Cell]) {
        self.grid.agents = agents.to_vec();
        self.grid.targets = landmarks.to_vec();
        self.grid.steps = 0;
        self.grid.done = false;
    }

    fn uncovered(&self) -> usize {
        self.grid
            .targets
            .iter()
            .filter(|t| !self.grid.agents.contains(t))
            .count()
    }
}

impl Environment for CooperativeNavigation {
    fn spec(&self) -> DecPomdpSpec {
        self.grid.spec()
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.grid.place(&mut rng);
        self.grid.result(0.0, StepInfo::default())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        let moves = self.grid.begin_step(actions)?;
        let next: Vec<Cell> = self
            .grid
            .agents
            .iter()
            .zip(&moves)
            .map(|(&c, &a)| self.grid.moved(c, a))
            .collect();
        self.grid.agents = next;
        let uncovered = self.uncovered();
        let landmarks = self.grid.targets.len().max(1) as f64;
        let mut info = StepInfo {
            step: self.grid.steps,
            ..StepInfo::default()
        };
        info.extra.insert("uncovered".into(), uncovered as f64);
        let reward = if uncovered == 0 {
            self.grid.done = true;
            info.success = true;
            GRID_SUCCESS_REWARD
        } else {
            if self.grid.steps >= self.grid.config.episode_limit {
                self.grid.done = true;
                info.timed_out = true;
            }
            -(uncovered as f64) / landmarks
        };
        Ok(self.grid.result(reward, info))
    }

    fn observe(&self, agent: usize) -> Result<Vec<f64>, EnvError> {
        self.grid.observe(agent)
    }

    fn state_summary(&self) -> String {
        self.grid.summary()
    }
}

/// Predators must get two of their number orthogonally adjacent to a prey
/// that wanders to a random free neighbouring cell each step.
#[derive(Debug, Clone)]
pub struct PredatorPrey {
    grid: Grid,
    rng: ChaCha8Rng,
}

impl PredatorPrey {
    pub fn new(mut config: GridConfig, gamma: f64) -> Result<Self, EnvError> {
        config.n_targets = 1;
        let grid = Grid::new(config, gamma)?;
        grid.spec().validate()?;
        Ok(Self {
            grid,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn predators(&self) -> &[Cell] {
        &self.grid.agents
    }

    pub fn prey(&self) -> Cell {
        self.grid.targets[0]
    }

    pub fn set_state(&mut self, predators: &[Cell], prey: Cell) {
        self.grid.agents = predators.to_vec();
        self.grid.targets = vec![prey];
        self.grid.steps = 0;
        self.grid.done = false;
    }

    fn captured(&self) -> bool {
        let (px, py) = self.prey();
        self.grid
            .agents
            .iter()
            .filter(|&&(x, y)| x.abs_diff(px) + y.abs_diff(py) == 1)
            .count()
            >= 2
    }
}

impl Environment for PredatorPrey {
    fn spec(&self) -> DecPomdpSpec {
        self.grid.spec()
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.grid.place(&mut self.rng);
        self.grid.result(0.0, StepInfo::default())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        let moves = self.grid.begin_step(actions)?;
        let prey = self.prey();
        for (agent, action) in moves.into_iter().enumerate() {
            let next = self.grid.moved(self.grid.agents[agent], action);
            if next != prey {
                self.grid.agents[agent] = next;
            }
        }
        let mut info = StepInfo {
            step: self.grid.steps,
            ..StepInfo::default()
        };
        if self.captured() {
            self.grid.done = true;
            info.success = true;
            return Ok(self.grid.result(GRID_SUCCESS_REWARD, info));
        }
        let free: Vec<Cell> = GridAction::ALL[..4]
            .iter()
            .map(|&a| self.grid.moved(prey, a))
            .filter(|c| *c != prey && !self.grid.agents.contains(c))
            .collect();
        if let Some(&next) = free.choose(&mut self.rng) {
            self.grid.targets[0] = next;
        }
        if self.grid.steps >= self.grid.config.episode_limit {
            self.grid.done = true;
            info.timed_out = true;
        }
        Ok(self.grid.result(PREDATOR_STEP_PENALTY, info))
    }

    fn observe(&self, agent: usize) -> Result<Vec<f64>, EnvError> {
        self.grid.observe(agent)
    }

    fn state_summary(&self) -> String {
        self.grid.summary()
    }
}
