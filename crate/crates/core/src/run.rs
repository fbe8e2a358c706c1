//! Experiment orchestration: one training run per seed, in parallel, with
//! every artifact written under `<output_dir>/<env>/<variant>/`.
//!
//! ```text
//! config.toml            resolved config echo
//! summary.csv            one row per seed
//! seed_<s>/metrics.csv   learning curve
//! seed_<s>/checkpoint.bin
//! seed_<s>/comm.jsonl           (log_comm)
//! seed_<s>/trajectories.jsonl   (log_trajectories)
//! seed_<s>/failure_checkpoint.bin  only after a failed update
//! ```

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::comm::{CommLogRecord, CommLogWriter};
use crate::config::{ConfigError, RunConfig};
use crate::envs::{EnvSettings, TrajectoryRecord, TrajectoryWriter};
use crate::metrics::{write_rows_to_path, MetricsError, SummaryRow};
use crate::neural::{load_checkpoint, save_checkpoint, AgentNetwork, NeuralError};
use crate::trainer::{
    collect_episode, derive_seed, evaluate, network_shape, EpisodeRecord, EvalSummary, SeedStream, TrainError, Trainer,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}: {source}")]
    Train {
        seed: u64,
        #[source]
        source: TrainError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: NeuralError,
    },
    #[error("checkpoint {path} does not fit {what}")]
    CheckpointShape { path: PathBuf, what: String },
}

impl RunError {
    /// 1 for configuration problems, 2 for everything that failed while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// What a finished `run` produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub variant_dir: PathBuf,
    pub summary: Vec<SummaryRow>,
}

/// Trains every seed of `config` and writes all artifacts.
pub fn run(config: &RunConfig) -> Result<RunArtifacts, RunError> {
    config.validate()?;
    let dir = config.variant_dir();
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let echo = dir.join("config.toml");
    std::fs::write(&echo, config.to_toml_string()).map_err(io_err(&echo))?;
    let mut summary = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed))
        .collect::<Result<Vec<_>, _>>()?;
    summary.sort_by_key(|r| r.seed);
    write_rows_to_path(&summary, &dir.join("summary.csv"))?;
    Ok(RunArtifacts {
        variant_dir: dir,
        summary,
    })
}

/// Trains one seed and writes its directory.
pub fn run_seed(config: &RunConfig, seed: u64) -> Result<SummaryRow, RunError> {
    let dir = config.seed_dir(seed);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let settings = EnvSettings::preset(config.env);
    let train_err = |source| RunError::Train { seed, source };
    let mut trainer = Trainer::new(&settings, config.variant, config.train.clone(), seed).map_err(train_err)?;
    let metrics = match trainer.run(|_| {}) {
        Ok(m) => m,
        Err(source) => {
            // Keep the state that produced the failure for inspection.
            let _ = save_checkpoint(trainer.online(), &dir.join("failure_checkpoint.bin"));
            return Err(train_err(source));
        }
    };
    write_rows_to_path(&metrics, &dir.join("metrics.csv"))?;
    let checkpoint = dir.join("checkpoint.bin");
    save_checkpoint(trainer.online(), &checkpoint).map_err(|source| RunError::Checkpoint {
        path: checkpoint.clone(),
        source,
    })?;
    if config.log_comm || config.log_trajectories {
        write_logs(config, seed, trainer.online(), &dir)?;
    }
    let last = *metrics.last().expect("every run evaluates at least once");
    Ok(SummaryRow {
        env: config.env.as_str().to_string(),
        variant: config.variant.as_str().to_string(),
        seed,
        episodes: trainer.episodes_done(),
        updates: trainer.updates(),
        final_success: last.eval_success,
        comm_rate: last.comm_rate,
        mean_uncertainty: last.mean_uncertainty,
    })
}

/// The greedy evaluation episodes of `seed`, as used for the metric rows.
pub fn evaluation_episodes(config: &RunConfig, seed: u64, net: &AgentNetwork) -> Result<Vec<EpisodeRecord>, RunError> {
    let train_err = |source| RunError::Train { seed, source };
    let mut env = EnvSettings::preset(config.env)
        .build(config.train.gamma)
        .map_err(|e| train_err(e.into()))?;
    let options = config.train.rollout_options();
    (0..config.train.eval_episodes)
        .map(|e| {
            let episode_seed = derive_seed(seed, SeedStream::EvalEpisode, e as u64);
            collect_episode(env.as_mut(), net, config.variant, 0.0, episode_seed, &options).map_err(train_err)
        })
        .collect()
}

fn write_logs(config: &RunConfig, seed: u64, net: &AgentNetwork, dir: &Path) -> Result<(), RunError> {
    let episodes = evaluation_episodes(config, seed, net)?;
    if config.log_comm && config.variant.uses_evidence() {
        let path = dir.join("comm.jsonl");
        let mut log = CommLogWriter::new(BufWriter::new(File::create(&path).map_err(io_err(&path))?));
        for ep in &episodes {
            let labels = ep
                .relabel(&config.train.rollout_options())
                .map_err(|source| RunError::Train { seed, source })?;
            for (t, (step, step_labels)) in ep.steps.iter().zip(labels).enumerate() {
                for link in step_labels {
                    log.write(&CommLogRecord {
                        step: t,
                        sender: link.sender,
                        recipient: link.recipient,
                        gate: step.gates[[link.sender, link.recipient]],
                        p: step.agents[link.sender].selector[link.recipient],
                        v: link.value,
                        y: link.label,
                    })
                    .map_err(io_err(&path))?;
                }
            }
        }
    }
    if config.log_trajectories {
        let path = dir.join("trajectories.jsonl");
        let mut log = TrajectoryWriter::new(BufWriter::new(File::create(&path).map_err(io_err(&path))?));
        let mut env = EnvSettings::preset(config.env)
            .build(config.train.gamma)
            .map_err(|e| RunError::Train { seed, source: e.into() })?;
        for ep in &episodes {
            env.reset(ep.seed);
            for (t, step) in ep.steps.iter().enumerate() {
                let joint_action: Vec<usize> = step.agents.iter().map(|a| a.action).collect();
                let result = env
                    .step(&joint_action)
                    .map_err(|e| RunError::Train { seed, source: e.into() })?;
                log.write(&TrajectoryRecord {
                    step: t,
                    state: env.state_summary(),
                    joint_action,
                    reward: result.team_reward,
                })
                .map_err(io_err(&path))?;
            }
        }
    }
    Ok(())
}

/// Greedy evaluation of a saved network under `config`'s environment and
/// variant, on the evaluation seeds of `seed`.
pub fn evaluate_checkpoint(config: &RunConfig, checkpoint: &Path, seed: u64, episodes: usize) -> Result<EvalSummary, RunError> {
    let net = load_checkpoint(checkpoint).map_err(|source| RunError::Checkpoint {
        path: checkpoint.to_path_buf(),
        source,
    })?;
    let mut env = EnvSettings::preset(config.env)
        .build(config.train.gamma)
        .map_err(|e| RunError::Train { seed, source: e.into() })?;
    let expected = network_shape(env.as_ref(), config.variant, &config.train);
    if net.shape != expected {
        return Err(RunError::CheckpointShape {
            path: checkpoint.to_path_buf(),
            what: format!("{} / {}", config.env, config.variant),
        });
    }
    evaluate(env.as_mut(), &net, config.variant, seed, episodes, &config.train.rollout_options())
        .map_err(|source| RunError::Train { seed, source })
}
