//! Run configuration: one flat TOML table.
//!
//! Only `env` is required. Everything else falls back to a default, and the
//! resolved config is echoed next to the results so a run can be repeated
//! from the echo alone.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use toml::{Table, Value};

use crate::envs::EnvName;
use crate::trainer::{TrainConfig, Variant};

/// Overrides the default output directory when set.
pub const OUTPUT_ROOT_ENV: &str = "T2MAC_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_DIR: &str = "runs";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid TOML: {0}")]
    Syntax(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("{0}")]
    Schema(String),
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
}

/// Run-level keys plus every [`TrainConfig`] key, all in one table.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvName,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Write per-link records of the final evaluation episodes.
    pub log_comm: bool,
    /// Write step-by-step trajectories of the final evaluation episodes.
    pub log_trajectories: bool,
    pub train: TrainConfig,
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

impl RunConfig {
    pub fn new(env: EnvName) -> Self {
        Self {
            env,
            variant: Variant::T2mac,
            seeds: vec![0],
            output_dir: default_output_dir(),
            log_comm: false,
            log_trajectories: false,
            train: TrainConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        Self::from_table(table)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_table(mut table: Table) -> Result<Self, ConfigError> {
        let env: EnvName = take(&mut table, "env")?.ok_or(ConfigError::Missing("env"))?;
        let mut config = RunConfig::new(env);
        if let Some(v) = take(&mut table, "variant")? {
            config.variant = v;
        }
        if let Some(v) = take(&mut table, "seeds")? {
            config.seeds = v;
        }
        if let Some(v) = take::<String>(&mut table, "output_dir")? {
            config.output_dir = PathBuf::from(v);
        }
        if let Some(v) = take(&mut table, "log_comm")? {
            config.log_comm = v;
        }
        if let Some(v) = take(&mut table, "log_trajectories")? {
            config.log_trajectories = v;
        }
        config.train = TrainConfig::deserialize(Value::Table(table)).map_err(|e| ConfigError::Schema(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid {
                key: "seeds".into(),
                message: "at least one seed is required".into(),
            });
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(ConfigError::Invalid {
                key: "seeds".into(),
                message: "seeds must be distinct".into(),
            });
        }
        self.train.validate().map_err(|e| ConfigError::Schema(e.to_string()))
    }

    /// Every resolved key as one flat table.
    pub fn to_table(&self) -> Table {
        let mut table = Table::new();
        table.insert("env".into(), Value::String(self.env.as_str().into()));
        table.insert("variant".into(), Value::String(self.variant.as_str().into()));
        table.insert(
            "seeds".into(),
            Value::Array(self.seeds.iter().map(|&s| Value::Integer(s as i64)).collect()),
        );
        table.insert("output_dir".into(), Value::String(self.output_dir.to_string_lossy().into_owned()));
        table.insert("log_comm".into(), Value::Boolean(self.log_comm));
        table.insert("log_trajectories".into(), Value::Boolean(self.log_trajectories));
        if let Ok(Value::Table(train)) = Value::try_from(&self.train) {
            table.extend(train);
        }
        table
    }

    /// The config echo written next to results.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_table()).expect("config tables always serialize")
    }

    /// Applies `key=value`; the value is parsed as a TOML literal and falls
    /// back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
        let key = key.trim();
        let raw = raw.trim();
        if key.is_empty() {
            return Err(ConfigError::Override(assignment.to_string()));
        }
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        let mut table = self.to_table();
        table.insert(key.to_string(), value);
        *self = Self::from_table(table)?;
        Ok(())
    }

    /// `<output_dir>/<env>/<variant>`.
    pub fn variant_dir(&self) -> PathBuf {
        self.output_dir.join(self.env.as_str()).join(self.variant.as_str())
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.variant_dir().join(format!("seed_{seed}"))
    }
}

fn take<T: for<'de> Deserialize<'de>>(table: &mut Table, key: &'static str) -> Result<Option<T>, ConfigError> {
    match table.remove(key) {
        None => Ok(None),
        Some(value) => T::deserialize(value).map(Some).map_err(|e| ConfigError::Invalid {
            key: key.to_string(),
            message: e.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_is_required() {
        let err = RunConfig::from_toml_str("variant = \"t2mac\"").unwrap_err();
        assert!(err.to_string().contains("env"), "{err}");
    }

    #[test]
    fn defaults_fill_the_rest() {
        let c = RunConfig::from_toml_str("env = \"hallway_easy\"").unwrap();
        assert_eq!(c.variant, Variant::T2mac);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.train, TrainConfig::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_toml_str("env = \"cn_hard\"\nlearning_rat = 0.1").unwrap_err();
        assert!(err.to_string().contains("learning_rat"), "{err}");
        let err = RunConfig::from_toml_str("env = \"moon\"").unwrap_err();
        assert!(err.to_string().contains("env"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::from_toml_str(
            "env = \"pp_medium\"\nvariant = \"fullcomm\"\nseeds = [3, 1]\nepisodes = 7\nlearning_rate = 0.001\ncell = \"tanh\"\nlink_value_mode = \"before_communication\"\nlabel_source = \"replay_gated\"",
        )
        .unwrap();
        c.output_dir = PathBuf::from("/tmp/somewhere");
        let echo = c.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&echo).unwrap(), c);
    }

    #[test]
    fn overrides_parse_literals_and_strings() {
        let mut c = RunConfig::new(EnvName::HallwayEasy);
        c.apply_override("episodes=12").unwrap();
        c.apply_override("variant = nocomm").unwrap();
        c.apply_override("seeds=[4,5]").unwrap();
        c.apply_override("grad_clip=0.0").unwrap();
        assert_eq!((c.train.episodes, c.variant, c.seeds.clone(), c.train.grad_clip), (12, Variant::Nocomm, vec![4, 5], 0.0));
        assert!(c.apply_override("bogus=1").unwrap_err().to_string().contains("bogus"));
        assert!(c.apply_override("no_equals").is_err());
        assert!(c.apply_override("gamma=1.5").is_err());
    }
}
