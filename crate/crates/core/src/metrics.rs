//! CSV schemas, the communication-efficiency report and curve export.
//!
//! | file | header |
//! |------|--------|
//! | `metrics.csv` | `episode,td_loss,bce_loss,eval_success,comm_rate,mean_uncertainty` |
//! | `summary.csv` | `env,variant,seed,episodes,updates,final_success,comm_rate,mean_uncertainty` |
//! | `report.csv` | `env,method,comm_success,nocomm_success,improvement,comm_rate,efficiency,zero_baseline` |
//! | `curves_long.csv` | `env,variant,seed,episode,success` |
//! | `curves_bands.csv` | `env,variant,episode,seeds,median,q25,q75` |
//!
//! Fractions are stored as fractions (0.372, not 37.2).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::trainer::MetricRow;

/// Floor on the no-communication success used as the improvement divisor.
pub const IMPROVEMENT_EPSILON: f64 = 1e-6;

pub const METRICS_HEADER: &str = "episode,td_loss,bce_loss,eval_success,comm_rate,mean_uncertainty";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("no runs given for {0}")]
    Empty(&'static str),
    #[error("runs disagree on {what}: {left} vs {right}")]
    Mismatch {
        what: &'static str,
        left: String,
        right: String,
    },
    #[error("evaluation cadence of {env}/{variant} seed {seed} differs from seed {reference}")]
    Cadence {
        env: String,
        variant: String,
        seed: u64,
        reference: u64,
    },
    #[error("cannot infer env/variant/seed from path {0}")]
    PathLayout(PathBuf),
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub env: String,
    pub variant: String,
    pub seed: u64,
    pub episodes: usize,
    pub updates: usize,
    pub final_success: f64,
    pub comm_rate: f64,
    pub mean_uncertainty: f64,
}

pub fn write_rows<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), MetricsError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned, R: Read>(input: R) -> Result<Vec<T>, MetricsError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(MetricsError::from)
}

pub fn write_rows_to_path<T: Serialize>(rows: &[T], path: &Path) -> Result<(), MetricsError> {
    write_rows(rows, std::fs::File::create(path)?)
}

pub fn read_rows_from_path<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, MetricsError> {
    read_rows(std::fs::File::open(path)?)
}

/// `improvement / comm_rate`, undefined when nothing was communicated.
pub fn efficiency(improvement: f64, comm_rate: f64) -> Option<f64> {
    (comm_rate > 0.0).then(|| improvement / comm_rate)
}

/// Communication efficiency of one method against its no-communication
/// counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub env: String,
    pub method: String,
    pub comm_success: f64,
    pub nocomm_success: f64,
    /// `(comm - nocomm) / max(nocomm, ε)`.
    pub improvement: f64,
    pub comm_rate: f64,
    /// Empty when `comm_rate` is zero.
    pub efficiency: Option<f64>,
    /// Set when the no-communication success was below ε.
    pub zero_baseline: bool,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn same<'a>(rows: impl Iterator<Item = &'a SummaryRow>, what: &'static str, key: impl Fn(&SummaryRow) -> String) -> Result<String, MetricsError> {
    let mut reference: Option<String> = None;
    for row in rows {
        let value = key(row);
        match &reference {
            None => reference = Some(value),
            Some(r) if *r != value => {
                return Err(MetricsError::Mismatch {
                    what,
                    left: r.clone(),
                    right: value,
                })
            }
            Some(_) => {}
        }
    }
    reference.ok_or(MetricsError::Empty(what))
}

/// Compares mean final success of `comm` against `nocomm` runs. Both sets
/// must come from the same environment and episode budget.
pub fn efficiency_report(comm: &[SummaryRow], nocomm: &[SummaryRow]) -> Result<EfficiencyReport, MetricsError> {
    if comm.is_empty() {
        return Err(MetricsError::Empty("communicating runs"));
    }
    if nocomm.is_empty() {
        return Err(MetricsError::Empty("non-communicating runs"));
    }
    let env = same(comm.iter().chain(nocomm), "env", |r| r.env.clone())?;
    same(comm.iter().chain(nocomm), "episode budget", |r| r.episodes.to_string())?;
    let method = same(comm.iter(), "method", |r| r.variant.clone())?;
    let comm_success = mean(comm.iter().map(|r| r.final_success));
    let nocomm_success = mean(nocomm.iter().map(|r| r.final_success));
    let comm_rate = mean(comm.iter().map(|r| r.comm_rate));
    let improvement = (comm_success - nocomm_success) / nocomm_success.max(IMPROVEMENT_EPSILON);
    Ok(EfficiencyReport {
        env,
        method,
        comm_success,
        nocomm_success,
        improvement,
        comm_rate,
        efficiency: efficiency(improvement, comm_rate),
        zero_baseline: nocomm_success < IMPROVEMENT_EPSILON,
    })
}

/// A metric series tagged with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCurve {
    pub env: String,
    pub variant: String,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
}

impl RunCurve {
    /// Reads `.../<env>/<variant>/seed_<s>/metrics.csv`.
    pub fn from_path(path: &Path) -> Result<Self, MetricsError> {
        let bad = || MetricsError::PathLayout(path.to_path_buf());
        let seed_dir = path.parent().ok_or_else(bad)?;
        let variant_dir = seed_dir.parent().ok_or_else(bad)?;
        let env_dir = variant_dir.parent().ok_or_else(bad)?;
        let name = |p: &Path| p.file_name().and_then(|s| s.to_str()).map(str::to_string).ok_or_else(bad);
        let seed = name(seed_dir)?
            .strip_prefix("seed_")
            .and_then(|s| s.parse().ok())
            .ok_or_else(bad)?;
        Ok(Self {
            env: name(env_dir)?,
            variant: name(variant_dir)?,
            seed,
            rows: read_rows_from_path(path)?,
        })
    }
}

/// Every `metrics.csv` below `root` (or `root` itself), sorted.
pub fn find_metric_files(root: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    if root.is_file() {
        found.push(root.to_path_buf());
        return Ok(found);
    }
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "metrics.csv") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env: String,
    pub variant: String,
    pub seed: u64,
    pub episode: usize,
    pub success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBand {
    pub env: String,
    pub variant: String,
    pub episode: usize,
    pub seeds: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile(&sorted, 0.5)
}

/// Long-format points plus per-episode median and interquartile band for
/// each (env, variant). Output order does not depend on input order.
pub fn curve_export(curves: &[RunCurve]) -> Result<(Vec<CurvePoint>, Vec<CurveBand>), MetricsError> {
    if curves.is_empty() {
        return Err(MetricsError::Empty("curves"));
    }
    let mut groups: BTreeMap<(String, String), BTreeMap<u64, Vec<(usize, f64)>>> = BTreeMap::new();
    for c in curves {
        let series = c.rows.iter().map(|r| (r.episode, r.eval_success)).collect();
        let seeds = groups.entry((c.env.clone(), c.variant.clone())).or_default();
        if seeds.insert(c.seed, series).is_some() {
            return Err(MetricsError::Mismatch {
                what: "seed uniqueness",
                left: format!("{}/{}", c.env, c.variant),
                right: format!("seed {} twice", c.seed),
            });
        }
    }
    let mut points = Vec::new();
    let mut bands = Vec::new();
    for ((env, variant), seeds) in &groups {
        let (&reference, first) = seeds.iter().next().expect("groups are non-empty");
        let cadence: Vec<usize> = first.iter().map(|(e, _)| *e).collect();
        for (&seed, series) in seeds {
            if series.iter().map(|(e, _)| *e).ne(cadence.iter().copied()) {
                return Err(MetricsError::Cadence {
                    env: env.clone(),
                    variant: variant.clone(),
                    seed,
                    reference,
                });
            }
            points.extend(series.iter().map(|&(episode, success)| CurvePoint {
                env: env.clone(),
                variant: variant.clone(),
                seed,
                episode,
                success,
            }));
        }
        for (k, &episode) in cadence.iter().enumerate() {
            let mut values: Vec<f64> = seeds.values().map(|s| s[k].1).collect();
            values.sort_by(f64::total_cmp);
            bands.push(CurveBand {
                env: env.clone(),
                variant: variant.clone(),
                episode,
                seeds: values.len(),
                median: quantile(&values, 0.5),
                q25: quantile(&values, 0.25),
                q75: quantile(&values, 0.75),
            });
        }
    }
    Ok((points, bands))
}
