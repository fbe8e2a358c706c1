use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use t2mac::config::RunConfig;
use t2mac::envs::EnvName;
use t2mac::metrics::{
    curve_export, efficiency_report, find_metric_files, read_rows_from_path, write_rows, write_rows_to_path, RunCurve,
    SummaryRow,
};
use t2mac::run::{evaluate_checkpoint, run, RunError};
use t2mac::trainer::Variant;

#[derive(Parser)]
#[command(name = "t2mac", version, about = "Selective evidential communication for cooperative agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write metrics, checkpoints and a summary.
    Run {
        /// TOML config; flags below override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        variant: Option<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Any config key, e.g. `--set learning_rate=0.001`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Greedy evaluation of a checkpoint under a (usually echoed) config.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Seed whose evaluation episodes are replayed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the config's eval_episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Communication-efficiency report from two summary.csv files.
    Report {
        #[arg(long)]
        comm: PathBuf,
        #[arg(long)]
        nocomm: PathBuf,
    },
    /// Long-format success curves and seed bands from metrics.csv files or run directories.
    ExportCurves {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory receiving curves_long.csv and curves_bands.csv.
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e.exit_code() {
            1 => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn resolve_run_config(
    config: Option<PathBuf>,
    env: Option<String>,
    variant: Option<String>,
    seeds: Option<Vec<u64>>,
    episodes: Option<usize>,
    output_dir: Option<PathBuf>,
    overrides: Vec<String>,
) -> Result<RunConfig, Failure> {
    let mut resolved = match (&config, &env) {
        (Some(path), _) => RunConfig::load(path).map_err(config_err)?,
        (None, Some(name)) => {
            let env: EnvName = toml::Value::String(name.clone()).try_into().map_err(|_| {
                Failure::Config(format!("invalid value for `env`: unknown environment {name:?}"))
            })?;
            RunConfig::new(env)
        }
        (None, None) => return Err(Failure::Config("missing required key `env` (pass --config or --env)".into())),
    };
    let mut sets = Vec::new();
    if let Some(env) = env {
        sets.push(format!("env={env:?}"));
    }
    if let Some(v) = variant {
        v.parse::<Variant>().map_err(|e| Failure::Config(format!("invalid value for `variant`: {e}")))?;
        sets.push(format!("variant={v:?}"));
    }
    if let Some(s) = seeds {
        sets.push(format!("seeds={s:?}"));
    }
    if let Some(e) = episodes {
        sets.push(format!("episodes={e}"));
    }
    if let Some(dir) = output_dir {
        sets.push(format!("output_dir={:?}", dir.to_string_lossy()));
    }
    sets.extend(overrides);
    for assignment in &sets {
        resolved.apply_override(assignment).map_err(config_err)?;
    }
    Ok(resolved)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            env,
            variant,
            seeds,
            episodes,
            output_dir,
            overrides,
        } => {
            let config = resolve_run_config(config, env, variant, seeds, episodes, output_dir, overrides)?;
            let artifacts = run(&config)?;
            write_rows(&artifacts.summary, std::io::stdout().lock()).map_err(runtime_err)?;
            eprintln!("results in {}", artifacts.variant_dir.display());
        }
        Command::Eval {
            config,
            checkpoint,
            seed,
            episodes,
        } => {
            let config = RunConfig::load(&config).map_err(config_err)?;
            let count = episodes.unwrap_or(config.train.eval_episodes);
            let summary = evaluate_checkpoint(&config, &checkpoint, seed, count)?;
            println!("episodes,success_rate,mean_return,comm_rate,mean_uncertainty");
            println!(
                "{},{},{},{},{}",
                summary.episodes,
                summary.success_rate,
                summary.mean_return,
                summary.comm_rate(),
                summary.mean_uncertainty
            );
        }
        Command::Report { comm, nocomm } => {
            let comm: Vec<SummaryRow> = read_rows_from_path(&comm).map_err(config_err)?;
            let nocomm: Vec<SummaryRow> = read_rows_from_path(&nocomm).map_err(config_err)?;
            let report = efficiency_report(&comm, &nocomm).map_err(config_err)?;
            if report.zero_baseline {
                eprintln!("warning: non-communicating success is zero; improvement uses the 1e-6 floor");
            }
            write_rows(&[report], std::io::stdout().lock()).map_err(runtime_err)?;
        }
        Command::ExportCurves { inputs, out } => {
            let mut files = Vec::new();
            for input in &inputs {
                files.extend(find_metric_files(input).map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?);
            }
            files.sort();
            files.dedup();
            let curves = files
                .iter()
                .map(|f| RunCurve::from_path(f))
                .collect::<Result<Vec<_>, _>>()
                .map_err(config_err)?;
            let (points, bands) = curve_export(&curves).map_err(config_err)?;
            std::fs::create_dir_all(&out).map_err(runtime_err)?;
            write_rows_to_path(&points, &out.join("curves_long.csv")).map_err(runtime_err)?;
            write_rows_to_path(&bands, &out.join("curves_bands.csv")).map_err(runtime_err)?;
            eprintln!("{} curves, {} points -> {}", curves.len(), points.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
