//! A complete small experiment through the library: several seeds of two
//! variants, written to disk, then summarized and turned into curve bands.
//!
//! cargo run --release --example experiment -- [output_dir]

use std::path::PathBuf;

use t2mac::config::RunConfig;
use t2mac::envs::EnvName;
use t2mac::metrics::{curve_export, efficiency_report, find_metric_files, RunCurve};
use t2mac::run::run;
use t2mac::trainer::Variant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "runs/example".into()).into();
    let mut summaries = Vec::new();
    for variant in [Variant::Fullcomm, Variant::Nocomm] {
        let mut config = RunConfig::new(EnvName::HallwayEasy);
        config.variant = variant;
        config.seeds = vec![0, 1, 2];
        config.output_dir = out.clone();
        config.train.episodes = 300;
        config.train.eval_interval = 50;
        config.train.eval_episodes = 16;
        let artifacts = run(&config)?;
        println!("{variant}: {}", artifacts.variant_dir.display());
        summaries.push(artifacts.summary);
    }
    let report = efficiency_report(&summaries[0], &summaries[1])?;
    println!(
        "fullcomm {:.3} vs nocomm {:.3}, improvement {:.3}, efficiency {:?}",
        report.comm_success, report.nocomm_success, report.improvement, report.efficiency
    );

    let curves = find_metric_files(&out)?
        .iter()
        .map(|p| RunCurve::from_path(p))
        .collect::<Result<Vec<_>, _>>()?;
    let (_, bands) = curve_export(&curves)?;
    for b in bands {
        println!("{:<9} ep {:>4}  median {:.3}  [{:.3}, {:.3}]", b.variant, b.episode, b.median, b.q25, b.q75);
    }
    Ok(())
}
