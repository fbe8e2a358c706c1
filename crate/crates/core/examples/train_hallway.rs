//! Trains one variant on the easy hallway and prints the learning curve.
//!
//! cargo run --release --example train_hallway -- [variant] [episodes] [seed]

use std::time::Instant;

use t2mac::envs::{EnvName, EnvSettings};
use t2mac::trainer::{TrainConfig, Trainer, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args.next().as_deref().unwrap_or("t2mac").parse()?;
    let episodes: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let config = TrainConfig {
        episodes,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let mut trainer = Trainer::new(&EnvSettings::preset(EnvName::HallwayEasy), variant, config, seed)?;
    println!("episode  td_loss   bce_loss  success  comm_rate  uncertainty");
    let metrics = trainer.run(|row| {
        println!(
            "{:>7}  {:>8.4}  {:>8.4}  {:>7.3}  {:>9.3}  {:>11.4}",
            row.episode, row.td_loss, row.bce_loss, row.eval_success, row.comm_rate, row.mean_uncertainty
        )
    })?;
    println!("{} rows, {} updates in {:.1?}", metrics.len(), trainer.updates(), start.elapsed());
    Ok(())
}
