//! Compares the analytic gradient of the full training objective with
//! central differences, parameter by parameter, on a small batch.
//!
//! cargo run --release --example gradient_check

use t2mac::envs::{EnvName, EnvSettings};
use t2mac::neural::{AgentNetwork, Parameters};
use t2mac::trainer::{batch_gradients, batch_loss, collect_episode, network_shape, RolloutOptions, TrainConfig, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let variant = Variant::T2mac;
    let mut env = EnvSettings::preset(EnvName::HallwayEasy).build(0.99)?;
    let config = TrainConfig::default();
    let shape = network_shape(env.as_ref(), variant, &config);
    let online = AgentNetwork::new(shape, 1, 3.0);
    let target = AgentNetwork::new(shape, 2, 3.0);
    let episodes: Vec<_> = (0..4)
        .map(|s| collect_episode(env.as_mut(), &online, variant, 0.5, s, &RolloutOptions::default()))
        .collect::<Result<_, _>>()?;
    let batch: Vec<_> = episodes.iter().collect();
    let settings = config.update_settings(variant);

    let (losses, grads) = batch_gradients(&online, &target, &batch, &settings)?;
    println!("td {:.5}  bce {:.5}  over {} transitions", losses.td, losses.bce, losses.transitions);

    let flat = online.to_flat();
    let analytic = grads.to_flat();
    let mut names = Vec::new();
    let mut offset = 0;
    online.visit(&mut |name, s| {
        names.push((name.to_string(), offset + s.len() / 2));
        offset += s.len();
    });
    let h = 1e-6;
    let mut probe = online.clone();
    println!("{:<24} {:>14} {:>14} {:>10}", "parameter (middle)", "analytic", "numeric", "rel err");
    for (name, idx) in names {
        let mut at = |delta: f64| -> Result<f64, Box<dyn std::error::Error>> {
            let mut p = flat.clone();
            p[idx] += delta;
            probe.load_flat(&p);
            Ok(batch_loss(&probe, &target, &batch, &settings)?.total(settings.bce_weight))
        };
        let numeric = (at(h)? - at(-h)?) / (2.0 * h);
        let scale = numeric.abs().max(analytic[idx].abs()).max(1e-12);
        println!("{name:<24} {:>14.6e} {numeric:>14.6e} {:>10.2e}", analytic[idx], (numeric - analytic[idx]).abs() / scale);
    }
    Ok(())
}
