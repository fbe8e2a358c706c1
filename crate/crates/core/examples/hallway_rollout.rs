//! One exploratory episode of an untrained network on the hard hallway,
//! printed step by step: positions, gates, fused uncertainty and actions.
//!
//! cargo run --example hallway_rollout -- [variant] [seed]

use t2mac::envs::{EnvName, EnvSettings};
use t2mac::neural::AgentNetwork;
use t2mac::trainer::{collect_episode, network_shape, RolloutOptions, TrainConfig, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args.next().as_deref().unwrap_or("t2mac").parse()?;
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let mut env = EnvSettings::preset(EnvName::HallwayHard).build(0.99)?;
    let config = TrainConfig::default();
    let net = AgentNetwork::new(network_shape(env.as_ref(), variant, &config), seed, config.temperature_init);
    let ep = collect_episode(env.as_mut(), &net, variant, 0.2, seed, &RolloutOptions::default())?;

    for (t, step) in ep.steps.iter().enumerate() {
        let actions: Vec<usize> = step.agents.iter().map(|a| a.action).collect();
        let u: Vec<String> = step.agents.iter().map(|a| format!("{:.2}", a.uncertainty)).collect();
        let links: Vec<String> = step
            .gates
            .indexed_iter()
            .filter(|(_, open)| **open)
            .map(|((i, j), _)| format!("{i}->{j}"))
            .collect();
        let positive = step.labels.iter().filter(|l| l.label == 1).count();
        println!(
            "t={t:>2} actions {actions:?} u [{}] sent [{}] useful links {positive}/{} reward {}",
            u.join(" "),
            links.join(" "),
            step.labels.len(),
            step.reward
        );
    }
    let stats = ep.comm_stats();
    println!("success {}  comm rate {:.3}  mean u {:.3}", ep.success, stats.rate(), ep.mean_uncertainty());
    Ok(())
}
