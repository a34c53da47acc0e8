//! Simulate a scenario, train a trust model, and assess one feature vector.

use iottrust::model::{build_network, train, TrainConfig};
use iottrust::simulator::{simulate_dataset, SimConfig};

fn main() -> iottrust::Result<()> {
    let sim = SimConfig {
        seed: 7,
        samples: 2000,
        ..SimConfig::default()
    };
    let (_scenario, dataset) = simulate_dataset(&sim)?;
    let set = dataset.to_labeled()?;

    let net = build_network(&[set.arity(), 32, 32, 5], 1)?;
    let outcome = train(net, &set, &TrainConfig::default())?;
    println!(
        "trained {} epochs, final cost {:.4}",
        outcome.epochs_run,
        outcome.loss_history.last().copied().unwrap_or(f64::NAN)
    );

    let assessment = outcome
        .network
        .assess(&[0.67, 0.5, 0.8, 0.75, 0.6, 0.25, 0.9])?;
    println!(
        "{} ({:.2})",
        assessment.level.as_str(),
        assessment.confidence
    );
    Ok(())
}
