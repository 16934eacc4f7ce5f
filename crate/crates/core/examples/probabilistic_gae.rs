//! Advantage mean, the two variance estimates, and UCB-shaped advantages on a
//! short hand-made rollout with one terminal and one time-limit boundary.
//!
//! cargo run --example probabilistic_gae

use eppo::gae::{estimate, normalize_batch, Boundary, GaeConfig, ValueSequence, VarianceVariant};

fn main() -> anyhow::Result<()> {
    let rewards = [0.1, 0.3, -0.2, 1.0, 0.5, 0.0];
    let vals = ValueSequence::new(
        vec![1.0, 1.2, 0.8, 0.4, 2.0, 1.5, 1.1],
        vec![0.5, 0.1, 0.9, 0.2, 0.0, 0.3, 0.4],
        vec![
            Boundary::Continue,
            Boundary::Continue,
            Boundary::Continue,
            Boundary::Terminated,
            Boundary::Truncated {
                mean: 1.4,
                variance: 0.6,
            },
            Boundary::Continue,
        ],
    )?;

    for variant in [
        VarianceVariant::Mean,
        VarianceVariant::Correlated,
        VarianceVariant::Independent,
    ] {
        let cfg = GaeConfig {
            gamma: 0.99,
            lambda: 0.95,
            kappa: 0.5,
            variant,
        };
        let est = estimate(&rewards, &vals, &cfg)?;
        println!("{variant:?}");
        println!("  mean     {:?}", round(&est.mean));
        println!("  variance {:?}", round(&est.variance));
        println!("  ucb      {:?}", round(&est.ucb));
        println!("  batch    {:?}", round(&normalize_batch(&est.ucb)?));
    }
    Ok(())
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
