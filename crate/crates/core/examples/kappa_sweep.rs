//! Small κ grid search for both uncertainty-aware variants, printing the
//! per-κ learning-curve areas and the resulting selection table.
//!
//! cargo run --release --example kappa_sweep

use eppo::envs::EnvId;
use eppo::harness::{
    kappa_sweep, selection_table_csv, train, RunConfig, RunStatus, ScheduleKind, SweepConfig,
};
use eppo::ppo::Algorithm;

fn main() -> anyhow::Result<()> {
    let mut base = RunConfig::new(
        Algorithm::EppoInd,
        EnvId::SlipperyCar,
        ScheduleKind::Increasing,
    );
    base.n_tasks = Some(3);
    base.steps_per_task = 4096;
    base.eval_interval = 2048;
    base.eval_episodes = 5;

    let sweep = SweepConfig {
        seeds: vec![1001, 1002],
        ..SweepConfig::default()
    };
    // runs in memory; `eppo sweep` uses the same search but writes every run to disk
    let selections = kappa_sweep(
        &base,
        &[Algorithm::EppoCor, Algorithm::EppoInd],
        &sweep,
        std::thread::available_parallelism().map_or(1, |n| n.get()),
        |cfg| {
            let r = train(cfg)?;
            Ok((r.status == RunStatus::Completed).then_some(r.records))
        },
    )?;
    for s in &selections {
        for p in &s.points {
            println!(
                "{:<9} kappa {:<5} mean aulc {:.3}",
                s.algorithm.as_str(),
                p.kappa,
                p.mean_aulc
            );
        }
    }
    print!("\n{}", selection_table_csv(&selections));
    Ok(())
}
