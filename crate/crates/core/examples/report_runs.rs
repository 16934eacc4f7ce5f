//! Train a handful of tiny runs into a scratch directory, then aggregate
//! them into the summary table with per-experiment ranks.
//!
//! cargo run --release --example report_runs

use eppo::envs::EnvId;
use eppo::harness::{report, run_many, RunConfig, ScheduleKind};
use eppo::ppo::Algorithm;

fn main() -> anyhow::Result<()> {
    let out = std::env::temp_dir().join("eppo-report-example");
    let _ = std::fs::remove_dir_all(&out);
    let mut configs = Vec::new();
    for schedule in [ScheduleKind::Decreasing, ScheduleKind::Increasing] {
        for algorithm in Algorithm::ALL {
            for seed in [1, 2] {
                let mut cfg = RunConfig::new(algorithm, EnvId::SlipperyCar, schedule);
                cfg.n_tasks = Some(3);
                cfg.steps_per_task = 2048;
                cfg.eval_interval = 1024;
                cfg.eval_episodes = 3;
                cfg.seed = seed;
                cfg.output_dir = out.clone();
                configs.push(cfg);
            }
        }
    }
    for outcome in run_many(&configs, 2)? {
        let outcome = outcome?;
        println!(
            "{:?} {}",
            outcome.manifest.status,
            outcome.manifest.metrics_path.display()
        );
    }
    let summary_path = out.join("summary.csv");
    let summary = report(&out, &summary_path)?;
    for row in &summary.rows {
        println!(
            "{:<13} {:<10} average {:>9.3}  rank {:.2}",
            row.metric.as_str(),
            row.algorithm,
            row.average_score,
            row.average_rank
        );
    }
    println!("\n{}", std::fs::read_to_string(&summary_path)?);
    Ok(())
}
