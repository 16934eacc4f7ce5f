//! Train one agent on SlipperyCar with a short decreasing-friction schedule
//! and print its learning curve.
//!
//! cargo run --release --example train_slippery -- [algorithm] [seed]

use eppo::envs::EnvId;
use eppo::harness::{aulc, final_return, random_policy_baseline, train, RunConfig, ScheduleKind};
use eppo::ppo::Algorithm;
use std::time::Instant;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let algorithm: Algorithm = args.next().as_deref().unwrap_or("eppo-ind").parse()?;
    let seed: u64 = args.next().as_deref().unwrap_or("1").parse()?;

    let mut cfg = RunConfig::new(algorithm, EnvId::SlipperyCar, ScheduleKind::Decreasing);
    cfg.n_tasks = Some(5);
    cfg.steps_per_task = 10_000;
    cfg.eval_interval = 2_000;
    cfg.seed = seed;

    let started = Instant::now();
    let result = train(&cfg)?;
    for r in &result.records {
        println!(
            "step {:>6}  task {}  return {:>8.3} ± {:.3}",
            r.global_step, r.task_index, r.eval_return_mean, r.eval_return_se
        );
    }
    let schedule = cfg.schedule()?;
    let (random, random_se) = random_policy_baseline(cfg.env, &schedule.tasks[0], seed, 10)?;
    println!("status        {:?}", result.status);
    println!("aulc          {:.3}", aulc(&result.records)?);
    println!("final return  {:.3}", final_return(&result.records)?);
    println!("random policy {random:.3} ± {random_se:.3} (first task)");
    println!("wall time     {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
