//! Train on the two-joint walker while one actuator is progressively
//! paralysed and then restored, printing the return at each task end.
//!
//! cargo run --release --example paralysis_walker -- [algorithm] [steps_per_task]

use eppo::envs::EnvId;
use eppo::harness::{aulc, final_return, train, ParalysisScheme, RunConfig, ScheduleKind};
use eppo::ppo::Algorithm;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let algorithm: Algorithm = args.next().as_deref().unwrap_or("eppo-cor").parse()?;
    let steps: usize = args.next().as_deref().unwrap_or("4096").parse()?;

    let mut cfg = RunConfig::new(
        algorithm,
        EnvId::TwoJointWalker,
        ScheduleKind::Paralysis(ParalysisScheme::First),
    );
    cfg.steps_per_task = steps;
    cfg.eval_interval = 0;

    let schedule = cfg.schedule()?;
    let result = train(&cfg)?;
    for r in result
        .records
        .iter()
        .filter(|r| r.global_step as usize == (r.task_index + 1) * steps)
    {
        println!(
            "task {}  torque scales {:?}  return {:>8.3}",
            r.task_index, schedule.tasks[r.task_index].torque_scales, r.eval_return_mean
        );
    }
    println!(
        "aulc {:.3}  final return {:.3}",
        aulc(&result.records)?,
        final_return(&result.records)?
    );
    Ok(())
}
