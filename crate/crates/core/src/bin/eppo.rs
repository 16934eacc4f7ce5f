use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use eppo::envs::EnvId;
use eppo::harness::{
    self, kappa_sweep, selection_table_csv, training_runner, HarnessError, Manifest, RunConfig,
    RunStatus, ScheduleKind,
};
use eppo::ppo::Algorithm;
use eppo::verify::{self, Fault};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "eppo",
    version,
    about = "Evidential PPO experiments on non-stationary control tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per (algorithm, seed) and write metrics and manifests.
    Train(TrainArgs),
    /// Grid-search the confidence radius on the sweep seeds.
    Sweep(SweepArgs),
    /// Summarize every run under a directory into one CSV table.
    Report(ReportArgs),
    /// Run the oracle and gradient self-checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Overrides {
    /// Run config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for run artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Algorithms, comma separated.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<Algorithm>,
    #[arg(long)]
    env: Option<EnvId>,
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Overrides,
    /// Seeds, comma separated; overrides the config seed.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Re-run the config recorded in a manifest from the start.
    #[arg(long, conflicts_with = "config")]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Overrides,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory containing run folders.
    runs: PathBuf,
    /// Summary CSV path [default: <RUNS>/summary.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Only run checks whose name contains this text.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long, hide = true)]
    inject_fault: Option<Fault>,
}

fn load_base(common: &Overrides) -> Result<RunConfig> {
    let path = common.config.as_ref().context("--config is required")?;
    if !path.exists() {
        bail!("config file not found: {}", path.display());
    }
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(env) = common.env {
        cfg.env = env;
    }
    if let Some(schedule) = common.schedule {
        cfg.schedule = schedule;
    }
    Ok(cfg)
}

fn train(args: TrainArgs) -> Result<ExitCode> {
    let mut base = match &args.resume {
        Some(manifest) => {
            let m = Manifest::load(manifest)?;
            println!(
                "restarting {} from its recorded config",
                m.config.run_name()
            );
            m.config
        }
        None => load_base(&args.common)?,
    };
    if let Some(k) = args.kappa {
        base.kappa = Some(k);
    }
    let algorithms = if args.common.algo.is_empty() {
        vec![base.algorithm]
    } else {
        args.common.algo.clone()
    };
    let seeds = if args.seed.is_empty() {
        vec![base.seed]
    } else {
        args.seed.clone()
    };
    let mut configs = Vec::new();
    for &algorithm in &algorithms {
        for &seed in &seeds {
            let mut cfg = base.clone();
            cfg.algorithm = algorithm;
            cfg.seed = seed;
            cfg.validate()?;
            configs.push(cfg);
        }
    }
    let outcomes = harness::run_many(&configs, args.common.parallel)?;
    let mut diverged = false;
    for (cfg, outcome) in configs.iter().zip(outcomes) {
        let outcome = outcome?;
        let m = &outcome.manifest;
        match m.status {
            RunStatus::Completed => println!(
                "{}: completed, aulc {:.3}, final {:.3} -> {}",
                cfg.run_name(),
                harness::aulc(&outcome.records)?,
                harness::final_return(&outcome.records)?,
                m.metrics_path.display()
            ),
            RunStatus::Failed => {
                diverged = true;
                println!(
                    "{}: failed ({})",
                    cfg.run_name(),
                    m.error.as_deref().unwrap_or("unknown error")
                );
            }
        }
    }
    Ok(if diverged {
        ExitCode::from(EXIT_DIVERGED)
    } else {
        ExitCode::SUCCESS
    })
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let base = load_base(&args.common)?;
    let sweep = base.sweep.clone().unwrap_or_default();
    let algorithms = if args.common.algo.is_empty() {
        vec![Algorithm::EppoCor, Algorithm::EppoInd]
    } else {
        args.common.algo.clone()
    };
    let selections = kappa_sweep(
        &base,
        &algorithms,
        &sweep,
        args.common.parallel,
        training_runner,
    )?;
    for s in &selections {
        for p in &s.points {
            println!(
                "{} {} kappa {}: mean aulc {:.3} ({} ok, {} failed)",
                s.algorithm, s.schedule, p.kappa, p.mean_aulc, p.completed, p.failed
            );
        }
        println!(
            "{} {}: selected kappa {}",
            s.algorithm, s.schedule, s.chosen
        );
    }
    std::fs::create_dir_all(&base.output_dir)
        .with_context(|| format!("creating {}", base.output_dir.display()))?;
    let table = base.output_dir.join("kappa_selection.csv");
    std::fs::write(&table, selection_table_csv(&selections))
        .with_context(|| format!("writing {}", table.display()))?;
    println!("selection table -> {}", table.display());
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let out = args.out.unwrap_or_else(|| args.runs.join("summary.csv"));
    let summary = harness::report(&args.runs, &out)?;
    for row in &summary.rows {
        println!(
            "{:<13} {:<10} score {:>10.3}  rank {:.2}  failed {}",
            row.metric.as_str(),
            row.algorithm,
            row.average_score,
            row.average_rank,
            row.failed
        );
    }
    println!("summary -> {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let results = verify::run_checks(args.filter.as_deref(), args.inject_fault);
    if results.is_empty() {
        bail!(
            "no checks match filter {:?}",
            args.filter.unwrap_or_default()
        );
    }
    let mut failed = Vec::new();
    for r in &results {
        println!("{r}");
        if !r.passed {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        println!("{} checks passed", results.len());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("failed checks: {}", failed.join(", "));
        Ok(ExitCode::from(EXIT_VERIFY))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<HarnessError>() {
                Some(HarnessError::Ppo(p)) if p.is_divergence() => EXIT_DIVERGED,
                _ => EXIT_USAGE,
            };
            ExitCode::from(code)
        }
    }
}
