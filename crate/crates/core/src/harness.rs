//! Experiment orchestration: task schedules, single runs with periodic
//! evaluation, learning-curve metrics, multi-run aggregation and the κ sweep.

use crate::envs::{DynamicsParams, EnvError, EnvId, Environment, MAX_FRICTION, MIN_FRICTION};
use crate::evidential::HyperpriorConfig;
use crate::ppo::{
    compute_targets_and_advantages, update, Agent, Algorithm, Collector, Objective, PpoError,
    RolloutBuffer, TrainConfig,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

pub const PARALYSIS_PATTERN: [f64; 9] = [1.0, 0.75, 0.5, 0.25, 0.0, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_SLIPPERY_TASKS: usize = 15;
/// Offset between the training seed and the evaluation environment's seed.
pub const EVAL_SEED_OFFSET: u64 = 100;
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const DEFAULT_SWEEP_SEEDS: [u64; 3] = [1001, 1002, 1003];
pub const DEFAULT_COR_GRID: [f64; 3] = [0.01, 0.1, 0.25];
pub const DEFAULT_IND_GRID: [f64; 3] = [0.01, 0.05, 0.1];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("unknown schedule `{0}`")]
    UnknownSchedule(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("no metrics records")]
    EmptyRecords,
    #[error("no record for task {0}")]
    MissingTask(usize),
    #[error("no end-of-task record for task {task} at step {step}")]
    MissingEndOfTask { task: usize, step: u64 },
    #[error("every sweep run failed")]
    AllSweepRunsFailed,
    #[error("no runs found under {0}")]
    NoRuns(PathBuf),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl HarnessError {
    fn config(key: &str, message: impl Into<String>) -> Self {
        HarnessError::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Which actuators a paralysis schedule weakens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParalysisScheme {
    First,
    Second,
    All,
}

impl ParalysisScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParalysisScheme::First => "first",
            ParalysisScheme::Second => "second",
            ParalysisScheme::All => "all",
        }
    }

    pub fn actuators(&self, act_dim: usize) -> Option<Vec<usize>> {
        match self {
            ParalysisScheme::First => Some(vec![0]),
            ParalysisScheme::Second if act_dim >= 2 => Some(vec![1]),
            ParalysisScheme::Second => None,
            ParalysisScheme::All => Some((0..act_dim).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScheduleKind {
    Decreasing,
    Increasing,
    Paralysis(ParalysisScheme),
}

impl ScheduleKind {
    /// Experiment family, as in the κ selection table.
    pub fn family(&self) -> &'static str {
        match self {
            ScheduleKind::Decreasing | ScheduleKind::Increasing => "slippery",
            ScheduleKind::Paralysis(_) => "paralysis",
        }
    }

    pub fn strategy(&self) -> &'static str {
        match self {
            ScheduleKind::Decreasing => "decreasing",
            ScheduleKind::Increasing => "increasing",
            ScheduleKind::Paralysis(s) => s.as_str(),
        }
    }

    pub fn default_tasks(&self) -> usize {
        match self {
            ScheduleKind::Paralysis(_) => PARALYSIS_PATTERN.len(),
            _ => DEFAULT_SLIPPERY_TASKS,
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Paralysis(s) => write!(f, "paralysis:{}", s.as_str()),
            other => f.write_str(other.strategy()),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decreasing" => Ok(ScheduleKind::Decreasing),
            "increasing" => Ok(ScheduleKind::Increasing),
            "paralysis:first" => Ok(ScheduleKind::Paralysis(ParalysisScheme::First)),
            "paralysis:second" => Ok(ScheduleKind::Paralysis(ParalysisScheme::Second)),
            "paralysis:all" => Ok(ScheduleKind::Paralysis(ParalysisScheme::All)),
            other => Err(HarnessError::UnknownSchedule(other.to_string())),
        }
    }
}

impl TryFrom<String> for ScheduleKind {
    type Error = HarnessError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ScheduleKind> for String {
    fn from(k: ScheduleKind) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSchedule {
    pub tasks: Vec<DynamicsParams>,
    pub steps_per_task: usize,
}

impl TaskSchedule {
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn total_steps(&self) -> usize {
        self.tasks.len() * self.steps_per_task
    }

    /// Global steps at which the dynamics change.
    pub fn boundaries(&self) -> Vec<usize> {
        (1..self.tasks.len())
            .map(|k| k * self.steps_per_task)
            .collect()
    }
}

pub fn build_schedule(
    kind: ScheduleKind,
    env: EnvId,
    n_tasks: usize,
    steps_per_task: usize,
) -> Result<TaskSchedule, HarnessError> {
    if n_tasks == 0 {
        return Err(HarnessError::config("n_tasks", "must be positive"));
    }
    if steps_per_task == 0 {
        return Err(HarnessError::config("steps_per_task", "must be positive"));
    }
    let act_dim = env.act_dim();
    let tasks = match kind {
        ScheduleKind::Decreasing | ScheduleKind::Increasing => {
            let step = if n_tasks > 1 {
                (MAX_FRICTION - MIN_FRICTION) / (n_tasks - 1) as f64
            } else {
                0.0
            };
            (0..n_tasks)
                .map(|k| {
                    let friction = match kind {
                        ScheduleKind::Decreasing => MAX_FRICTION - k as f64 * step,
                        _ => MIN_FRICTION + k as f64 * step,
                    };
                    DynamicsParams {
                        friction,
                        torque_scales: vec![1.0; act_dim],
                    }
                })
                .collect()
        }
        ScheduleKind::Paralysis(scheme) => {
            if n_tasks != PARALYSIS_PATTERN.len() && n_tasks != 1 {
                return Err(HarnessError::config(
                    "n_tasks",
                    format!("paralysis schedules have {} tasks", PARALYSIS_PATTERN.len()),
                ));
            }
            let actuators = scheme
                .actuators(act_dim)
                .ok_or_else(|| HarnessError::UnknownSchedule(format!("{kind} for {env}")))?;
            PARALYSIS_PATTERN[..n_tasks]
                .iter()
                .map(|&scale| {
                    let mut torque_scales = vec![1.0; act_dim];
                    for &a in &actuators {
                        torque_scales[a] = scale;
                    }
                    DynamicsParams {
                        friction: 1.0,
                        torque_scales,
                    }
                })
                .collect()
        }
    };
    Ok(TaskSchedule {
        tasks,
        steps_per_task,
    })
}

/// κ grid search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub seeds: Vec<u64>,
    pub cor_grid: Vec<f64>,
    pub ind_grid: Vec<f64>,
    /// Schedules to sweep; empty means only the run's own schedule.
    pub schedules: Vec<ScheduleKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seeds: DEFAULT_SWEEP_SEEDS.to_vec(),
            cor_grid: DEFAULT_COR_GRID.to_vec(),
            ind_grid: DEFAULT_IND_GRID.to_vec(),
            schedules: Vec::new(),
        }
    }
}

impl SweepConfig {
    pub fn grid(&self, algorithm: Algorithm) -> &[f64] {
        match algorithm {
            Algorithm::EppoCor => &self.cor_grid,
            Algorithm::EppoInd => &self.ind_grid,
            _ => &[],
        }
    }
}

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub env: EnvId,
    pub schedule: ScheduleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tasks: Option<usize>,
    #[serde(default = "default_steps_per_task")]
    pub steps_per_task: usize,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Confidence radius; defaults per algorithm when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub hyperprior: HyperpriorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_steps_per_task() -> usize {
    20_000
}
fn default_eval_interval() -> usize {
    2_000
}
fn default_eval_episodes() -> usize {
    10
}
fn default_seed() -> u64 {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// κ used when the config leaves it unset.
pub fn default_kappa(algorithm: Algorithm) -> f64 {
    match algorithm {
        Algorithm::EppoCor => 0.1,
        Algorithm::EppoInd => 0.05,
        _ => 0.0,
    }
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, env: EnvId, schedule: ScheduleKind) -> Self {
        Self {
            algorithm,
            env,
            schedule,
            n_tasks: None,
            steps_per_task: default_steps_per_task(),
            eval_interval: default_eval_interval(),
            eval_episodes: default_eval_episodes(),
            seed: default_seed(),
            kappa: None,
            output_dir: default_output_dir(),
            train: TrainConfig::default(),
            hyperprior: HyperpriorConfig::default(),
            sweep: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Parse {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
            .unwrap_or_else(|| self.schedule.default_tasks())
    }

    pub fn effective_kappa(&self) -> f64 {
        if !self.algorithm.uses_kappa() {
            return 0.0;
        }
        self.kappa.unwrap_or_else(|| default_kappa(self.algorithm))
    }

    pub fn objective(&self) -> Objective {
        Objective {
            algorithm: self.algorithm,
            kappa: self.effective_kappa(),
            hyperprior: self.hyperprior,
        }
    }

    pub fn schedule(&self) -> Result<TaskSchedule, HarnessError> {
        build_schedule(self.schedule, self.env, self.n_tasks(), self.steps_per_task)
    }

    /// Experiment label used to group runs: `<env>/<schedule>`.
    pub fn experiment(&self) -> String {
        format!("{}/{}", self.env, self.schedule)
    }

    /// Directory name for this run's artifacts.
    pub fn run_name(&self) -> String {
        let mut name = format!(
            "{}_{}_{}",
            self.algorithm,
            self.env,
            self.schedule.to_string().replace(':', "-")
        );
        if self.algorithm.uses_kappa() {
            name.push_str(&format!("_k{}", self.effective_kappa()));
        }
        name.push_str(&format!("_seed{}", self.seed));
        name
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.run_name())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.train.validate().map_err(|e| match e {
            PpoError::InvalidConfig(msg) => match msg.split_once(':') {
                Some((key, rest)) => HarnessError::config(key, rest.trim()),
                None => HarnessError::config("train", msg),
            },
            other => HarnessError::Ppo(other),
        })?;
        self.hyperprior
            .validate()
            .map_err(|e| HarnessError::config("hyperprior", e.to_string()))?;
        if let Some(k) = self.kappa {
            if !(k.is_finite() && k >= 0.0) {
                return Err(HarnessError::config(
                    "kappa",
                    "must be finite and non-negative",
                ));
            }
        }
        if self.eval_episodes == 0 {
            return Err(HarnessError::config("eval_episodes", "must be positive"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.seeds.is_empty() {
                return Err(HarnessError::config("sweep.seeds", "must not be empty"));
            }
            if sweep
                .cor_grid
                .iter()
                .chain(&sweep.ind_grid)
                .any(|k| !(k.is_finite() && *k >= 0.0))
            {
                return Err(HarnessError::config(
                    "sweep.cor_grid",
                    "κ values must be non-negative",
                ));
            }
        }
        self.schedule().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub global_step: u64,
    pub task_index: usize,
    pub eval_return_mean: f64,
    pub eval_return_se: f64,
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    if records.is_empty() {
        w.write_record([
            "seed",
            "global_step",
            "task_index",
            "eval_return_mean",
            "eval_return_se",
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard error; zero for fewer than two values.
pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

/// Area under the learning curve: mean evaluation return over all records.
pub fn aulc(records: &[MetricsRecord]) -> Result<f64, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyRecords);
    }
    let mut returns: Vec<f64> = records.iter().map(|r| r.eval_return_mean).collect();
    // summation order fixed so the result does not depend on row order
    returns.sort_by(f64::total_cmp);
    Ok(mean(&returns))
}

/// Mean over tasks of each task's last evaluation.
pub fn final_return(records: &[MetricsRecord]) -> Result<f64, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyRecords);
    }
    let mut last: BTreeMap<usize, &MetricsRecord> = BTreeMap::new();
    for r in records {
        let slot = last.entry(r.task_index).or_insert(r);
        if r.global_step > slot.global_step {
            *slot = r;
        }
    }
    let n_tasks = last.keys().next_back().map_or(0, |k| k + 1);
    if let Some(k) = (0..n_tasks).find(|k| !last.contains_key(k)) {
        return Err(HarnessError::MissingTask(k));
    }
    let returns: Vec<f64> = last.values().map(|r| r.eval_return_mean).collect();
    Ok(mean(&returns))
}

/// Like [`final_return`] but requires an end-of-task record for every task of
/// `schedule`.
pub fn final_return_for_schedule(
    records: &[MetricsRecord],
    n_tasks: usize,
    steps_per_task: usize,
) -> Result<f64, HarnessError> {
    let mut returns = Vec::with_capacity(n_tasks);
    for task in 0..n_tasks {
        let step = ((task + 1) * steps_per_task) as u64;
        let r = records
            .iter()
            .find(|r| r.task_index == task && r.global_step == step)
            .ok_or(HarnessError::MissingEndOfTask { task, step })?;
        returns.push(r.eval_return_mean);
    }
    Ok(mean(&returns))
}

/// Deterministic-policy evaluation on a dedicated environment instance.
/// Episode seeds derive from `seed + EVAL_SEED_OFFSET` and are the same at
/// every evaluation.
pub fn evaluate(
    agent: &Agent,
    env: &mut dyn Environment,
    dynamics: &DynamicsParams,
    seed: u64,
    episodes: usize,
) -> Result<(f64, f64), PpoError> {
    env.set_dynamics(dynamics.clone())?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed.wrapping_add(EVAL_SEED_OFFSET));
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(seeds.next_u64());
        let mut total = 0.0;
        loop {
            let action = agent.act_deterministic(&obs)?;
            let step = env.step(&action)?;
            total += step.reward;
            if step.terminated || step.truncated {
                break;
            }
            obs = step.observation;
        }
        returns.push(total);
    }
    Ok((mean(&returns), standard_error(&returns)))
}

/// Returns of a uniform random policy on the evaluation episodes.
pub fn random_policy_baseline(
    env_id: EnvId,
    dynamics: &DynamicsParams,
    seed: u64,
    episodes: usize,
) -> Result<(f64, f64), EnvError> {
    let mut env = env_id.make();
    env.set_dynamics(dynamics.clone())?;
    let mut seeds = ChaCha8Rng::seed_from_u64(seed.wrapping_add(EVAL_SEED_OFFSET));
    let mut actions = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        env.reset(seeds.next_u64());
        let mut total = 0.0;
        loop {
            let a: Vec<f64> = (0..env_id.act_dim())
                .map(|_| actions.random_range(-1.0..=1.0))
                .collect();
            let step = env.step(&a)?;
            total += step.reward;
            if step.terminated || step.truncated {
                break;
            }
        }
        returns.push(total);
    }
    Ok((mean(&returns), standard_error(&returns)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<MetricsRecord>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub agent: Agent,
    pub updates: usize,
}

/// Trains through the whole schedule without touching the filesystem.
pub fn train(config: &RunConfig) -> Result<RunResult, HarnessError> {
    config.validate()?;
    let schedule = config.schedule()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut env = config.env.make();
    let mut eval_env = config.env.make();
    env.set_dynamics(schedule.tasks[0].clone())?;
    let mut agent = Agent::new(
        config.env.obs_dim(),
        config.env.act_dim(),
        &config.train,
        config.objective(),
        &mut rng,
    )?;

    let mut records = Vec::new();
    let mut record = |agent: &Agent, eval_env: &mut dyn Environment, step: usize, task: usize| {
        let (m, se) = evaluate(
            agent,
            eval_env,
            &schedule.tasks[task],
            config.seed,
            config.eval_episodes,
        )?;
        records.push(MetricsRecord {
            seed: config.seed,
            global_step: step as u64,
            task_index: task,
            eval_return_mean: m,
            eval_return_se: se,
        });
        Ok::<(), PpoError>(())
    };

    let total = schedule.total_steps();
    let spt = schedule.steps_per_task;
    let mut global = 0usize;
    let mut updates = 0usize;
    let mut buffer = RolloutBuffer::new(config.env.obs_dim(), config.env.act_dim());
    let mut collector = Collector::start(env.as_mut(), &mut rng);

    let outcome: Result<(), PpoError> = (|| {
        record(&agent, eval_env.as_mut(), 0, 0)?;
        while global < total {
            let steps = config.train.horizon.min(total - global);
            collector.collect(
                &mut agent,
                env.as_mut(),
                &mut buffer,
                steps,
                &mut rng,
                |agent, env| {
                    global += 1;
                    if global.is_multiple_of(spt) {
                        let task = global / spt - 1;
                        record(agent, eval_env.as_mut(), global, task)?;
                        if global < total {
                            env.set_dynamics(schedule.tasks[task + 1].clone())?;
                            record(agent, eval_env.as_mut(), global, task + 1)?;
                        }
                    } else if config.eval_interval > 0
                        && global.is_multiple_of(config.eval_interval)
                    {
                        record(agent, eval_env.as_mut(), global, global / spt)?;
                    }
                    Ok(())
                },
            )?;
            if buffer.len() >= 2 {
                compute_targets_and_advantages(&mut buffer, &config.train, &agent.objective)?;
                update(&buffer, &mut agent, &config.train, &mut rng)?;
                updates += 1;
            }
        }
        Ok(())
    })();

    match outcome {
        Ok(()) => Ok(RunResult {
            records,
            status: RunStatus::Completed,
            error: None,
            agent,
            updates,
        }),
        Err(e) if e.is_divergence() => Ok(RunResult {
            records,
            status: RunStatus::Failed,
            error: Some(e.to_string()),
            agent,
            updates,
        }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: RunStatus,
    pub seed: u64,
    pub experiment: String,
    pub wall_time_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics_path: PathBuf,
    pub manifest_path: PathBuf,
    pub config: RunConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub records: Vec<MetricsRecord>,
}

/// Trains and writes `metrics.csv` plus `manifest.toml` into the run
/// directory. Diverged runs are returned with a failed status.
pub fn run(config: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let started = Instant::now();
    let result = train(config)?;
    let dir = config.run_dir();
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let metrics_path = dir.join(METRICS_FILE);
    let manifest_path = dir.join(MANIFEST_FILE);
    write_metrics(&metrics_path, &result.records)?;
    let manifest = Manifest {
        status: result.status,
        seed: config.seed,
        experiment: config.experiment(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        error: result.error,
        metrics_path,
        manifest_path: manifest_path.clone(),
        config: config.clone(),
    };
    let text = toml::to_string(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(|e| HarnessError::io(&manifest_path, e))?;
    Ok(RunOutcome {
        manifest,
        records: result.records,
    })
}

/// Runs `jobs` on a pool of `parallel` workers, preserving input order.
pub fn run_pool<T, R, F>(jobs: &[T], parallel: usize, f: F) -> Result<Vec<R>, HarnessError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    Ok(pool.install(|| jobs.par_iter().map(&f).collect()))
}

pub fn run_many(
    configs: &[RunConfig],
    parallel: usize,
) -> Result<Vec<Result<RunOutcome, HarnessError>>, HarnessError> {
    run_pool(configs, parallel, run)
}

/// Per-run scores used for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub algorithm: String,
    pub experiment: String,
    pub seed: u64,
    /// `None` for failed runs.
    pub scores: Option<(f64, f64)>,
}

impl RunSummary {
    pub fn from_records(
        algorithm: &str,
        experiment: &str,
        seed: u64,
        records: &[MetricsRecord],
    ) -> Result<Self, HarnessError> {
        Ok(Self {
            algorithm: algorithm.to_string(),
            experiment: experiment.to_string(),
            seed,
            scores: Some((aulc(records)?, final_return(records)?)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Aulc,
    FinalReturn,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Aulc => "aulc",
            Metric::FinalReturn => "final_return",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellStat {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmRow {
    pub metric: Metric,
    pub algorithm: String,
    /// Keyed by experiment.
    pub cells: BTreeMap<String, CellStat>,
    /// Per-experiment rank, 1 = best.
    pub ranks: BTreeMap<String, f64>,
    pub average_score: f64,
    pub average_rank: f64,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub experiments: Vec<String>,
    pub rows: Vec<AlgorithmRow>,
}

impl Summary {
    pub fn row(&self, metric: Metric, algorithm: &str) -> Option<&AlgorithmRow> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.algorithm == algorithm)
    }

    /// One row per (metric, algorithm); a mean and se column per experiment.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["metric".to_string(), "algorithm".to_string()];
        for e in &self.experiments {
            header.push(format!("{e}:mean"));
            header.push(format!("{e}:se"));
            header.push(format!("{e}:rank"));
        }
        header.extend(["average_score", "average_rank", "failed_runs"].map(String::from));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.metric.as_str().to_string(), row.algorithm.clone()];
            for e in &self.experiments {
                match (row.cells.get(e), row.ranks.get(e)) {
                    (Some(c), Some(rank)) => {
                        rec.extend([c.mean.to_string(), c.se.to_string(), rank.to_string()])
                    }
                    _ => rec.extend([String::new(), String::new(), String::new()]),
                }
            }
            rec.push(row.average_score.to_string());
            rec.push(row.average_rank.to_string());
            rec.push(row.failed.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Ranks with 1 for the highest value; ties share the mean of their ranks.
pub fn rank_descending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Mean and se over seeds per (algorithm, experiment), then average score
/// and average rank per algorithm. Failed runs are excluded and counted.
pub fn aggregate(runs: &[RunSummary]) -> Summary {
    let experiments: BTreeSet<String> = runs.iter().map(|r| r.experiment.clone()).collect();
    let algorithms: BTreeSet<String> = runs.iter().map(|r| r.algorithm.clone()).collect();
    let mut rows = Vec::new();
    for metric in [Metric::Aulc, Metric::FinalReturn] {
        let mut cells: BTreeMap<(String, String), CellStat> = BTreeMap::new();
        for alg in &algorithms {
            for exp in &experiments {
                let scores: Vec<f64> = runs
                    .iter()
                    .filter(|r| &r.algorithm == alg && &r.experiment == exp)
                    .filter_map(|r| r.scores)
                    .map(|(a, f)| if metric == Metric::Aulc { a } else { f })
                    .collect();
                if !scores.is_empty() {
                    cells.insert(
                        (alg.clone(), exp.clone()),
                        CellStat {
                            mean: mean(&scores),
                            se: standard_error(&scores),
                            n: scores.len(),
                        },
                    );
                }
            }
        }
        let mut ranks: BTreeMap<(String, String), f64> = BTreeMap::new();
        for exp in &experiments {
            let present: Vec<(&String, f64)> = algorithms
                .iter()
                .filter_map(|a| cells.get(&(a.clone(), exp.clone())).map(|c| (a, c.mean)))
                .collect();
            let r = rank_descending(&present.iter().map(|p| p.1).collect::<Vec<_>>());
            for ((alg, _), rank) in present.iter().zip(r) {
                ranks.insert(((*alg).clone(), exp.clone()), rank);
            }
        }
        for alg in &algorithms {
            let row_cells: BTreeMap<String, CellStat> = cells
                .iter()
                .filter(|((a, _), _)| a == alg)
                .map(|((_, e), c)| (e.clone(), c.clone()))
                .collect();
            let row_ranks: BTreeMap<String, f64> = ranks
                .iter()
                .filter(|((a, _), _)| a == alg)
                .map(|((_, e), r)| (e.clone(), *r))
                .collect();
            let means: Vec<f64> = row_cells.values().map(|c| c.mean).collect();
            let rank_values: Vec<f64> = row_ranks.values().copied().collect();
            rows.push(AlgorithmRow {
                metric,
                algorithm: alg.clone(),
                average_score: if means.is_empty() {
                    f64::NAN
                } else {
                    mean(&means)
                },
                average_rank: if rank_values.is_empty() {
                    f64::NAN
                } else {
                    mean(&rank_values)
                },
                cells: row_cells,
                ranks: row_ranks,
                failed: runs
                    .iter()
                    .filter(|r| &r.algorithm == alg && r.scores.is_none())
                    .count(),
            });
        }
    }
    Summary {
        experiments: experiments.into_iter().collect(),
        rows,
    }
}

/// Finds every run manifest below `dir` and scores its metrics file.
pub fn collect_runs(dir: &Path) -> Result<Vec<RunSummary>, HarnessError> {
    let mut manifests = Vec::new();
    find_manifests(dir, &mut manifests)?;
    manifests.sort();
    if manifests.is_empty() {
        return Err(HarnessError::NoRuns(dir.to_path_buf()));
    }
    let mut runs = Vec::with_capacity(manifests.len());
    for path in manifests {
        let manifest = Manifest::load(&path)?;
        let cfg = &manifest.config;
        let scores = match manifest.status {
            RunStatus::Failed => None,
            RunStatus::Completed => {
                let metrics = path.with_file_name(METRICS_FILE);
                let records = read_metrics(&metrics)?;
                let fr = final_return_for_schedule(&records, cfg.n_tasks(), cfg.steps_per_task)?;
                Some((aulc(&records)?, fr))
            }
        };
        runs.push(RunSummary {
            algorithm: cfg.algorithm.to_string(),
            experiment: cfg.experiment(),
            seed: manifest.seed,
            scores,
        });
    }
    Ok(runs)
}

fn find_manifests(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        if path.is_dir() {
            find_manifests(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Reads all runs under `input` and writes the summary table to `output`.
pub fn report(input: &Path, output: &Path) -> Result<Summary, HarnessError> {
    let summary = aggregate(&collect_runs(input)?);
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(output, summary.to_csv()).map_err(|e| HarnessError::io(output, e))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub kappa: f64,
    pub mean_aulc: f64,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSelection {
    pub algorithm: Algorithm,
    pub env: EnvId,
    pub schedule: ScheduleKind,
    pub points: Vec<SweepPoint>,
    pub chosen: f64,
}

/// Picks the κ with the highest mean AULC; ties go to the smaller κ.
pub fn select_kappa(points: &[SweepPoint]) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.completed > 0)
        .fold(None, |best: Option<&SweepPoint>, p| match best {
            Some(b) if b.mean_aulc > p.mean_aulc => Some(b),
            Some(b) if b.mean_aulc == p.mean_aulc && b.kappa <= p.kappa => Some(b),
            _ => Some(p),
        })
        .map(|p| p.kappa)
}

/// Grid search over κ for each (algorithm, schedule) on the sweep seeds.
/// `runner` produces the metrics of one run, which lets tests inject
/// synthetic learning curves; `Ok(None)` marks a failed run.
pub fn kappa_sweep<F>(
    base: &RunConfig,
    algorithms: &[Algorithm],
    sweep: &SweepConfig,
    parallel: usize,
    runner: F,
) -> Result<Vec<SweepSelection>, HarnessError>
where
    F: Fn(&RunConfig) -> Result<Option<Vec<MetricsRecord>>, HarnessError> + Sync + Send,
{
    let schedules = if sweep.schedules.is_empty() {
        vec![base.schedule]
    } else {
        sweep.schedules.clone()
    };
    let mut jobs = Vec::new();
    for &algorithm in algorithms.iter().filter(|a| a.uses_kappa()) {
        let grid = sweep.grid(algorithm);
        if grid.is_empty() {
            return Err(HarnessError::config(
                "sweep grid",
                format!("empty grid for {algorithm}"),
            ));
        }
        for &schedule in &schedules {
            for &kappa in grid {
                for &seed in &sweep.seeds {
                    let mut cfg = base.clone();
                    cfg.algorithm = algorithm;
                    cfg.schedule = schedule;
                    cfg.kappa = Some(kappa);
                    cfg.seed = seed;
                    cfg.sweep = None;
                    jobs.push(cfg);
                }
            }
        }
    }
    let results = run_pool(&jobs, parallel, |cfg| {
        runner(cfg).and_then(|r| r.map(|records| aulc(&records)).transpose())
    })?;

    let mut selections = Vec::new();
    for &algorithm in algorithms.iter().filter(|a| a.uses_kappa()) {
        for &schedule in &schedules {
            let mut points = Vec::new();
            for &kappa in sweep.grid(algorithm) {
                let mut scores = Vec::new();
                let mut failed = 0;
                for (cfg, res) in jobs.iter().zip(&results) {
                    if cfg.algorithm != algorithm
                        || cfg.schedule != schedule
                        || cfg.kappa != Some(kappa)
                    {
                        continue;
                    }
                    match res {
                        Ok(Some(a)) => scores.push(*a),
                        Ok(None) => failed += 1,
                        Err(e) => {
                            return Err(HarnessError::Pool(format!(
                                "sweep run {}: {e}",
                                cfg.run_name()
                            )))
                        }
                    }
                }
                points.push(SweepPoint {
                    kappa,
                    mean_aulc: if scores.is_empty() {
                        f64::NAN
                    } else {
                        mean(&scores)
                    },
                    completed: scores.len(),
                    failed,
                });
            }
            let chosen = select_kappa(&points).ok_or(HarnessError::AllSweepRunsFailed)?;
            selections.push(SweepSelection {
                algorithm,
                env: base.env,
                schedule,
                points,
                chosen,
            });
        }
    }
    Ok(selections)
}

/// Selection table: `experiment,environment,strategy,eppo_cor,eppo_ind`.
pub fn selection_table_csv(selections: &[SweepSelection]) -> String {
    let mut rows: BTreeMap<(&'static str, EnvId, ScheduleKind), [Option<f64>; 2]> = BTreeMap::new();
    for s in selections {
        let slot = rows
            .entry((s.schedule.family(), s.env, s.schedule))
            .or_default();
        match s.algorithm {
            Algorithm::EppoCor => slot[0] = Some(s.chosen),
            Algorithm::EppoInd => slot[1] = Some(s.chosen),
            _ => {}
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "experiment",
        "environment",
        "strategy",
        "eppo_cor",
        "eppo_ind",
    ])
    .expect("in-memory write");
    let cell = |v: Option<f64>| v.map(|k| k.to_string()).unwrap_or_default();
    for ((family, env, schedule), [cor, ind]) in rows {
        w.write_record([
            family.to_string(),
            env.to_string(),
            schedule.strategy().to_string(),
            cell(cor),
            cell(ind),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Runner for [`kappa_sweep`] that trains for real and writes artifacts.
pub fn training_runner(cfg: &RunConfig) -> Result<Option<Vec<MetricsRecord>>, HarnessError> {
    let outcome = run(cfg)?;
    Ok(match outcome.manifest.status {
        RunStatus::Completed => Some(outcome.records),
        RunStatus::Failed => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, task: usize, ret: f64) -> MetricsRecord {
        MetricsRecord {
            seed: 1,
            global_step: step,
            task_index: task,
            eval_return_mean: ret,
            eval_return_se: 0.0,
        }
    }

    fn tiny(algorithm: Algorithm) -> RunConfig {
        let mut cfg = RunConfig::new(algorithm, EnvId::SlipperyCar, ScheduleKind::Decreasing);
        cfg.n_tasks = Some(2);
        cfg.steps_per_task = 300;
        cfg.eval_interval = 100;
        cfg.eval_episodes = 2;
        cfg.train.horizon = 128;
        cfg.train.minibatch = 64;
        cfg.train.epochs = 2;
        cfg.train.actor_hidden = vec![16];
        cfg.train.critic_hidden = vec![16];
        cfg
    }

    #[test]
    fn slippery_schedules() {
        let s = build_schedule(ScheduleKind::Decreasing, EnvId::SlipperyCar, 15, 10).unwrap();
        let f: Vec<f64> = s.tasks.iter().map(|t| t.friction).collect();
        for (k, v) in f.iter().enumerate() {
            assert!((v - (4.0 - 0.25 * k as f64)).abs() < 1e-12);
        }
        let inc = build_schedule(ScheduleKind::Increasing, EnvId::SlipperyCar, 15, 10).unwrap();
        assert_eq!(inc.tasks[0].friction, 0.5);
        assert!((inc.tasks[14].friction - 4.0).abs() < 1e-12);
        let single = build_schedule(ScheduleKind::Decreasing, EnvId::SlipperyCar, 1, 10).unwrap();
        assert_eq!(single.n_tasks(), 1);
        assert_eq!(single.boundaries(), Vec::<usize>::new());
    }

    #[test]
    fn paralysis_schedules() {
        let s = build_schedule(
            ScheduleKind::Paralysis(ParalysisScheme::Second),
            EnvId::TwoJointWalker,
            9,
            5,
        )
        .unwrap();
        assert_eq!(s.tasks.first(), s.tasks.last());
        assert_eq!(s.tasks[0].torque_scales, vec![1.0, 1.0]);
        assert_eq!(s.tasks[4].torque_scales, vec![1.0, 0.0]);
        let scales: Vec<f64> = s.tasks.iter().map(|t| t.torque_scales[1]).collect();
        assert_eq!(scales, PARALYSIS_PATTERN.to_vec());
        assert!(build_schedule(
            ScheduleKind::Paralysis(ParalysisScheme::Second),
            EnvId::SlipperyCar,
            9,
            5
        )
        .is_err());
        assert!("paralysis:legs".parse::<ScheduleKind>().is_err());
        assert_eq!(
            "paralysis:all".parse::<ScheduleKind>().unwrap().to_string(),
            "paralysis:all"
        );
    }

    #[test]
    fn metric_examples() {
        let constant = [rec(0, 0, 3.0), rec(5, 0, 3.0), rec(10, 0, 3.0)];
        assert_eq!(aulc(&constant).unwrap(), 3.0);
        assert_eq!(aulc(&[rec(0, 0, 0.0), rec(1, 0, 10.0)]).unwrap(), 5.0);
        assert!(aulc(&[]).is_err());
        assert_eq!(final_return(&constant).unwrap(), 3.0);
        let two = [
            rec(0, 0, 1.0),
            rec(10, 0, 3.0),
            rec(10, 1, 2.0),
            rec(20, 1, 5.0),
        ];
        assert_eq!(final_return(&two).unwrap(), 4.0);
        assert_eq!(final_return_for_schedule(&two, 2, 10).unwrap(), 4.0);
        assert!(final_return_for_schedule(&two[..3], 2, 10).is_err());
        assert!(matches!(
            final_return(&[rec(0, 1, 1.0)]),
            Err(HarnessError::MissingTask(0))
        ));
        let mut shuffled = two.to_vec();
        shuffled.reverse();
        assert_eq!(
            final_return(&shuffled).unwrap(),
            final_return(&two).unwrap()
        );
        assert_eq!(aulc(&shuffled).unwrap(), aulc(&two).unwrap());
    }

    #[test]
    fn ranks_and_standard_errors() {
        assert_eq!(rank_descending(&[10.0, 20.0, 30.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(rank_descending(&[5.0, 5.0, 1.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(rank_descending(&[7.0]), vec![1.0]);
        assert!((standard_error(&[1.0, 2.0, 3.0]) - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(standard_error(&[4.0]), 0.0);
    }

    #[test]
    fn aggregate_excludes_failures() {
        let runs = vec![
            RunSummary {
                algorithm: "a".into(),
                experiment: "x".into(),
                seed: 1,
                scores: Some((1.0, 2.0)),
            },
            RunSummary {
                algorithm: "a".into(),
                experiment: "x".into(),
                seed: 2,
                scores: Some((3.0, 4.0)),
            },
            RunSummary {
                algorithm: "a".into(),
                experiment: "x".into(),
                seed: 3,
                scores: None,
            },
        ];
        let s = aggregate(&runs);
        let row = s.row(Metric::Aulc, "a").unwrap();
        assert_eq!(row.cells["x"].mean, 2.0);
        assert_eq!(row.cells["x"].n, 2);
        assert_eq!(row.failed, 1);
        assert_eq!(row.average_rank, 1.0);
    }

    #[test]
    fn kappa_selection_rules() {
        let p = |kappa, mean_aulc| SweepPoint {
            kappa,
            mean_aulc,
            completed: 1,
            failed: 0,
        };
        assert_eq!(select_kappa(&[p(0.3, 1.0)]), Some(0.3));
        assert_eq!(
            select_kappa(&[p(0.01, 1.0), p(0.1, 2.0), p(0.25, 1.5)]),
            Some(0.1)
        );
        assert_eq!(select_kappa(&[p(0.25, 2.0), p(0.01, 2.0)]), Some(0.01));
        let failed = SweepPoint {
            kappa: 0.5,
            mean_aulc: f64::NAN,
            completed: 0,
            failed: 3,
        };
        assert_eq!(select_kappa(&[failed]), None);
    }

    #[test]
    fn config_round_trip_and_errors() {
        let cfg = tiny(Algorithm::EppoInd);
        let parsed = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(parsed, cfg);
        let err = RunConfig::from_toml_str(
            "algorithm = \"ppo\"\nenv = \"slippery-car\"\nschedule = \"decreasing\"\nbogus = 1\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = RunConfig::from_toml_str(
            "algorithm = \"ppo\"\nenv = \"slippery-car\"\nschedule = \"decreasing\"\n[train]\ngamma = 1.5\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        assert_eq!(tiny(Algorithm::Ppo).effective_kappa(), 0.0);
        let mut mean_only = tiny(Algorithm::EppoMean);
        mean_only.kappa = Some(3.0);
        assert_eq!(mean_only.effective_kappa(), 0.0);
    }

    #[test]
    fn emission_rule() {
        let result = train(&tiny(Algorithm::Ppo)).unwrap();
        let steps: Vec<(u64, usize)> = result
            .records
            .iter()
            .map(|r| (r.global_step, r.task_index))
            .collect();
        assert_eq!(
            steps,
            vec![
                (0, 0),
                (100, 0),
                (200, 0),
                (300, 0),
                (300, 1),
                (400, 1),
                (500, 1),
                (600, 1)
            ]
        );
        assert!(result.records.iter().all(|r| r.eval_return_se >= 0.0));
    }

    #[test]
    fn runs_are_deterministic_and_share_budget() {
        let a = train(&tiny(Algorithm::EppoMean)).unwrap();
        let b = train(&tiny(Algorithm::EppoMean)).unwrap();
        assert_eq!(a.records, b.records);
        let p = train(&tiny(Algorithm::Ppo)).unwrap();
        assert_eq!(p.updates, a.updates);
        assert_eq!(p.records.len(), a.records.len());
    }

    #[test]
    fn evaluation_does_not_disturb_training() {
        let mut with = tiny(Algorithm::EppoCor);
        with.eval_interval = 50;
        let mut without = with.clone();
        without.eval_interval = 0;
        let a = train(&with).unwrap();
        let b = train(&without).unwrap();
        assert_eq!(a.agent.actor_params, b.agent.actor_params);
        assert_eq!(a.agent.critic_params, b.agent.critic_params);
    }

    #[test]
    fn networks_persist_across_tasks() {
        let mut cfg = tiny(Algorithm::EppoInd);
        cfg.train.actor_lr = 0.0;
        cfg.train.critic_lr = 0.0;
        let result = train(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let fresh = Agent::new(3, 1, &cfg.train, cfg.objective(), &mut rng).unwrap();
        assert_eq!(result.agent.actor_params, fresh.actor_params);
        assert_eq!(result.agent.critic_params, fresh.critic_params);
        assert!(result.agent.actor_opt.step > 0);
    }
}
