//! On-policy trainer: diagonal-Gaussian actor, scalar or evidential critic,
//! rollout collection, advantage computation, and the clipped-surrogate
//! epoch/minibatch update.

use crate::diffnet::{clip_global_norm, Adam, Mlp, MlpSpec, NetError, ParamSet, Tape};
use crate::envs::{EnvError, Environment};
use crate::evidential::{
    evl_loss_and_raw_grad, head_transform, predictive_variance, EvidentialError, EvidentialParams,
    HyperpriorConfig,
};
use crate::gae::{self, Boundary, GaeConfig, GaeError, ValueSequence, VarianceVariant};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Bump when the checkpoint layout changes.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Normalized observations are clipped to this magnitude.
pub const OBS_CLIP: f64 = 10.0;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Evidential(#[from] EvidentialError),
    #[error(transparent)]
    Gae(#[from] GaeError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl PpoError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            PpoError::Diverged(_) | PpoError::Net(NetError::NonFinite(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ppo,
    EppoMean,
    EppoCor,
    EppoInd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Ppo,
        Algorithm::EppoMean,
        Algorithm::EppoCor,
        Algorithm::EppoInd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::EppoMean => "eppo-mean",
            Algorithm::EppoCor => "eppo-cor",
            Algorithm::EppoInd => "eppo-ind",
        }
    }

    pub fn is_evidential(&self) -> bool {
        !matches!(self, Algorithm::Ppo)
    }

    pub fn variance_variant(&self) -> VarianceVariant {
        match self {
            Algorithm::Ppo | Algorithm::EppoMean => VarianceVariant::Mean,
            Algorithm::EppoCor => VarianceVariant::Correlated,
            Algorithm::EppoInd => VarianceVariant::Independent,
        }
    }

    /// Whether the confidence radius has any effect.
    pub fn uses_kappa(&self) -> bool {
        matches!(self, Algorithm::EppoCor | Algorithm::EppoInd)
    }

    pub fn critic_outputs(&self) -> usize {
        if self.is_evidential() {
            4
        } else {
            1
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = PpoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| PpoError::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

/// PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub horizon: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub clip_epsilon: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub max_grad_norm: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub layer_norm: bool,
    /// Scale applied to the initial weights of the actor's output layer.
    pub policy_init_scale: f64,
    pub initial_log_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            horizon: 2048,
            epochs: 10,
            minibatch: 256,
            clip_epsilon: 0.2,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            gamma: 0.99,
            lambda: 0.95,
            max_grad_norm: 0.5,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            layer_norm: true,
            policy_init_scale: 0.01,
            initial_log_std: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad =
            |key: &str, why: &str| Err(PpoError::InvalidConfig(format!("train.{key}: {why}")));
        if self.horizon < 2 {
            return bad("horizon", "must be at least 2");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be positive");
        }
        if self.minibatch == 0 {
            return bad("minibatch", "must be positive");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon", "must be positive");
        }
        if !(self.actor_lr >= 0.0) || !(self.critic_lr >= 0.0) {
            return bad("actor_lr", "learning rates must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", "must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda", "must lie in [0, 1]");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm", "must be positive");
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("actor_hidden", "hidden widths must be positive");
        }
        Ok(())
    }
}

/// What the critic learns and how advantages are shaped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub algorithm: Algorithm,
    pub kappa: f64,
    pub hyperprior: HyperpriorConfig,
}

impl Objective {
    pub fn new(algorithm: Algorithm, kappa: f64) -> Self {
        Self {
            algorithm,
            kappa,
            hyperprior: HyperpriorConfig::default(),
        }
    }

    pub fn gae_config(&self, cfg: &TrainConfig) -> GaeConfig {
        GaeConfig {
            gamma: cfg.gamma,
            lambda: cfg.lambda,
            kappa: if self.algorithm.uses_kappa() {
                self.kappa
            } else {
                0.0
            },
            variant: self.algorithm.variance_variant(),
        }
    }
}

/// Diagonal Gaussian policy head for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

pub fn policy_log_prob(out: &PolicyOutput, action: &[f64]) -> f64 {
    out.mean
        .iter()
        .zip(&out.log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// Gradient of [`policy_log_prob`] with respect to the mean and log-std.
pub fn policy_log_prob_grad(out: &PolicyOutput, action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut d_mean = Vec::with_capacity(action.len());
    let mut d_log_std = Vec::with_capacity(action.len());
    for ((m, ls), a) in out.mean.iter().zip(&out.log_std).zip(action) {
        let inv_var = (-2.0 * ls).exp();
        let diff = a - m;
        d_mean.push(diff * inv_var);
        d_log_std.push(diff * diff * inv_var - 1.0);
    }
    (d_mean, d_log_std)
}

pub fn sample_action<R: Rng + ?Sized>(out: &PolicyOutput, rng: &mut R) -> Vec<f64> {
    out.mean
        .iter()
        .zip(&out.log_std)
        .map(|(m, ls)| {
            let z: f64 = rng.sample(StandardNormal);
            m + ls.exp() * z
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEval {
    pub loss: f64,
    /// d loss / d new log-prob, per sample.
    pub grad: Vec<f64>,
    pub clip_fraction: f64,
}

/// `mean(-min(rho * A, clip(rho, 1 - eps, 1 + eps) * A))`.
pub fn clipped_surrogate(
    new_logp: &[f64],
    old_logp: &[f64],
    advantages: &[f64],
    epsilon: f64,
) -> f64 {
    clipped_surrogate_with_grad(new_logp, old_logp, advantages, epsilon).loss
}

pub fn clipped_surrogate_with_grad(
    new_logp: &[f64],
    old_logp: &[f64],
    advantages: &[f64],
    epsilon: f64,
) -> SurrogateEval {
    assert_eq!(new_logp.len(), old_logp.len());
    assert_eq!(new_logp.len(), advantages.len());
    let n = new_logp.len().max(1) as f64;
    let mut loss = 0.0;
    let mut clipped = 0usize;
    let mut grad = Vec::with_capacity(new_logp.len());
    for ((new, old), adv) in new_logp.iter().zip(old_logp).zip(advantages) {
        let ratio = (new - old).exp();
        let unclipped = ratio * adv;
        let bounded = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * adv;
        if (ratio - 1.0).abs() > epsilon {
            clipped += 1;
        }
        if unclipped <= bounded {
            loss -= unclipped;
            grad.push(-unclipped / n);
        } else {
            loss -= bounded;
            grad.push(0.0);
        }
    }
    SurrogateEval {
        loss: loss / n,
        grad,
        clip_fraction: clipped as f64 / n,
    }
}

/// Batch mean of the evidential objective and its gradient with respect to
/// the raw critic outputs.
pub fn critic_loss_evidential(
    raw: &[[f64; 4]],
    targets: &[f64],
    cfg: &HyperpriorConfig,
) -> Result<(f64, Vec<[f64; 4]>), EvidentialError> {
    assert_eq!(raw.len(), targets.len());
    let n = raw.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(raw.len());
    for (r, &y) in raw.iter().zip(targets) {
        let (l, g) = evl_loss_and_raw_grad(*r, y, cfg)?;
        loss += l;
        grads.push(g.map(|v| v / n));
    }
    Ok((loss / n, grads))
}

/// Batch mean squared error and its gradient with respect to predictions.
pub fn critic_loss_mse(predictions: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(predictions.len(), targets.len());
    let n = predictions.len().max(1) as f64;
    let mut loss = 0.0;
    let grads = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    (loss / n, grads)
}

/// Running mean and variance of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn update(&mut self, x: &[f64]) {
        self.count += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / self.count;
            *s += delta * (v - *m);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        if self.count < 2.0 {
            return x.iter().map(|v| v.clamp(-OBS_CLIP, OBS_CLIP)).collect();
        }
        x.iter()
            .zip(&self.mean)
            .zip(&self.m2)
            .map(|((v, m), s)| {
                let std = (s / self.count).sqrt();
                ((v - m) / (std + 1e-8)).clamp(-OBS_CLIP, OBS_CLIP)
            })
            .collect()
    }
}

/// The critic's prediction for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ValuePrediction {
    Scalar(f64),
    Evidential(EvidentialParams),
}

impl ValuePrediction {
    pub fn mean(&self) -> f64 {
        match self {
            ValuePrediction::Scalar(v) => *v,
            ValuePrediction::Evidential(m) => m.omega,
        }
    }

    /// Total predictive variance; zero for a scalar critic.
    pub fn variance(&self) -> f64 {
        match self {
            ValuePrediction::Scalar(_) => 0.0,
            ValuePrediction::Evidential(m) => {
                predictive_variance(m).map(|d| d.total).unwrap_or(0.0)
            }
        }
    }
}

/// Actor, critic, their optimizers, and observation statistics.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp,
    /// Actor network parameters followed by the per-dimension log-std.
    pub actor_params: ParamSet,
    pub critic: Mlp,
    pub critic_params: ParamSet,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub obs_norm: RunningNorm,
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub objective: Objective,
    pub actor_spec: MlpSpec,
    pub critic_spec: MlpSpec,
    pub actor_params: ParamSet,
    pub critic_params: ParamSet,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub obs_norm: RunningNorm,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        cfg: &TrainConfig,
        objective: Objective,
        rng: &mut R,
    ) -> Result<Self, PpoError> {
        cfg.validate()?;
        objective
            .hyperprior
            .validate()
            .map_err(|e| PpoError::InvalidConfig(format!("hyperprior: {e}")))?;
        let mut actor_spec = MlpSpec::new(obs_dim, &cfg.actor_hidden, act_dim);
        actor_spec.use_layer_norm = cfg.layer_norm;
        let mut critic_spec = MlpSpec::new(
            obs_dim,
            &cfg.critic_hidden,
            objective.algorithm.critic_outputs(),
        );
        critic_spec.use_layer_norm = cfg.layer_norm;
        let actor = Mlp::new(actor_spec)?;
        let critic = Mlp::new(critic_spec)?;
        let mut actor_params = actor.init_params(rng, cfg.policy_init_scale);
        actor_params
            .0
            .extend(std::iter::repeat_n(cfg.initial_log_std, act_dim));
        let critic_params = critic.init_params(rng, 1.0);
        Ok(Self {
            actor_opt: Adam::new(actor_params.len(), cfg.actor_lr),
            critic_opt: Adam::new(critic_params.len(), cfg.critic_lr),
            obs_norm: RunningNorm::new(obs_dim),
            actor,
            actor_params,
            critic,
            critic_params,
            objective,
        })
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    fn actor_net_params(&self) -> &[f64] {
        &self.actor_params[..self.actor.num_params()]
    }

    pub fn log_std(&self) -> &[f64] {
        &self.actor_params[self.actor.num_params()..]
    }

    pub fn policy(&self, obs: &[f64]) -> Result<PolicyOutput, PpoError> {
        Ok(PolicyOutput {
            mean: self.actor.forward(self.actor_net_params(), obs)?,
            log_std: self.log_std().to_vec(),
        })
    }

    pub fn value(&self, obs: &[f64]) -> Result<ValuePrediction, PpoError> {
        let out = self.critic.forward(&self.critic_params, obs)?;
        self.interpret_critic(&out)
    }

    fn interpret_critic(&self, out: &[f64]) -> Result<ValuePrediction, PpoError> {
        if self.objective.algorithm.is_evidential() {
            let m = head_transform([out[0], out[1], out[2], out[3]])?;
            Ok(ValuePrediction::Evidential(m))
        } else if out[0].is_finite() {
            Ok(ValuePrediction::Scalar(out[0]))
        } else {
            Err(PpoError::Diverged("non-finite value prediction".into()))
        }
    }

    /// Policy mean for a raw observation, without touching normalization
    /// statistics.
    pub fn act_deterministic(&self, raw_obs: &[f64]) -> Result<Vec<f64>, PpoError> {
        let obs = self.obs_norm.normalize(raw_obs);
        Ok(self.actor.forward(self.actor_net_params(), &obs)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            objective: self.objective,
            actor_spec: self.actor.spec().clone(),
            critic_spec: self.critic.spec().clone(),
            actor_params: self.actor_params.clone(),
            critic_params: self.critic_params.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            obs_norm: self.obs_norm.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, PpoError> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(PpoError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let actor = Mlp::new(ck.actor_spec)?;
        let critic = Mlp::new(ck.critic_spec)?;
        let act_dim = actor.output_dim();
        if ck.actor_params.len() != actor.num_params() + act_dim
            || ck.critic_params.len() != critic.num_params()
            || ck.actor_opt.num_params() != ck.actor_params.len()
            || ck.critic_opt.num_params() != ck.critic_params.len()
        {
            return Err(PpoError::Checkpoint(
                "parameter shapes do not match specs".into(),
            ));
        }
        Ok(Self {
            actor,
            critic,
            actor_params: ck.actor_params,
            critic_params: ck.critic_params,
            actor_opt: ck.actor_opt,
            critic_opt: ck.critic_opt,
            obs_norm: ck.obs_norm,
            objective: ck.objective,
        })
    }
}

/// One on-policy batch.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Normalized observations, row-major `len x obs_dim`.
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    /// Critic predictions for every state plus the bootstrap state.
    pub values: Vec<ValuePrediction>,
    /// Successor value for truncated steps.
    pub truncation_values: Vec<Option<ValuePrediction>>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
    /// Advantage mean and variance before UCB shaping and normalization.
    pub advantage_means: Vec<f64>,
    pub advantage_variances: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        let (o, a) = (self.obs_dim, self.act_dim);
        *self = Self::new(o, a);
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        state: &[f64],
        action: &[f64],
        log_prob: f64,
        reward: f64,
        terminated: bool,
        truncated: bool,
        value: ValuePrediction,
        truncation_value: Option<ValuePrediction>,
    ) {
        self.states.extend_from_slice(state);
        self.actions.extend_from_slice(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.terminated.push(terminated);
        self.truncated.push(truncated);
        self.values.push(value);
        self.truncation_values.push(truncation_value);
    }

    pub fn boundaries(&self) -> Vec<Boundary> {
        (0..self.len())
            .map(|t| {
                if self.terminated[t] {
                    Boundary::Terminated
                } else if self.truncated[t] {
                    let v = self.truncation_values[t].unwrap_or(ValuePrediction::Scalar(0.0));
                    Boundary::Truncated {
                        mean: v.mean(),
                        variance: v.variance(),
                    }
                } else {
                    Boundary::Continue
                }
            })
            .collect()
    }

    pub fn value_sequence(&self) -> Result<ValueSequence, GaeError> {
        ValueSequence::new(
            self.values.iter().map(|v| v.mean()).collect(),
            self.values.iter().map(|v| v.variance()).collect(),
            self.boundaries(),
        )
    }
}

/// Fills in value targets (discounted returns, bootstrapped at truncation and
/// at the end of the batch) and the shaped, normalized advantages.
pub fn compute_targets_and_advantages(
    buffer: &mut RolloutBuffer,
    cfg: &TrainConfig,
    objective: &Objective,
) -> Result<(), PpoError> {
    let vals = buffer.value_sequence()?;
    let est = gae::estimate(&buffer.rewards, &vals, &objective.gae_config(cfg))?;
    buffer.advantages = gae::normalize_batch(&est.ucb)?;
    buffer.advantage_means = est.mean;
    buffer.advantage_variances = est.variance;

    let n = buffer.len();
    let mut targets = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let follow = match vals.boundaries[t] {
            Boundary::Continue if t + 1 == n => vals.means[n],
            Boundary::Continue => next,
            Boundary::Terminated => 0.0,
            Boundary::Truncated { mean, .. } => mean,
        };
        next = buffer.rewards[t] + cfg.gamma * follow;
        targets[t] = next;
    }
    buffer.targets = targets;
    Ok(())
}

/// Drives an environment with the current policy and records transitions.
#[derive(Debug, Clone)]
pub struct Collector {
    obs: Vec<f64>,
}

impl Collector {
    /// Resets `env` with a seed drawn from `rng` and starts collecting.
    pub fn start<R: RngCore + ?Sized>(env: &mut dyn Environment, rng: &mut R) -> Self {
        Self {
            obs: env.reset(rng.next_u64()),
        }
    }

    /// Collects `steps` transitions into `buffer` (which is cleared first).
    /// `after_step` runs after every environment step, e.g. to switch
    /// dynamics or evaluate; it must not touch `rng`.
    pub fn collect<R, F>(
        &mut self,
        agent: &mut Agent,
        env: &mut dyn Environment,
        buffer: &mut RolloutBuffer,
        steps: usize,
        rng: &mut R,
        mut after_step: F,
    ) -> Result<(), PpoError>
    where
        R: Rng + ?Sized,
        F: FnMut(&Agent, &mut dyn Environment) -> Result<(), PpoError>,
    {
        buffer.clear();
        for _ in 0..steps {
            agent.obs_norm.update(&self.obs);
            let state = agent.obs_norm.normalize(&self.obs);
            let value = agent.value(&state)?;
            let policy = agent.policy(&state)?;
            let action = sample_action(&policy, rng);
            let log_prob = policy_log_prob(&policy, &action);
            let step = env.step(&action)?;
            let truncation_value = if step.truncated {
                Some(agent.value(&agent.obs_norm.normalize(&step.observation))?)
            } else {
                None
            };
            buffer.push(
                &state,
                &action,
                log_prob,
                step.reward,
                step.terminated,
                step.truncated,
                value,
                truncation_value,
            );
            self.obs = if step.terminated || step.truncated {
                env.reset(rng.next_u64())
            } else {
                step.observation
            };
            after_step(agent, env)?;
        }
        let bootstrap = agent.value(&agent.obs_norm.normalize(&self.obs))?;
        buffer.values.push(bootstrap);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// Clipped-surrogate loss over the `batch` rows of `buffer` and its gradient
/// with respect to all actor parameters (written into `grads`). `tapes` needs
/// one entry per batch row. Returns (loss, clip fraction).
pub fn actor_loss_grad(
    agent: &Agent,
    buffer: &RolloutBuffer,
    batch: &[usize],
    epsilon: f64,
    tapes: &mut [Tape],
    grads: &mut [f64],
) -> Result<(f64, f64), PpoError> {
    let n_net = agent.actor.num_params();
    let log_std = agent.log_std().to_vec();
    let mut new_logp = Vec::with_capacity(batch.len());
    let mut policies = Vec::with_capacity(batch.len());
    for (tape, &i) in tapes.iter_mut().zip(batch) {
        let mean = agent
            .actor
            .forward_tape(&agent.actor_params[..n_net], buffer.state(i), tape)?
            .to_vec();
        let out = PolicyOutput {
            mean,
            log_std: log_std.clone(),
        };
        new_logp.push(policy_log_prob(&out, buffer.action(i)));
        policies.push(out);
    }
    let old: Vec<f64> = batch.iter().map(|&i| buffer.log_probs[i]).collect();
    let adv: Vec<f64> = batch.iter().map(|&i| buffer.advantages[i]).collect();
    let sur = clipped_surrogate_with_grad(&new_logp, &old, &adv, epsilon);
    if !sur.loss.is_finite() {
        return Err(PpoError::Diverged(format!("actor loss {}", sur.loss)));
    }

    grads.fill(0.0);
    for (k, &i) in batch.iter().enumerate() {
        let coef = sur.grad[k];
        if coef == 0.0 {
            continue;
        }
        let (d_mean, d_log_std) = policy_log_prob_grad(&policies[k], buffer.action(i));
        let out_grad: Vec<f64> = d_mean.iter().map(|d| coef * d).collect();
        let (net_grads, std_grads) = grads.split_at_mut(n_net);
        agent.actor.backward_tape(
            &agent.actor_params[..n_net],
            &mut tapes[k],
            &out_grad,
            net_grads,
        )?;
        for (g, d) in std_grads.iter_mut().zip(&d_log_std) {
            *g += coef * d;
        }
    }
    Ok((sur.loss, sur.clip_fraction))
}

fn actor_step(
    agent: &mut Agent,
    buffer: &RolloutBuffer,
    batch: &[usize],
    cfg: &TrainConfig,
    tapes: &mut [Tape],
    grads: &mut ParamSet,
) -> Result<(f64, f64), PpoError> {
    let out = actor_loss_grad(agent, buffer, batch, cfg.clip_epsilon, tapes, grads)?;
    clip_global_norm(grads, cfg.max_grad_norm)?;
    agent.actor_opt.step(&mut agent.actor_params, grads)?;
    Ok(out)
}

/// Critic loss (evidential or squared error, per the agent's algorithm) over
/// the `batch` rows of `buffer`, with its parameter gradient in `grads`.
pub fn critic_loss_grad(
    agent: &Agent,
    buffer: &RolloutBuffer,
    batch: &[usize],
    tapes: &mut [Tape],
    grads: &mut [f64],
) -> Result<f64, PpoError> {
    let mut outputs = Vec::with_capacity(batch.len());
    for (tape, &i) in tapes.iter_mut().zip(batch) {
        outputs.push(
            agent
                .critic
                .forward_tape(&agent.critic_params, buffer.state(i), tape)?
                .to_vec(),
        );
    }
    let targets: Vec<f64> = batch.iter().map(|&i| buffer.targets[i]).collect();
    let (loss, out_grads): (f64, Vec<Vec<f64>>) = if agent.objective.algorithm.is_evidential() {
        let raw: Vec<[f64; 4]> = outputs.iter().map(|o| [o[0], o[1], o[2], o[3]]).collect();
        let (loss, g) = critic_loss_evidential(&raw, &targets, &agent.objective.hyperprior)
            .map_err(|e| match e {
                EvidentialError::NonFiniteRaw(_) => PpoError::Diverged(e.to_string()),
                other => other.into(),
            })?;
        (loss, g.into_iter().map(|g| g.to_vec()).collect())
    } else {
        let preds: Vec<f64> = outputs.iter().map(|o| o[0]).collect();
        let (loss, g) = critic_loss_mse(&preds, &targets);
        (loss, g.into_iter().map(|g| vec![g]).collect())
    };
    if !loss.is_finite() {
        return Err(PpoError::Diverged(format!("critic loss {loss}")));
    }
    grads.fill(0.0);
    for (tape, g) in tapes.iter_mut().zip(&out_grads) {
        agent
            .critic
            .backward_tape(&agent.critic_params, tape, g, grads)?;
    }
    Ok(loss)
}

fn critic_step(
    agent: &mut Agent,
    buffer: &RolloutBuffer,
    batch: &[usize],
    cfg: &TrainConfig,
    tapes: &mut [Tape],
    grads: &mut ParamSet,
) -> Result<f64, PpoError> {
    let loss = critic_loss_grad(agent, buffer, batch, tapes, grads)?;
    clip_global_norm(grads, cfg.max_grad_norm)?;
    agent.critic_opt.step(&mut agent.critic_params, grads)?;
    Ok(loss)
}

/// Runs `cfg.epochs` passes of shuffled minibatch updates over `buffer`.
pub fn update<R: Rng + ?Sized>(
    buffer: &RolloutBuffer,
    agent: &mut Agent,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateDiagnostics, PpoError> {
    let n = buffer.len();
    if n == 0 || buffer.advantages.len() != n || buffer.targets.len() != n {
        return Err(PpoError::InvalidConfig(
            "buffer advantages and targets must be computed before update".into(),
        ));
    }
    let mb = cfg.minibatch.min(n);
    let mut tapes = vec![Tape::default(); mb];
    let mut actor_grads = ParamSet::zeros(agent.actor_params.len());
    let mut critic_grads = ParamSet::zeros(agent.critic_params.len());
    let mut indices: Vec<usize> = (0..n).collect();
    let mut diag = UpdateDiagnostics::default();
    for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for batch in indices.chunks(mb) {
            let (a_loss, clip) =
                actor_step(agent, buffer, batch, cfg, &mut tapes, &mut actor_grads)?;
            let c_loss = critic_step(agent, buffer, batch, cfg, &mut tapes, &mut critic_grads)?;
            diag.actor_loss += a_loss;
            diag.critic_loss += c_loss;
            diag.clip_fraction += clip;
            diag.minibatches += 1;
        }
    }
    let k = diag.minibatches as f64;
    diag.actor_loss /= k;
    diag.critic_loss /= k;
    diag.clip_fraction /= k;
    Ok(diag)
}

/// Critic loss of the whole buffer under the agent's current critic.
pub fn critic_loss_on_buffer(agent: &Agent, buffer: &RolloutBuffer) -> Result<f64, PpoError> {
    let mut outputs = Vec::with_capacity(buffer.len());
    for i in 0..buffer.len() {
        outputs.push(
            agent
                .critic
                .forward(&agent.critic_params, buffer.state(i))?,
        );
    }
    if agent.objective.algorithm.is_evidential() {
        let raw: Vec<[f64; 4]> = outputs.iter().map(|o| [o[0], o[1], o[2], o[3]]).collect();
        Ok(critic_loss_evidential(&raw, &buffer.targets, &agent.objective.hyperprior)?.0)
    } else {
        let preds: Vec<f64> = outputs.iter().map(|o| o[0]).collect();
        Ok(critic_loss_mse(&preds, &buffer.targets).0)
    }
}
