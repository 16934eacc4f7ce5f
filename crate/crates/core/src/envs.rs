//! Deterministic desk-scale control environments with adjustable dynamics.
//!
//! Both environments integrate with semi-implicit Euler at a fixed step and
//! reward forward velocity minus a quadratic action cost. Ground friction
//! scales a velocity-opposing force and per-actuator torque scales multiply
//! the commanded torques, so a schedule can change either at run time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const TIMESTEP: f64 = 0.05;
pub const EPISODE_LIMIT: usize = 200;
pub const ACTION_COST: f64 = 0.01;
pub const RESET_NOISE: f64 = 0.05;
pub const MIN_FRICTION: f64 = 0.5;
pub const MAX_FRICTION: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action has {got} components, environment expects {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("non-finite action {0:?}")]
    NonFiniteAction(Vec<f64>),
    #[error("invalid dynamics: {0}")]
    InvalidDynamics(String),
    #[error("episode is over; call reset first")]
    EpisodeFinished,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub friction: f64,
    pub torque_scales: Vec<f64>,
}

impl DynamicsParams {
    pub fn nominal(act_dim: usize) -> Self {
        Self {
            friction: 1.0,
            torque_scales: vec![1.0; act_dim],
        }
    }

    pub fn validate(&self, act_dim: usize) -> Result<(), EnvError> {
        if !(self.friction.is_finite() && self.friction > 0.0) {
            return Err(EnvError::InvalidDynamics(format!(
                "friction must be positive, got {}",
                self.friction
            )));
        }
        if self.torque_scales.len() != act_dim {
            return Err(EnvError::InvalidDynamics(format!(
                "expected {act_dim} torque scales, got {}",
                self.torque_scales.len()
            )));
        }
        if let Some(s) = self
            .torque_scales
            .iter()
            .find(|s| !(0.0..=1.0).contains(*s))
        {
            return Err(EnvError::InvalidDynamics(format!(
                "torque scale {s} outside [0, 1]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub physical: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvId {
    SlipperyCar,
    TwoJointWalker,
}

impl EnvId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::SlipperyCar => "slippery-car",
            EnvId::TwoJointWalker => "two-joint-walker",
        }
    }

    pub fn act_dim(&self) -> usize {
        match self {
            EnvId::SlipperyCar => 1,
            EnvId::TwoJointWalker => 2,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvId::SlipperyCar => 3,
            EnvId::TwoJointWalker => 8,
        }
    }

    pub fn make(&self) -> Box<dyn Environment> {
        match self {
            EnvId::SlipperyCar => Box::new(SlipperyCar::new()),
            EnvId::TwoJointWalker => Box::new(TwoJointWalker::new()),
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slippery-car" => Ok(EnvId::SlipperyCar),
            "two-joint-walker" => Ok(EnvId::TwoJointWalker),
            other => Err(EnvError::UnknownEnv(other.to_string())),
        }
    }
}

pub trait Environment: Send {
    fn id(&self) -> EnvId;

    fn obs_dim(&self) -> usize {
        self.id().obs_dim()
    }

    fn act_dim(&self) -> usize {
        self.id().act_dim()
    }

    /// Starts a new episode from a seeded perturbation of the nominal state.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;

    /// Changes the dynamics for subsequent steps. The current state is kept.
    fn set_dynamics(&mut self, params: DynamicsParams) -> Result<(), EnvError>;

    fn dynamics(&self) -> &DynamicsParams;

    fn state(&self) -> EnvState;

    fn set_state(&mut self, state: EnvState) -> Result<(), EnvError>;

    fn observation(&self) -> Vec<f64>;
}

fn clipped_action(action: &[f64], act_dim: usize) -> Result<Vec<f64>, EnvError> {
    if action.len() != act_dim {
        return Err(EnvError::ActionDim {
            expected: act_dim,
            got: action.len(),
        });
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(EnvError::NonFiniteAction(action.to_vec()));
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}

fn perturbed(nominal: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    nominal
        .iter()
        .map(|v| v + rng.random_range(-RESET_NOISE..=RESET_NOISE))
        .collect()
}

fn action_cost(action: &[f64]) -> f64 {
    ACTION_COST * action.iter().map(|a| a * a).sum::<f64>()
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Point mass on a gently rolling track.
///
/// State `(x, v)`; observation `(sin x, cos x, v)`. The motor force is
/// opposed by viscous ground friction `friction * v` and a hill force
/// `-0.15 sin x`. Rolling back past `x = -3` ends the episode.
#[derive(Debug, Clone)]
pub struct SlipperyCar {
    x: f64,
    v: f64,
    steps: usize,
    done: bool,
    dynamics: DynamicsParams,
}

impl SlipperyCar {
    pub const MOTOR_FORCE: f64 = 1.0;
    pub const DRAG: f64 = 1.0;
    pub const HILL: f64 = 0.15;
    pub const BACK_LEDGE: f64 = -3.0;

    pub fn new() -> Self {
        Self {
            x: 0.0,
            v: 0.0,
            steps: 0,
            done: false,
            dynamics: DynamicsParams::nominal(1),
        }
    }
}

impl Default for SlipperyCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for SlipperyCar {
    fn id(&self) -> EnvId {
        EnvId::SlipperyCar
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let s = perturbed(&[0.0, 0.0], seed);
        self.x = s[0];
        self.v = s[1];
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let a = clipped_action(action, 1)?;
        let thrust = self.dynamics.torque_scales[0] * Self::MOTOR_FORCE * a[0];
        let acc = thrust - self.dynamics.friction * Self::DRAG * self.v - Self::HILL * self.x.sin();
        self.v += acc * TIMESTEP;
        self.x += self.v * TIMESTEP;
        self.steps += 1;
        let terminated = self.x < Self::BACK_LEDGE;
        let truncated = !terminated && self.steps >= EPISODE_LIMIT;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.observation(),
            reward: self.v - action_cost(&a),
            terminated,
            truncated,
        })
    }

    fn set_dynamics(&mut self, params: DynamicsParams) -> Result<(), EnvError> {
        params.validate(1)?;
        self.dynamics = params;
        Ok(())
    }

    fn dynamics(&self) -> &DynamicsParams {
        &self.dynamics
    }

    fn state(&self) -> EnvState {
        EnvState {
            physical: vec![self.x, self.v],
            steps: self.steps,
        }
    }

    fn set_state(&mut self, state: EnvState) -> Result<(), EnvError> {
        if state.physical.len() != 2 || state.physical.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::InvalidState(format!("{:?}", state.physical)));
        }
        if state.steps > EPISODE_LIMIT {
            return Err(EnvError::InvalidState(format!(
                "step counter {} over limit",
                state.steps
            )));
        }
        self.x = state.physical[0];
        self.v = state.physical[1];
        self.steps = state.steps;
        self.done = state.steps >= EPISODE_LIMIT;
        Ok(())
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.x.sin(), self.x.cos(), self.v]
    }
}

/// Planar body propelled by two rotating legs.
///
/// Internal state: leg angles `theta` (from vertical), leg rates `omega`,
/// body position and velocity, body pitch and pitch rate. A leg pushes the
/// body while its foot is below the hip; the traction force is proportional
/// to ground friction and to the slip between foot and body. Unequal leg
/// torques tip the body; pitching past one radian is a fall.
#[derive(Debug, Clone)]
pub struct TwoJointWalker {
    s: [f64; 8],
    steps: usize,
    done: bool,
    dynamics: DynamicsParams,
}

impl TwoJointWalker {
    pub const TORQUE: f64 = 2.0;
    pub const LEG_DAMPING: f64 = 1.0;
    pub const LEG_INERTIA: f64 = 0.2;
    pub const LEG_LENGTH: f64 = 1.0;
    pub const TRACTION: f64 = 0.5;
    pub const BODY_DRAG: f64 = 0.1;
    pub const PITCH_COUPLING: f64 = 3.0;
    pub const PITCH_STIFFNESS: f64 = 4.0;
    pub const PITCH_DAMPING: f64 = 2.0;
    pub const PITCH_LIMIT: f64 = 1.0;
    const NOMINAL: [f64; 8] = [0.0, PI, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];

    pub fn new() -> Self {
        Self {
            s: Self::NOMINAL,
            steps: 0,
            done: false,
            dynamics: DynamicsParams::nominal(2),
        }
    }
}

impl Default for TwoJointWalker {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for TwoJointWalker {
    fn id(&self) -> EnvId {
        EnvId::TwoJointWalker
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let p = perturbed(&Self::NOMINAL, seed);
        self.s.copy_from_slice(&p);
        self.s[0] = wrap_angle(self.s[0]);
        self.s[1] = wrap_angle(self.s[1]);
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let a = clipped_action(action, 2)?;
        let applied = [
            self.dynamics.torque_scales[0] * a[0],
            self.dynamics.torque_scales[1] * a[1],
        ];
        let friction = self.dynamics.friction;
        let [th0, th1, om0, om1, x, v, phi, phi_dot] = self.s;
        let mut theta = [th0, th1];
        let mut omega = [om0, om1];

        let mut ground = 0.0;
        for i in 0..2 {
            let load = theta[i].cos().max(0.0);
            let foot = Self::LEG_LENGTH * omega[i] * theta[i].cos();
            ground += friction * Self::TRACTION * load * (foot - v);
        }
        for i in 0..2 {
            let acc =
                (Self::TORQUE * applied[i] - Self::LEG_DAMPING * omega[i]) / Self::LEG_INERTIA;
            omega[i] += acc * TIMESTEP;
            theta[i] = wrap_angle(theta[i] + omega[i] * TIMESTEP);
        }
        let v = v + (ground - Self::BODY_DRAG * v) * TIMESTEP;
        let x = x + v * TIMESTEP;
        let pitch_acc = Self::PITCH_COUPLING * (applied[0] - applied[1])
            - Self::PITCH_STIFFNESS * phi
            - Self::PITCH_DAMPING * phi_dot;
        let phi_dot = phi_dot + pitch_acc * TIMESTEP;
        let phi = phi + phi_dot * TIMESTEP;

        self.s = [theta[0], theta[1], omega[0], omega[1], x, v, phi, phi_dot];
        self.steps += 1;
        let terminated = phi.abs() > Self::PITCH_LIMIT;
        let truncated = !terminated && self.steps >= EPISODE_LIMIT;
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.observation(),
            reward: v - action_cost(&a),
            terminated,
            truncated,
        })
    }

    fn set_dynamics(&mut self, params: DynamicsParams) -> Result<(), EnvError> {
        params.validate(2)?;
        self.dynamics = params;
        Ok(())
    }

    fn dynamics(&self) -> &DynamicsParams {
        &self.dynamics
    }

    fn state(&self) -> EnvState {
        EnvState {
            physical: self.s.to_vec(),
            steps: self.steps,
        }
    }

    fn set_state(&mut self, state: EnvState) -> Result<(), EnvError> {
        if state.physical.len() != 8 || state.physical.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::InvalidState(format!("{:?}", state.physical)));
        }
        if state.steps > EPISODE_LIMIT {
            return Err(EnvError::InvalidState(format!(
                "step counter {} over limit",
                state.steps
            )));
        }
        self.s.copy_from_slice(&state.physical);
        self.steps = state.steps;
        self.done = state.steps >= EPISODE_LIMIT;
        Ok(())
    }

    fn observation(&self) -> Vec<f64> {
        let s = &self.s;
        vec![
            s[0].cos(),
            s[0].sin(),
            s[1].cos(),
            s[1].sin(),
            s[2],
            s[3],
            s[5],
            s[6],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rollout(env: &mut dyn Environment, actions: &[Vec<f64>]) -> (Vec<EnvState>, f64) {
        let mut states = vec![env.state()];
        let mut ret = 0.0;
        for a in actions {
            let r = env.step(a).unwrap();
            ret += r.reward;
            states.push(env.state());
            if r.terminated || r.truncated {
                break;
            }
        }
        (states, ret)
    }

    fn random_actions(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn reset_is_seeded() {
        for id in [EnvId::SlipperyCar, EnvId::TwoJointWalker] {
            let mut env = id.make();
            let a = env.reset(3);
            let b = env.reset(3);
            let c = env.reset(4);
            assert_eq!(a, b);
            assert_ne!(a, c);
            assert_eq!(a.len(), id.obs_dim());
        }
    }

    #[test]
    fn reset_perturbation_is_bounded() {
        let nominal = [vec![0.0, 0.0], TwoJointWalker::NOMINAL.to_vec()];
        for (id, nominal) in [EnvId::SlipperyCar, EnvId::TwoJointWalker]
            .into_iter()
            .zip(nominal)
        {
            let mut env = id.make();
            let mut max_dev: f64 = 0.0;
            for seed in 0..1000 {
                env.reset(seed);
                for (s, n) in env.state().physical.iter().zip(&nominal) {
                    max_dev = max_dev.max(wrap_angle(s - n).abs());
                }
            }
            assert!(max_dev <= RESET_NOISE + 1e-12, "{id}: {max_dev}");
            assert!(max_dev > 0.5 * RESET_NOISE);
        }
    }

    #[test]
    fn null_action_from_rest_earns_nothing() {
        let mut car = SlipperyCar::new();
        car.set_state(EnvState {
            physical: vec![0.0, 0.0],
            steps: 0,
        })
        .unwrap();
        assert_eq!(car.step(&[0.0]).unwrap().reward, 0.0);

        let mut walker = TwoJointWalker::new();
        walker
            .set_state(EnvState {
                physical: TwoJointWalker::NOMINAL.to_vec(),
                steps: 0,
            })
            .unwrap();
        assert_eq!(walker.step(&[0.0, 0.0]).unwrap().reward, 0.0);
    }

    #[test]
    fn full_paralysis_matches_zero_action() {
        for id in [EnvId::SlipperyCar, EnvId::TwoJointWalker] {
            let dim = id.act_dim();
            let mut paralysed = id.make();
            paralysed
                .set_dynamics(DynamicsParams {
                    friction: 1.0,
                    torque_scales: vec![0.0; dim],
                })
                .unwrap();
            paralysed.reset(7);
            let (a, _) = rollout(paralysed.as_mut(), &random_actions(1, 200, dim));
            let mut idle = id.make();
            idle.reset(7);
            let (b, _) = rollout(idle.as_mut(), &vec![vec![0.0; dim]; 200]);
            assert_eq!(a, b, "{id}");
        }
    }

    #[test]
    fn friction_reduces_terminal_speed() {
        let speed = |friction: f64| {
            let mut car = SlipperyCar::new();
            car.set_dynamics(DynamicsParams {
                friction,
                torque_scales: vec![1.0],
            })
            .unwrap();
            car.reset(0);
            for _ in 0..200 {
                car.step(&[1.0]).unwrap();
            }
            car.state().physical[1]
        };
        for f in [0.5, 1.0, 2.0] {
            assert!(speed(2.0 * f) < speed(f));
        }
    }

    #[test]
    fn dynamics_round_trip_and_validation() {
        let mut env = EnvId::TwoJointWalker.make();
        let p = DynamicsParams {
            friction: 2.25,
            torque_scales: vec![0.75, 0.0],
        };
        env.set_dynamics(p.clone()).unwrap();
        assert_eq!(env.dynamics(), &p);
        assert!(env
            .set_dynamics(DynamicsParams {
                friction: -1.0,
                torque_scales: vec![1.0; 2]
            })
            .is_err());
        assert!(env
            .set_dynamics(DynamicsParams {
                friction: 1.0,
                torque_scales: vec![1.0]
            })
            .is_err());
        assert!(env
            .set_dynamics(DynamicsParams {
                friction: 1.0,
                torque_scales: vec![1.5, 1.0]
            })
            .is_err());
    }

    #[test]
    fn set_dynamics_keeps_state_and_identical_params_are_noop() {
        let mut env = EnvId::SlipperyCar.make();
        env.reset(2);
        for _ in 0..10 {
            env.step(&[0.5]).unwrap();
        }
        let before = env.state();
        env.set_dynamics(DynamicsParams {
            friction: 3.0,
            torque_scales: vec![0.5],
        })
        .unwrap();
        assert_eq!(env.state(), before);

        let actions = random_actions(5, 200, 1);
        let mut a = EnvId::SlipperyCar.make();
        a.reset(9);
        let mut b = EnvId::SlipperyCar.make();
        b.reset(9);
        b.set_dynamics(DynamicsParams::nominal(1)).unwrap();
        assert_eq!(rollout(a.as_mut(), &actions), rollout(b.as_mut(), &actions));
    }

    #[test]
    fn friction_extremes_change_returns() {
        let actions = random_actions(8, 200, 1);
        let ret = |friction| {
            let mut env = EnvId::SlipperyCar.make();
            env.set_dynamics(DynamicsParams {
                friction,
                torque_scales: vec![1.0],
            })
            .unwrap();
            env.reset(1);
            rollout(env.as_mut(), &actions).1
        };
        assert_ne!(ret(MIN_FRICTION), ret(MAX_FRICTION));
    }

    #[test]
    fn episodes_truncate_and_reject_further_steps() {
        let mut env = EnvId::SlipperyCar.make();
        env.reset(0);
        let mut last = None;
        for _ in 0..EPISODE_LIMIT {
            last = Some(env.step(&[0.2]).unwrap());
        }
        let last = last.unwrap();
        assert!(last.truncated && !last.terminated);
        assert_eq!(env.step(&[0.0]), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn falls_terminate() {
        let mut car = SlipperyCar::new();
        car.set_dynamics(DynamicsParams {
            friction: 0.5,
            torque_scales: vec![1.0],
        })
        .unwrap();
        car.reset(0);
        let end = (0..EPISODE_LIMIT)
            .map(|_| car.step(&[-1.0]).unwrap())
            .find(|r| r.terminated);
        assert!(end.is_some());

        let mut walker = TwoJointWalker::new();
        walker.reset(0);
        let end = (0..EPISODE_LIMIT)
            .map(|_| walker.step(&[1.0, -1.0]).unwrap())
            .find(|r| r.terminated || r.truncated)
            .unwrap();
        assert!(end.terminated);
    }

    #[test]
    fn errors_on_bad_actions() {
        let mut env = EnvId::TwoJointWalker.make();
        env.reset(0);
        assert!(matches!(env.step(&[0.0]), Err(EnvError::ActionDim { .. })));
        assert!(matches!(
            env.step(&[f64::NAN, 0.0]),
            Err(EnvError::NonFiniteAction(_))
        ));
    }

    #[test]
    fn deterministic_and_finite_under_random_actions() {
        for id in [EnvId::SlipperyCar, EnvId::TwoJointWalker] {
            for seed in 0..1000u64 {
                let actions = random_actions(seed, EPISODE_LIMIT, id.act_dim());
                let mut env = id.make();
                let friction = MIN_FRICTION + (seed % 15) as f64 * 0.25;
                env.set_dynamics(DynamicsParams {
                    friction,
                    torque_scales: vec![1.0; id.act_dim()],
                })
                .unwrap();
                env.reset(seed);
                let (states, ret) = rollout(env.as_mut(), &actions);
                assert!(ret.is_finite());
                assert!(states
                    .iter()
                    .all(|s| s.physical.iter().all(|v| v.is_finite())));
                if seed < 20 {
                    let mut again = id.make();
                    again
                        .set_dynamics(DynamicsParams {
                            friction,
                            torque_scales: vec![1.0; id.act_dim()],
                        })
                        .unwrap();
                    again.reset(seed);
                    let (s2, r2) = rollout(again.as_mut(), &actions);
                    assert_eq!(states, s2);
                    assert_eq!(ret.to_bits(), r2.to_bits());
                }
            }
        }
    }

    #[test]
    fn identical_transitions_have_identical_rewards() {
        let mut env = EnvId::TwoJointWalker.make();
        env.reset(4);
        env.step(&[0.3, 0.1]).unwrap();
        let snapshot = env.state();
        let r1 = env.step(&[0.5, -0.2]).unwrap();
        env.set_state(snapshot).unwrap();
        let r2 = env.step(&[0.5, -0.2]).unwrap();
        assert_eq!(r1, r2);
    }
}
