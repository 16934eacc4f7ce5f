//! Self-check suite run by `eppo verify`: closed-form and brute-force oracles
//! for the evidential loss, the advantage estimators and every hand-written
//! gradient.

use crate::diffnet::{Mlp, MlpSpec, Tape};
use crate::evidential::{
    evl_loss, evl_loss_and_raw_grad, head_transform, nll_loss, predictive_variance,
    EvidentialParams, HyperpriorConfig,
};
use crate::gae::{
    self, gae_mean, gae_var_correlated, gae_var_independent, td_residual_means, Boundary,
    GaeConfig, ValueSequence, VarianceVariant,
};
use crate::ppo::{
    actor_loss_grad, clipped_surrogate, clipped_surrogate_with_grad, critic_loss_grad, Agent,
    Algorithm, Objective, RolloutBuffer, TrainConfig, ValuePrediction,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{Continuous, StudentsT};
use std::fmt;

/// Deliberate defects used to prove the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Adds a constant to every NLL evaluation.
    NllConstant,
}

impl std::str::FromStr for Fault {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nll-constant" => Ok(Fault::NllConstant),
            other => Err(format!("unknown fault `{other}`")),
        }
    }
}

const FAULT_OFFSET: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error, in the units of `tolerance`.
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<34} measured {:.3e} tolerance {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, "  ({})", self.detail)?;
        }
        Ok(())
    }
}

struct Ctx {
    fault: Option<Fault>,
}

impl Ctx {
    fn nll(&self, m: &EvidentialParams, y: f64) -> f64 {
        let base = nll_loss(m, y).expect("valid params");
        match self.fault {
            Some(Fault::NllConstant) => base + FAULT_OFFSET,
            None => base,
        }
    }
}

type CheckFn = fn(&Ctx) -> CheckResult;

const CHECKS: &[(&str, CheckFn)] = &[
    ("evidential/student-t-oracle", check_student_t),
    ("evidential/quadrature", check_quadrature),
    ("evidential/variance-monte-carlo", check_variance_mc),
    ("evidential/evl-gradient", check_evl_gradient),
    ("diffnet/backprop-gradient", check_mlp_gradient),
    ("ppo/surrogate-gradient", check_surrogate_gradient),
    ("ppo/actor-loss-gradient", check_actor_gradient),
    (
        "ppo/critic-evidential-gradient",
        check_critic_evidential_gradient,
    ),
    ("ppo/critic-mse-gradient", check_critic_mse_gradient),
    ("gae/mean-brute-force", check_gae_mean),
    ("gae/correlated-brute-force", check_gae_correlated),
    ("gae/independent-brute-force", check_gae_independent),
    ("gae/independent-le-correlated", check_gae_ordering),
    ("gae/limit-kappa-zero", check_kappa_zero),
    ("gae/limit-lambda-zero", check_lambda_zero),
    ("gae/limit-lambda-one", check_lambda_one),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check whose name contains `filter` (all when `None`).
pub fn run_checks(filter: Option<&str>, fault: Option<Fault>) -> Vec<CheckResult> {
    let ctx = Ctx { fault };
    CHECKS
        .iter()
        .filter(|(name, _)| filter.is_none_or(|f| name.contains(f)))
        .map(|(name, check)| {
            let mut r = check(&ctx);
            r.name = name;
            r
        })
        .collect()
}

fn result(measured: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        name: "",
        passed: measured <= tolerance,
        measured,
        tolerance,
        detail,
    }
}

pub fn random_params<R: Rng + ?Sized>(rng: &mut R, alpha_min: f64) -> EvidentialParams {
    EvidentialParams::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(0.1..10.0),
        rng.random_range(alpha_min..10.0),
        rng.random_range(0.1..5.0),
    )
    .expect("sampled params are valid")
}

/// Negative log-density of the Student-t marginal.
pub fn student_t_nll(m: &EvidentialParams, y: f64) -> f64 {
    let scale = (m.beta * (1.0 + m.nu) / (m.nu * m.alpha)).sqrt();
    let dist = StudentsT::new(m.omega, scale, 2.0 * m.alpha).expect("valid Student-t");
    -dist.ln_pdf(y)
}

fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Marginal density of `y` obtained by integrating the Normal likelihood
/// against the Normal-Inverse-Gamma prior numerically over (mu, log sigma^2).
pub fn nig_marginal_quadrature(m: &EvidentialParams, y: f64, outer: usize, inner: usize) -> f64 {
    let ln_norm = m.alpha * m.beta.ln() - statrs::function::gamma::ln_gamma(m.alpha);
    let mode = (m.beta / m.alpha).ln();
    let normal = |x: f64, mean: f64, var: f64| {
        (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    };
    simpson(mode - 15.0, mode + 40.0, outer, |u| {
        let var = u.exp();
        // inverse-gamma density of sigma^2 times the d(sigma^2)/du Jacobian
        let prior = (ln_norm - m.alpha * u - m.beta / var).exp();
        let centre = (y + m.nu * m.omega) / (1.0 + m.nu);
        let spread = 12.0 * (var / (1.0 + m.nu)).sqrt();
        let likelihood = simpson(centre - spread, centre + spread, inner, |mu| {
            normal(y, mu, var) * normal(mu, m.omega, var / m.nu)
        });
        prior * likelihood
    })
}

fn check_student_t(ctx: &Ctx) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = random_params(&mut rng, 1.0 + 1e-3);
        let y = m.omega + rng.random_range(-10.0..10.0);
        worst = worst.max((ctx.nll(&m, y) - student_t_nll(&m, y)).abs());
    }
    result(worst, 1e-10, "1000 random (m, y)".into())
}

fn check_quadrature(ctx: &Ctx) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = random_params(&mut rng, 1.1);
        let y = m.omega + rng.random_range(-5.0..5.0);
        let q = nig_marginal_quadrature(&m, y, 2000, 120);
        worst = worst.max((-q.ln() - ctx.nll(&m, y)).abs());
    }
    result(worst, 1e-4, "20 random m, log-density error".into())
}

/// Largest deviation, in standard errors, between the closed-form aleatoric
/// and epistemic variances and their Monte-Carlo estimates.
pub fn variance_mc_z(m: &EvidentialParams, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let precision = Gamma::new(m.alpha, 1.0 / m.beta).expect("valid gamma");
    let mut s2 = Vec::with_capacity(samples);
    let mut mu = Vec::with_capacity(samples);
    for _ in 0..samples {
        let var = 1.0 / precision.sample(&mut rng);
        let z: f64 = rng.sample(StandardNormal);
        s2.push(var);
        mu.push(m.omega + (var / m.nu).sqrt() * z);
    }
    let n = samples as f64;
    let mean_s2 = s2.iter().sum::<f64>() / n;
    let sd_s2 = (s2.iter().map(|v| (v - mean_s2).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mean_mu = mu.iter().sum::<f64>() / n;
    let m2 = mu.iter().map(|v| (v - mean_mu).powi(2)).sum::<f64>() / n;
    let m4 = mu.iter().map(|v| (v - mean_mu).powi(4)).sum::<f64>() / n;
    let var_mu = m2 * n / (n - 1.0);
    let se_var = ((m4 - m2 * m2) / n).sqrt();
    let d = predictive_variance(m).expect("alpha > 1");
    (
        (mean_s2 - d.aleatoric).abs() / (sd_s2 / n.sqrt()),
        (var_mu - d.epistemic).abs() / se_var,
    )
}

fn check_variance_mc(_: &Ctx) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for k in 0..20 {
        // alpha > 3 keeps the sample moments used for the standard errors finite
        let m = random_params(&mut rng, 3.0);
        let (a, e) = variance_mc_z(&m, 100_000, 1000 + k);
        worst = worst.max(a).max(e);
    }
    result(worst, 3.0, "standard errors, 20 random m".into())
}

/// Worst relative disagreement between `analytic` and central differences
/// of `f` at `x`. Components below `floor` in magnitude are compared
/// absolutely against `floor`.
pub fn finite_difference_error(
    x: &[f64],
    analytic: &[f64],
    h: f64,
    floor: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(fd.abs()).max(floor);
        worst = worst.max((analytic[i] - fd).abs() / scale);
    }
    worst
}

fn check_evl_gradient(_: &Ctx) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = HyperpriorConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let raw: [f64; 4] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
        let y = rng.random_range(-5.0..5.0);
        let (_, g) = evl_loss_and_raw_grad(raw, y, &cfg).expect("finite");
        let err = finite_difference_error(&raw, &g, 1e-6, 1e-6, |r| {
            let m = head_transform([r[0], r[1], r[2], r[3]]).expect("finite");
            evl_loss(&m, y, &cfg).expect("valid")
        });
        worst = worst.max(err);
    }
    result(worst, 1e-4, "200 random raw outputs".into())
}

fn check_mlp_gradient(_: &Ctx) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst = 0.0f64;
    let mut size = 0;
    for spec in [
        MlpSpec::new(8, &[32, 32], 4),
        MlpSpec::new(3, &[16], 2).without_layer_norm(),
        MlpSpec::new(5, &[], 3),
    ] {
        let net = Mlp::new(spec).expect("valid spec");
        size = size.max(net.num_params());
        let params = net.init_params(&mut rng, 1.0);
        let input: Vec<f64> = (0..net.input_dim())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let cot: Vec<f64> = (0..net.output_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let (grads, _) = net.backward(&params, &input, &cot).expect("shapes");
        let err = finite_difference_error(&params, &grads, 1e-6, 1e-6, |p| {
            let out = net.forward(p, &input).expect("shapes");
            out.iter().zip(&cot).map(|(o, c)| o * c).sum()
        });
        worst = worst.max(err);
    }
    result(worst, 1e-4, format!("largest net {size} parameters"))
}

fn check_surrogate_gradient(_: &Ctx) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 16;
        let old: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
        // keep log-ratios away from the clipping kinks at ln(1 +- eps)
        let new: Vec<f64> = old
            .iter()
            .map(|o| {
                let mut d: f64 = rng.random_range(-0.6..0.6);
                while (d.exp() - 0.8).abs() < 1e-3 || (d.exp() - 1.2).abs() < 1e-3 {
                    d = rng.random_range(-0.6..0.6);
                }
                o + d
            })
            .collect();
        let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = clipped_surrogate_with_grad(&new, &old, &adv, 0.2).grad;
        let err = finite_difference_error(&new, &g, 1e-7, 1e-6, |x| {
            clipped_surrogate(x, &old, &adv, 0.2)
        });
        worst = worst.max(err);
    }
    result(worst, 1e-4, "100 random batches".into())
}

/// A small agent and a synthetic batch for gradient checks.
fn gradient_fixture(algorithm: Algorithm, seed: u64) -> (Agent, RolloutBuffer) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = TrainConfig {
        actor_hidden: vec![16, 16],
        critic_hidden: vec![16, 16],
        policy_init_scale: 1.0,
        ..TrainConfig::default()
    };
    let (obs_dim, act_dim) = (4, 2);
    let mut agent = Agent::new(
        obs_dim,
        act_dim,
        &cfg,
        Objective::new(algorithm, 0.1),
        &mut rng,
    )
    .expect("valid config");
    let n_net = agent.actor.num_params();
    for v in agent.actor_params[n_net..].iter_mut() {
        *v = rng.random_range(-0.5..0.5);
    }
    let mut buffer = RolloutBuffer::new(obs_dim, act_dim);
    for _ in 0..12 {
        let state: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let policy = agent.policy(&state).expect("forward");
        let action: Vec<f64> = policy
            .mean
            .iter()
            .map(|m| m + rng.random_range(-1.0..1.0))
            .collect();
        let logp = crate::ppo::policy_log_prob(&policy, &action) + rng.random_range(-0.1..0.1);
        buffer.push(
            &state,
            &action,
            logp,
            0.0,
            false,
            false,
            ValuePrediction::Scalar(0.0),
            None,
        );
        buffer.advantages.push(rng.random_range(-2.0..2.0));
        buffer.targets.push(rng.random_range(-5.0..5.0));
    }
    (agent, buffer)
}

fn check_actor_gradient(_: &Ctx) -> CheckResult {
    let (agent, buffer) = gradient_fixture(Algorithm::Ppo, 17);
    let batch: Vec<usize> = (0..buffer.len()).collect();
    let mut tapes = vec![Tape::default(); batch.len()];
    let mut grads = vec![0.0; agent.actor_params.len()];
    // wide clip range keeps every sample on the smooth unclipped branch
    let eps = 10.0;
    actor_loss_grad(&agent, &buffer, &batch, eps, &mut tapes, &mut grads).expect("finite");
    let mut probe = agent.clone();
    let x = agent.actor_params.0.clone();
    let err = finite_difference_error(&x, &grads, 1e-6, 1e-6, |p| {
        probe.actor_params.0.copy_from_slice(p);
        let mut g = vec![0.0; p.len()];
        actor_loss_grad(&probe, &buffer, &batch, eps, &mut tapes, &mut g)
            .expect("finite")
            .0
    });
    result(err, 1e-4, format!("{} parameters", x.len()))
}

fn critic_gradient_error(algorithm: Algorithm, seed: u64) -> (f64, usize) {
    let (agent, buffer) = gradient_fixture(algorithm, seed);
    let batch: Vec<usize> = (0..buffer.len()).collect();
    let mut tapes = vec![Tape::default(); batch.len()];
    let mut grads = vec![0.0; agent.critic_params.len()];
    critic_loss_grad(&agent, &buffer, &batch, &mut tapes, &mut grads).expect("finite");
    let mut probe = agent.clone();
    let x = agent.critic_params.0.clone();
    let err = finite_difference_error(&x, &grads, 1e-5, 1e-6, |p| {
        probe.critic_params.0.copy_from_slice(p);
        let mut g = vec![0.0; p.len()];
        critic_loss_grad(&probe, &buffer, &batch, &mut tapes, &mut g).expect("finite")
    });
    (err, x.len())
}

fn check_critic_evidential_gradient(_: &Ctx) -> CheckResult {
    let (err, n) = critic_gradient_error(Algorithm::EppoInd, 18);
    result(err, 1e-4, format!("{n} parameters"))
}

fn check_critic_mse_gradient(_: &Ctx) -> CheckResult {
    let (err, n) = critic_gradient_error(Algorithm::Ppo, 19);
    result(err, 1e-4, format!("{n} parameters"))
}

/// A random rollout of up to 16 steps split into episodes by random
/// terminations and truncations.
pub struct GaeCase {
    pub rewards: Vec<f64>,
    pub vals: ValueSequence,
    pub gamma: f64,
    pub lambda: f64,
}

pub fn random_gae_case<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> GaeCase {
    let n = rng.random_range(1..=16);
    let boundaries = (0..n)
        .map(|_| match rng.random_range(0..10) {
            0 => Boundary::Terminated,
            1 => Boundary::Truncated {
                mean: rng.random_range(-3.0..3.0),
                variance: rng.random_range(0.0..2.0),
            },
            _ => Boundary::Continue,
        })
        .collect();
    GaeCase {
        rewards: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        vals: ValueSequence::new(
            (0..=n).map(|_| rng.random_range(-3.0..3.0)).collect(),
            (0..=n).map(|_| rng.random_range(0.0..2.0)).collect(),
            boundaries,
        )
        .expect("consistent lengths"),
        gamma: rng.random_range(0.5..1.0),
        lambda,
    }
}

/// Successor values `V_{t+1}, ..., V_{t+n}` (mean, variance) up to the end of
/// the episode containing step `t`; the last one is the bootstrap value.
pub fn successors(vals: &ValueSequence, t: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut k = t;
    loop {
        out.push((vals.next_mean(k), vals.next_variance(k)));
        if vals.boundaries[k].ends_segment() || k + 1 == vals.horizon() {
            return out;
        }
        k += 1;
    }
}

/// `(1 - l) sum_k l^{k-1} A^(k)` with the remaining weight on the longest
/// estimator, where `A^(k)` is the k-step return minus `V_t`.
pub fn brute_force_gae_mean(case: &GaeCase, t: usize) -> f64 {
    let succ = successors(&case.vals, t);
    let n = succ.len();
    let (g, l) = (case.gamma, case.lambda);
    let k_step = |k: usize| {
        let rewards: f64 = (0..k).map(|i| g.powi(i as i32) * case.rewards[t + i]).sum();
        rewards + g.powi(k as i32) * succ[k - 1].0 - case.vals.means[t]
    };
    let mut total = 0.0;
    for k in 1..n {
        total += (1.0 - l) * l.powi(k as i32 - 1) * k_step(k);
    }
    total + l.powi(n as i32 - 1) * k_step(n)
}

/// Variance of `-V_t + ((1 - l)/l) sum_{k>=1} (g l)^k V_{t+k}` for
/// independent values (requires `l > 0`).
pub fn brute_force_correlated(case: &GaeCase, t: usize) -> f64 {
    let (g, l) = (case.gamma, case.lambda);
    let succ = successors(&case.vals, t);
    let mut var = case.vals.variances[t];
    for (k, (_, v)) in succ.iter().enumerate() {
        let coef = (1.0 - l) / l * (g * l).powi(k as i32 + 1);
        var += coef * coef * v;
    }
    var
}

/// `(1 - l)^2 sum_{k>=1} l^{2(k-1)} (var V_t + g^{2k} var V_{t+k})`: the
/// k-step estimators treated as mutually independent.
pub fn brute_force_independent(case: &GaeCase, t: usize) -> f64 {
    let (g, l) = (case.gamma, case.lambda);
    let succ = successors(&case.vals, t);
    let mut var = 0.0;
    for k in 1..=20_000usize {
        let w = l.powi(2 * (k as i32 - 1));
        if w < 1e-300 {
            break;
        }
        let next = succ.get(k - 1).map_or(0.0, |s| s.1);
        var += w * (case.vals.variances[t] + g.powi(2 * k as i32) * next);
    }
    (1.0 - l).powi(2) * var
}

fn gae_suite(lambda_range: (f64, f64), seed: u64, f: impl Fn(&GaeCase) -> f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let lambda = rng.random_range(lambda_range.0..=lambda_range.1);
        let case = random_gae_case(&mut rng, lambda);
        worst = worst.max(f(&case));
    }
    worst
}

fn check_gae_mean(_: &Ctx) -> CheckResult {
    let worst = gae_suite((0.0, 1.0), 20, |c| {
        let deltas = td_residual_means(&c.rewards, &c.vals, c.gamma).expect("lengths");
        let mean = gae_mean(&deltas, c.gamma, c.lambda, &c.vals.boundaries).expect("lengths");
        (0..mean.len())
            .map(|t| (mean[t] - brute_force_gae_mean(c, t)).abs())
            .fold(0.0, f64::max)
    });
    result(worst, 1e-10, "200 random rollouts".into())
}

fn check_gae_correlated(_: &Ctx) -> CheckResult {
    let worst = gae_suite((0.05, 1.0), 21, |c| {
        let var = gae_var_correlated(&c.vals, c.gamma, c.lambda).expect("valid");
        (0..var.len())
            .map(|t| (var[t] - brute_force_correlated(c, t)).abs())
            .fold(0.0, f64::max)
    });
    result(worst, 1e-10, "200 random rollouts".into())
}

fn check_gae_independent(_: &Ctx) -> CheckResult {
    let worst = gae_suite((0.0, 0.99), 22, |c| {
        let var = gae_var_independent(&c.vals, c.gamma, c.lambda).expect("valid");
        (0..var.len())
            .map(|t| (var[t] - brute_force_independent(c, t)).abs())
            .fold(0.0, f64::max)
    });
    result(worst, 1e-10, "200 random rollouts".into())
}

fn check_gae_ordering(_: &Ctx) -> CheckResult {
    let violations = gae_suite((0.0, 1.0), 23, |c| {
        let cor = gae_var_correlated(&c.vals, c.gamma, c.lambda).expect("valid");
        let ind = gae_var_independent(&c.vals, c.gamma, c.lambda).expect("valid");
        let mut bad = 0.0;
        for t in 0..cor.len() {
            let equal_expected = c.vals.variances[t] == 0.0 || c.lambda == 0.0;
            if ind[t] > cor[t] || (equal_expected != (ind[t] == cor[t])) {
                bad += 1.0;
            }
        }
        bad
    });
    result(violations, 0.0, "elementwise violations".into())
}

fn advantages(case: &GaeCase, variant: VarianceVariant, kappa: f64) -> Vec<f64> {
    let cfg = GaeConfig {
        gamma: case.gamma,
        lambda: case.lambda,
        kappa,
        variant,
    };
    let est = gae::estimate(&case.rewards, &case.vals, &cfg).expect("valid");
    if est.ucb.len() < 2 {
        return est.ucb;
    }
    gae::normalize_batch(&est.ucb).expect("batch")
}

fn check_kappa_zero(_: &Ctx) -> CheckResult {
    let mismatches = gae_suite((0.0, 1.0), 24, |c| {
        let base = advantages(c, VarianceVariant::Mean, 0.0);
        let cor = advantages(c, VarianceVariant::Correlated, 0.0);
        let ind = advantages(c, VarianceVariant::Independent, 0.0);
        let same = |a: &[f64]| a.iter().zip(&base).all(|(x, y)| x.to_bits() == y.to_bits());
        if same(&cor) && same(&ind) {
            0.0
        } else {
            1.0
        }
    });
    result(mismatches, 0.0, "non-identical cases".into())
}

fn check_lambda_zero(_: &Ctx) -> CheckResult {
    let mismatches = gae_suite((0.0, 0.0), 25, |c| {
        let deltas = td_residual_means(&c.rewards, &c.vals, c.gamma).expect("lengths");
        let mean = gae_mean(&deltas, c.gamma, 0.0, &c.vals.boundaries).expect("lengths");
        if mean
            .iter()
            .zip(&deltas)
            .all(|(a, d)| a.to_bits() == d.to_bits())
        {
            0.0
        } else {
            1.0
        }
    });
    result(mismatches, 0.0, "non-identical cases".into())
}

fn check_lambda_one(_: &Ctx) -> CheckResult {
    let mismatches = gae_suite((1.0, 1.0), 26, |c| {
        let cor = gae_var_correlated(&c.vals, c.gamma, 1.0).expect("valid");
        let ind = gae_var_independent(&c.vals, c.gamma, 1.0).expect("valid");
        let ok = (0..cor.len()).all(|t| cor[t] == c.vals.variances[t] && ind[t] == 0.0);
        if ok {
            0.0
        } else {
            1.0
        }
    });
    result(mismatches, 0.0, "non-identical cases".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_checks(None, None) {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn fault_is_detected() {
        let results = run_checks(Some("evidential/student-t"), Some(Fault::NllConstant));
        assert_eq!(results.len(), 1);
        assert!(!results[0].passed);
    }

    #[test]
    fn filter_selects_by_substring() {
        let names: Vec<_> = run_checks(Some("gae/limit"), None)
            .into_iter()
            .map(|r| r.name)
            .collect();
        assert_eq!(
            names,
            vec![
                "gae/limit-kappa-zero",
                "gae/limit-lambda-zero",
                "gae/limit-lambda-one"
            ]
        );
        assert!(check_names().iter().any(|n| n.starts_with("ppo/")));
    }
}
