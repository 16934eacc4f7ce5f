//! Deterministic and probabilistic generalized advantage estimation.
//!
//! Value predictions arrive as a mean and a variance per state. The advantage
//! mean is the usual GAE over the mean TD residuals. Two variance estimates are
//! propagated from the per-state value variances (rewards are treated as
//! deterministic):
//!
//! * correlated: `var[V_t] + ((1-l)/l)^2 * sum_{k>=1} (g*l)^{2k} var[V_{t+k}]`
//! * independent: `(1-l)/(1+l) * var[V_t] + ` the same tail
//!
//! Sums stop at the end of the episode segment. A terminated step contributes
//! nothing beyond itself; a truncated step (or the end of the rollout)
//! contributes the bootstrap value of its successor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Numerical guard added to the standard deviation in [`normalize_batch`].
pub const NORMALIZE_EPS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaeError {
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("negative variance {value} at index {index}")]
    NegativeVariance { index: usize, value: f64 },
    #[error("invalid GAE config: {0}")]
    InvalidConfig(String),
    #[error("batch normalization needs at least 2 entries, got {0}")]
    BatchTooSmall(usize),
}

/// How a step ends its episode segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Boundary {
    /// The next state continues the segment (`means[t + 1]` is its value).
    #[default]
    Continue,
    /// True termination: the successor has value zero.
    Terminated,
    /// Time-limit truncation; the successor's value is carried here because
    /// `means[t + 1]` belongs to the next episode's first state.
    Truncated { mean: f64, variance: f64 },
}

impl Boundary {
    pub fn ends_segment(&self) -> bool {
        !matches!(self, Boundary::Continue)
    }
}

/// Per-state value means and variances over a rollout of `T` steps
/// (`T + 1` entries, the last being the bootstrap state).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValueSequence {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub boundaries: Vec<Boundary>,
}

impl ValueSequence {
    pub fn new(
        means: Vec<f64>,
        variances: Vec<f64>,
        boundaries: Vec<Boundary>,
    ) -> Result<Self, GaeError> {
        let v = Self {
            means,
            variances,
            boundaries,
        };
        v.validate()?;
        Ok(v)
    }

    /// Deterministic values: all variances zero.
    pub fn from_means(means: Vec<f64>, boundaries: Vec<Boundary>) -> Result<Self, GaeError> {
        let variances = vec![0.0; means.len()];
        Self::new(means, variances, boundaries)
    }

    pub fn horizon(&self) -> usize {
        self.boundaries.len()
    }

    pub fn validate(&self) -> Result<(), GaeError> {
        let t = self.boundaries.len();
        expect_len("means", t + 1, self.means.len())?;
        expect_len("variances", t + 1, self.variances.len())?;
        let truncated = self.boundaries.iter().filter_map(|b| match b {
            Boundary::Truncated { variance, .. } => Some(*variance),
            _ => None,
        });
        for (index, value) in self.variances.iter().copied().chain(truncated).enumerate() {
            if !(value >= 0.0) {
                return Err(GaeError::NegativeVariance { index, value });
            }
        }
        Ok(())
    }

    /// Mean value of the successor of step `t` (zero after termination).
    pub fn next_mean(&self, t: usize) -> f64 {
        match self.boundaries[t] {
            Boundary::Continue => self.means[t + 1],
            Boundary::Terminated => 0.0,
            Boundary::Truncated { mean, .. } => mean,
        }
    }

    pub fn next_variance(&self, t: usize) -> f64 {
        match self.boundaries[t] {
            Boundary::Continue => self.variances[t + 1],
            Boundary::Terminated => 0.0,
            Boundary::Truncated { variance, .. } => variance,
        }
    }
}

fn expect_len(what: &'static str, expected: usize, got: usize) -> Result<(), GaeError> {
    if expected == got {
        Ok(())
    } else {
        Err(GaeError::LengthMismatch {
            what,
            expected,
            got,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VarianceVariant {
    /// No variance propagation; the advantage is its posterior mean.
    #[default]
    Mean,
    Correlated,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub variant: VarianceVariant,
}

impl GaeConfig {
    pub fn validate(&self) -> Result<(), GaeError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(GaeError::InvalidConfig(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(GaeError::InvalidConfig(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(GaeError::InvalidConfig(format!(
                "kappa must be >= 0, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// The confidence radius actually applied (zero for the mean variant).
    pub fn effective_kappa(&self) -> f64 {
        match self.variant {
            VarianceVariant::Mean => 0.0,
            _ => self.kappa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdvantageEstimate {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ucb: Vec<f64>,
}

/// Mean TD residuals `r_t + gamma * E[V_{t+1}] - E[V_t]`.
pub fn td_residual_means(
    rewards: &[f64],
    vals: &ValueSequence,
    gamma: f64,
) -> Result<Vec<f64>, GaeError> {
    vals.validate()?;
    expect_len("rewards", vals.horizon(), rewards.len())?;
    Ok(rewards
        .iter()
        .enumerate()
        .map(|(t, r)| r + gamma * vals.next_mean(t) - vals.means[t])
        .collect())
}

/// Backward recursion `A_t = delta_t + gamma * lambda * A_{t+1}` reset at
/// segment boundaries.
pub fn gae_mean(
    deltas: &[f64],
    gamma: f64,
    lambda: f64,
    boundaries: &[Boundary],
) -> Result<Vec<f64>, GaeError> {
    expect_len("deltas", boundaries.len(), deltas.len())?;
    let decay = gamma * lambda;
    let mut out = vec![0.0; deltas.len()];
    let mut acc = 0.0;
    for t in (0..deltas.len()).rev() {
        if boundaries[t].ends_segment() {
            acc = 0.0;
        }
        acc = deltas[t] + decay * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// `((1-l)/l)^2 * sum_{k>=1} (g*l)^{2k} var[V_{t+k}]`, written as
/// `(1-l)^2 g^2 * sum_{k>=1} (g*l)^{2(k-1)} var[V_{t+k}]` so that `l = 0`
/// needs no special case.
fn variance_tail(vals: &ValueSequence, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = vals.horizon();
    let decay2 = (gamma * lambda).powi(2);
    let lead = (1.0 - lambda).powi(2) * gamma * gamma;
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        if vals.boundaries[t].ends_segment() {
            acc = 0.0;
        }
        acc = vals.next_variance(t) + decay2 * acc;
        out[t] = lead * acc;
    }
    out
}

fn check_lambda(lambda: f64) -> Result<(), GaeError> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(GaeError::InvalidConfig(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )))
    }
}

/// Variance of the advantage when it is read as a single linear form in the
/// (independent) state values.
pub fn gae_var_correlated(
    vals: &ValueSequence,
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>, GaeError> {
    vals.validate()?;
    check_lambda(lambda)?;
    let tail = variance_tail(vals, gamma, lambda);
    Ok(tail
        .into_iter()
        .enumerate()
        .map(|(t, tail)| vals.variances[t] + tail)
        .collect())
}

/// Variance of the advantage when the k-step estimators are treated as
/// independent of each other.
pub fn gae_var_independent(
    vals: &ValueSequence,
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>, GaeError> {
    vals.validate()?;
    check_lambda(lambda)?;
    let head = (1.0 - lambda) / (1.0 + lambda);
    let tail = variance_tail(vals, gamma, lambda);
    Ok(tail
        .into_iter()
        .enumerate()
        .map(|(t, tail)| head * vals.variances[t] + tail)
        .collect())
}

/// `mean + kappa * sqrt(variance)`, elementwise.
pub fn ucb_advantage(mean: &[f64], variance: &[f64], kappa: f64) -> Result<Vec<f64>, GaeError> {
    expect_len("variance", mean.len(), variance.len())?;
    mean.iter()
        .zip(variance)
        .enumerate()
        .map(|(index, (&m, &v))| {
            if v >= 0.0 {
                Ok(m + kappa * v.sqrt())
            } else {
                Err(GaeError::NegativeVariance { index, value: v })
            }
        })
        .collect()
}

/// Standardizes a batch to zero mean and unit (population) deviation.
pub fn normalize_batch(adv: &[f64]) -> Result<Vec<f64>, GaeError> {
    if adv.len() < 2 {
        return Err(GaeError::BatchTooSmall(adv.len()));
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + NORMALIZE_EPS;
    Ok(adv.iter().map(|a| (a - mean) / denom).collect())
}

/// Full probabilistic estimate: mean, variant variance, and UCB values.
pub fn estimate(
    rewards: &[f64],
    vals: &ValueSequence,
    cfg: &GaeConfig,
) -> Result<AdvantageEstimate, GaeError> {
    cfg.validate()?;
    let deltas = td_residual_means(rewards, vals, cfg.gamma)?;
    let mean = gae_mean(&deltas, cfg.gamma, cfg.lambda, &vals.boundaries)?;
    let variance = match cfg.variant {
        VarianceVariant::Mean => vec![0.0; mean.len()],
        VarianceVariant::Correlated => gae_var_correlated(vals, cfg.gamma, cfg.lambda)?,
        VarianceVariant::Independent => gae_var_independent(vals, cfg.gamma, cfg.lambda)?,
    };
    let ucb = match cfg.variant {
        VarianceVariant::Mean => mean.clone(),
        _ => ucb_advantage(&mean, &variance, cfg.kappa)?,
    };
    Ok(AdvantageEstimate {
        mean,
        variance,
        ucb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn open(n: usize) -> Vec<Boundary> {
        vec![Boundary::Continue; n]
    }

    #[test]
    fn residual_examples() {
        let vals = ValueSequence::from_means(vec![0.0; 4], open(3)).unwrap();
        assert_eq!(
            td_residual_means(&[0.0; 3], &vals, 0.9).unwrap(),
            vec![0.0; 3]
        );

        let vals = ValueSequence::from_means(vec![2.0, 3.0], open(1)).unwrap();
        let d = td_residual_means(&[1.0], &vals, 0.99).unwrap();
        assert!((d[0] - 1.97).abs() < 1e-12);

        let vals = ValueSequence::from_means(vec![2.0, 300.0], vec![Boundary::Terminated]).unwrap();
        assert_eq!(td_residual_means(&[1.0], &vals, 0.99).unwrap(), vec![-1.0]);

        let vals = ValueSequence::from_means(
            vec![2.0, 300.0],
            vec![Boundary::Truncated {
                mean: 4.0,
                variance: 0.0,
            }],
        )
        .unwrap();
        assert!((td_residual_means(&[1.0], &vals, 0.5).unwrap()[0] - 1.0).abs() < 1e-12);

        assert!(matches!(
            td_residual_means(&[1.0, 2.0], &vals, 0.5),
            Err(GaeError::LengthMismatch {
                what: "rewards",
                ..
            })
        ));
    }

    #[test]
    fn mean_examples() {
        let d = [0.3, -1.2, 2.0];
        assert_eq!(gae_mean(&d, 0.99, 0.0, &open(3)).unwrap(), d.to_vec());

        let mut ends = open(3);
        ends[2] = Boundary::Terminated;
        assert_eq!(
            gae_mean(&[1.0; 3], 1.0, 1.0, &ends).unwrap(),
            vec![3.0, 2.0, 1.0]
        );

        // boundaries cut the sum
        let ends = vec![Boundary::Continue, Boundary::Terminated, Boundary::Continue];
        assert_eq!(
            gae_mean(&[1.0; 3], 1.0, 1.0, &ends).unwrap(),
            vec![2.0, 1.0, 1.0]
        );
    }

    #[test]
    fn mean_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..=32);
            let (g, l) = (rng.random_range(0.5..0.999), rng.random_range(0.0..1.0));
            let d: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ends: Vec<Boundary> = (0..n)
                .map(|_| {
                    if rng.random_bool(0.1) {
                        Boundary::Terminated
                    } else {
                        Boundary::Continue
                    }
                })
                .collect();
            let fast = gae_mean(&d, g, l, &ends).unwrap();
            for t in 0..n {
                let mut s = 0.0;
                for k in t..n {
                    s += (g * l).powi((k - t) as i32) * d[k];
                    if ends[k].ends_segment() {
                        break;
                    }
                }
                assert!((s - fast[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlated_examples() {
        let vals = ValueSequence::new(vec![0.0; 4], vec![1.0; 4], open(3)).unwrap();
        let v = gae_var_correlated(&vals, 0.9, 1.0).unwrap();
        assert_eq!(v, vec![1.0; 3]);

        let zero = ValueSequence::from_means(vec![0.0; 4], open(3)).unwrap();
        assert_eq!(gae_var_correlated(&zero, 0.9, 0.5).unwrap(), vec![0.0; 3]);

        let v = gae_var_correlated(&vals, 0.9, 0.5).unwrap();
        let expected = 1.0 + 0.45f64.powi(2) + 0.45f64.powi(4) + 0.45f64.powi(6);
        assert!((v[0] - expected).abs() < 1e-12, "{} vs {expected}", v[0]);
    }

    #[test]
    fn independent_examples() {
        let vals = ValueSequence::new(vec![0.0; 4], vec![1.0; 4], open(3)).unwrap();
        assert_eq!(gae_var_independent(&vals, 0.9, 1.0).unwrap(), vec![0.0; 3]);

        let ind = gae_var_independent(&vals, 0.9, 0.5).unwrap();
        let cor = gae_var_correlated(&vals, 0.9, 0.5).unwrap();
        let tail = 0.45f64.powi(2) + 0.45f64.powi(4) + 0.45f64.powi(6);
        assert!((ind[0] - (1.0 / 3.0 + tail)).abs() < 1e-12);
        assert!((cor[0] - ind[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_uses_one_step_form() {
        let vals = ValueSequence::new(vec![0.0; 4], vec![1.0, 2.0, 3.0, 4.0], open(3)).unwrap();
        let g = 0.9;
        let cor = gae_var_correlated(&vals, g, 0.0).unwrap();
        let ind = gae_var_independent(&vals, g, 0.0).unwrap();
        for t in 0..3 {
            let expected = vals.variances[t] + g * g * vals.variances[t + 1];
            assert!((cor[t] - expected).abs() < 1e-12);
            assert!((ind[t] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_carries_bootstrap_variance() {
        let ends = vec![
            Boundary::Continue,
            Boundary::Truncated {
                mean: 0.0,
                variance: 5.0,
            },
            Boundary::Continue,
        ];
        let vals = ValueSequence::new(vec![0.0; 4], vec![1.0, 1.0, 100.0, 2.0], ends).unwrap();
        let (g, l) = (0.9, 0.5);
        let v = gae_var_correlated(&vals, g, l).unwrap();
        let c2 = ((1.0 - l) / l).powi(2);
        let gl = g * l;
        // step 1 sees only the carried variance
        assert!((v[1] - (1.0 + c2 * gl.powi(2) * 5.0)).abs() < 1e-12);
        // step 0 sees V_1 and the carried variance, not the next episode
        assert!((v[0] - (1.0 + c2 * (gl.powi(2) * 1.0 + gl.powi(4) * 5.0))).abs() < 1e-12);
        assert!((v[2] - (100.0 + c2 * gl.powi(2) * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn ucb_examples() {
        assert_eq!(
            ucb_advantage(&[1.0, -2.0], &[4.0, 9.0], 0.0).unwrap(),
            vec![1.0, -2.0]
        );
        let u = ucb_advantage(&[1.0], &[4.0], 0.1).unwrap();
        assert!((u[0] - 1.2).abs() < 1e-12);
        assert!(matches!(
            ucb_advantage(&[1.0], &[-1.0], 0.1),
            Err(GaeError::NegativeVariance { index: 0, .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        let n = normalize_batch(&[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in n.iter().zip([-1.2247, 0.0, 1.2247]) {
            assert!((a - b).abs() < 1e-3);
        }
        let again = normalize_batch(&n).unwrap();
        for (a, b) in n.iter().zip(&again) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(normalize_batch(&[4.0; 5]).unwrap(), vec![0.0; 5]);
        assert!(normalize_batch(&[1.0]).is_err());
    }

    #[test]
    fn mean_variant_ignores_kappa() {
        let vals = ValueSequence::new(vec![0.5; 4], vec![2.0; 4], open(3)).unwrap();
        let r = [1.0, 0.0, -1.0];
        let mean_cfg = GaeConfig {
            gamma: 0.99,
            lambda: 0.95,
            kappa: 3.0,
            variant: VarianceVariant::Mean,
        };
        let est = estimate(&r, &vals, &mean_cfg).unwrap();
        assert_eq!(est.ucb, est.mean);
        assert_eq!(mean_cfg.effective_kappa(), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sequence() -> impl Strategy<Value = (ValueSequence, f64, f64)> {
            (1usize..24).prop_flat_map(|n| {
                (
                    proptest::collection::vec(0.0f64..5.0, n + 1),
                    proptest::collection::vec(0u8..10, n),
                    0.5f64..0.999,
                    0.0f64..=1.0,
                )
                    .prop_map(move |(var, flags, g, l)| {
                        let ends = flags
                            .into_iter()
                            .map(|f| match f {
                                0 => Boundary::Terminated,
                                1 => Boundary::Truncated {
                                    mean: 0.0,
                                    variance: 0.7,
                                },
                                _ => Boundary::Continue,
                            })
                            .collect();
                        (
                            ValueSequence::new(vec![0.0; n + 1], var, ends).unwrap(),
                            g,
                            l,
                        )
                    })
            })
        }

        proptest! {
            #[test]
            fn independent_never_exceeds_correlated((vals, g, l) in sequence()) {
                let cor = gae_var_correlated(&vals, g, l).unwrap();
                let ind = gae_var_independent(&vals, g, l).unwrap();
                for t in 0..cor.len() {
                    prop_assert!(ind[t] <= cor[t] + 1e-12);
                    prop_assert!(ind[t] >= 0.0);
                }
            }

            #[test]
            fn kappa_is_monotone(
                mean in proptest::collection::vec(-3.0f64..3.0, 1..10),
                k1 in 0.0f64..2.0, k2 in 0.0f64..2.0,
            ) {
                let var: Vec<f64> = mean.iter().map(|m| m * m).collect();
                let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
                let a = ucb_advantage(&mean, &var, lo).unwrap();
                let b = ucb_advantage(&mean, &var, hi).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!(x <= y);
                }
            }

            #[test]
            fn normalization_preserves_order_and_absorbs_shifts(
                adv in proptest::collection::vec(-10.0f64..10.0, 2..40),
                shift in -50.0f64..50.0,
            ) {
                let a = normalize_batch(&adv).unwrap();
                let shifted: Vec<f64> = adv.iter().map(|v| v + shift).collect();
                let b = normalize_batch(&shifted).unwrap();
                for i in 0..adv.len() {
                    prop_assert!((a[i] - b[i]).abs() < 1e-6);
                    for j in 0..adv.len() {
                        if adv[i] < adv[j] {
                            prop_assert!(a[i] <= a[j]);
                        }
                    }
                }
            }
        }
    }
}
