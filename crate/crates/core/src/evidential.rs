//! Evidential value head.
//!
//! The critic predicts the four parameters `m = (omega, nu, alpha, beta)` of a
//! Normal-Inverse-Gamma prior over the mean and variance of the state value.
//! Integrating the prior out gives a Student-t predictive density; its
//! negative log (the type-II likelihood loss) plus a hyperprior penalty is the
//! critic objective.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};
use std::f64::consts::PI;
use thiserror::Error;

/// Additive floor keeping `nu`, `alpha - 1` and `beta` strictly positive.
pub const POSITIVITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvidentialError {
    #[error("non-finite head output {0:?}")]
    NonFiniteRaw([f64; 4]),
    #[error("invalid evidential parameters: {0}")]
    InvalidParams(String),
    #[error("alpha = {alpha} is outside the shifted gamma support (shift {shift})")]
    OutsideHyperpriorSupport { alpha: f64, shift: f64 },
    #[error("invalid hyperprior config: {0}")]
    InvalidConfig(String),
}

/// Normal-Inverse-Gamma parameters for a single state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidentialParams {
    pub omega: f64,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl EvidentialParams {
    pub fn new(omega: f64, nu: f64, alpha: f64, beta: f64) -> Result<Self, EvidentialError> {
        let m = Self {
            omega,
            nu,
            alpha,
            beta,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), EvidentialError> {
        let finite = [self.omega, self.nu, self.alpha, self.beta]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.nu <= 0.0 || self.alpha <= 1.0 || self.beta <= 0.0 {
            return Err(EvidentialError::InvalidParams(format!(
                "need finite values with nu > 0, alpha > 1, beta > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.omega, self.nu, self.alpha, self.beta]
    }
}

/// Hyperpriors on the evidential parameters and the regularization weight.
///
/// Gamma densities use the shape/rate convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperpriorConfig {
    pub mu_omega0: f64,
    pub sigma_omega0: f64,
    pub nu_shape: f64,
    pub nu_rate: f64,
    pub alpha_shape: f64,
    pub alpha_rate: f64,
    pub beta_shape: f64,
    pub beta_rate: f64,
    pub alpha_shift: f64,
    pub xi: f64,
}

impl Default for HyperpriorConfig {
    fn default() -> Self {
        Self {
            mu_omega0: 0.0,
            sigma_omega0: 100.0,
            nu_shape: 5.0,
            nu_rate: 1.0,
            alpha_shape: 5.0,
            alpha_rate: 1.0,
            beta_shape: 5.0,
            beta_rate: 1.0,
            alpha_shift: 1.0,
            xi: 0.01,
        }
    }
}

impl HyperpriorConfig {
    pub fn validate(&self) -> Result<(), EvidentialError> {
        let positive = [
            ("sigma_omega0", self.sigma_omega0),
            ("nu_shape", self.nu_shape),
            ("nu_rate", self.nu_rate),
            ("alpha_shape", self.alpha_shape),
            ("alpha_rate", self.alpha_rate),
            ("beta_shape", self.beta_shape),
            ("beta_rate", self.beta_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EvidentialError::InvalidConfig(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(EvidentialError::InvalidConfig(format!(
                "xi must be >= 0, got {}",
                self.xi
            )));
        }
        if !self.mu_omega0.is_finite() || !self.alpha_shift.is_finite() {
            return Err(EvidentialError::InvalidConfig(
                "mu_omega0 and alpha_shift must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Split of the predictive variance into its two sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyDecomposition {
    pub aleatoric: f64,
    pub epistemic: f64,
    pub total: f64,
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps the four raw critic outputs onto valid NIG parameters.
pub fn head_transform(raw: [f64; 4]) -> Result<EvidentialParams, EvidentialError> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(EvidentialError::NonFiniteRaw(raw));
    }
    Ok(EvidentialParams {
        omega: raw[0],
        nu: softplus(raw[1]) + POSITIVITY_FLOOR,
        alpha: softplus(raw[2]) + 1.0 + POSITIVITY_FLOOR,
        beta: softplus(raw[3]) + POSITIVITY_FLOOR,
    })
}

/// Diagonal Jacobian of [`head_transform`].
pub fn head_transform_derivative(raw: [f64; 4]) -> [f64; 4] {
    [1.0, sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3])]
}

/// Negative log of the Student-t evidence `p(y | m)`.
pub fn nll_loss(m: &EvidentialParams, y: f64) -> Result<f64, EvidentialError> {
    m.validate()?;
    Ok(nll_unchecked(m, y))
}

fn nll_unchecked(m: &EvidentialParams, y: f64) -> f64 {
    let EvidentialParams {
        omega,
        nu,
        alpha,
        beta,
    } = *m;
    let big_omega = 2.0 * beta * (1.0 + nu);
    let d = y - omega;
    0.5 * (PI / nu).ln() - alpha * big_omega.ln()
        + (alpha + 0.5) * (d * d * nu + big_omega).ln()
        + ln_gamma(alpha)
        - ln_gamma(alpha + 0.5)
}

/// Gradient of [`nll_loss`] with respect to `(omega, nu, alpha, beta)`.
pub fn nll_grad(m: &EvidentialParams, y: f64) -> [f64; 4] {
    let EvidentialParams {
        omega,
        nu,
        alpha,
        beta,
    } = *m;
    let big_omega = 2.0 * beta * (1.0 + nu);
    let d = y - omega;
    let denom = d * d * nu + big_omega;
    let a = alpha + 0.5;
    [
        -a * 2.0 * nu * d / denom,
        -0.5 / nu - alpha * 2.0 * beta / big_omega + a * (d * d + 2.0 * beta) / denom,
        -big_omega.ln() + denom.ln() + digamma(alpha) - digamma(alpha + 0.5),
        -alpha / beta + a * 2.0 * (1.0 + nu) / denom,
    ]
}

fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (2.0 * PI).ln() - sd.ln() - 0.5 * z * z
}

/// `log p(m)` under the hyperpriors (alpha enters through `alpha - alpha_shift`).
pub fn hyperprior_log_density(
    m: &EvidentialParams,
    cfg: &HyperpriorConfig,
) -> Result<f64, EvidentialError> {
    m.validate()?;
    cfg.validate()?;
    let shifted = m.alpha - cfg.alpha_shift;
    if shifted <= 0.0 {
        return Err(EvidentialError::OutsideHyperpriorSupport {
            alpha: m.alpha,
            shift: cfg.alpha_shift,
        });
    }
    Ok(normal_log_pdf(m.omega, cfg.mu_omega0, cfg.sigma_omega0)
        + gamma_log_pdf(m.nu, cfg.nu_shape, cfg.nu_rate)
        + gamma_log_pdf(shifted, cfg.alpha_shape, cfg.alpha_rate)
        + gamma_log_pdf(m.beta, cfg.beta_shape, cfg.beta_rate))
}

fn hyperprior_log_density_grad(m: &EvidentialParams, cfg: &HyperpriorConfig) -> [f64; 4] {
    let s2 = cfg.sigma_omega0 * cfg.sigma_omega0;
    [
        -(m.omega - cfg.mu_omega0) / s2,
        (cfg.nu_shape - 1.0) / m.nu - cfg.nu_rate,
        (cfg.alpha_shape - 1.0) / (m.alpha - cfg.alpha_shift) - cfg.alpha_rate,
        (cfg.beta_shape - 1.0) / m.beta - cfg.beta_rate,
    ]
}

/// `nll_loss(m, y) - xi * log p(m)`.
pub fn evl_loss(
    m: &EvidentialParams,
    y: f64,
    cfg: &HyperpriorConfig,
) -> Result<f64, EvidentialError> {
    let nll = nll_loss(m, y)?;
    if cfg.xi == 0.0 {
        cfg.validate()?;
        return Ok(nll);
    }
    Ok(nll - cfg.xi * hyperprior_log_density(m, cfg)?)
}

/// Gradient of [`evl_loss`] with respect to `(omega, nu, alpha, beta)`.
pub fn evl_grad(
    m: &EvidentialParams,
    y: f64,
    cfg: &HyperpriorConfig,
) -> Result<[f64; 4], EvidentialError> {
    m.validate()?;
    let mut g = nll_grad(m, y);
    if cfg.xi != 0.0 {
        let h = hyperprior_log_density_grad(m, cfg);
        for (gi, hi) in g.iter_mut().zip(h) {
            *gi -= cfg.xi * hi;
        }
    }
    Ok(g)
}

/// Loss and its gradient with respect to the raw head outputs.
pub fn evl_loss_and_raw_grad(
    raw: [f64; 4],
    y: f64,
    cfg: &HyperpriorConfig,
) -> Result<(f64, [f64; 4]), EvidentialError> {
    let m = head_transform(raw)?;
    let loss = evl_loss(&m, y, cfg)?;
    let g = evl_grad(&m, y, cfg)?;
    let d = head_transform_derivative(raw);
    Ok((loss, [g[0] * d[0], g[1] * d[1], g[2] * d[2], g[3] * d[3]]))
}

pub fn predictive_mean(m: &EvidentialParams) -> f64 {
    m.omega
}

pub fn predictive_variance(
    m: &EvidentialParams,
) -> Result<UncertaintyDecomposition, EvidentialError> {
    if !(m.alpha > 1.0) {
        return Err(EvidentialError::InvalidParams(format!(
            "predictive variance needs alpha > 1, got {}",
            m.alpha
        )));
    }
    let aleatoric = m.beta / (m.alpha - 1.0);
    let epistemic = m.beta / (m.nu * (m.alpha - 1.0));
    Ok(UncertaintyDecomposition {
        aleatoric,
        epistemic,
        total: aleatoric + epistemic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Continuous, StudentsT};

    fn m(omega: f64, nu: f64, alpha: f64, beta: f64) -> EvidentialParams {
        EvidentialParams::new(omega, nu, alpha, beta).unwrap()
    }

    fn student_t_nll(m: &EvidentialParams, y: f64) -> f64 {
        let scale2 = m.beta * (1.0 + m.nu) / (m.nu * m.alpha);
        -StudentsT::new(m.omega, scale2.sqrt(), 2.0 * m.alpha)
            .unwrap()
            .ln_pdf(y)
    }

    #[test]
    fn head_transform_at_zero() {
        let p = head_transform([0.0; 4]).unwrap();
        let ln2 = 2f64.ln();
        assert_eq!(p.omega, 0.0);
        assert!((p.nu - (ln2 + 1e-6)).abs() < 1e-15);
        assert!((p.alpha - (ln2 + 1.0 + 1e-6)).abs() < 1e-15);
        assert!((p.beta - (ln2 + 1e-6)).abs() < 1e-15);
    }

    #[test]
    fn head_transform_limits() {
        let p = head_transform([0.0, -1e6, 10.0, -800.0]).unwrap();
        assert!(p.nu > 0.0 && (p.nu - 1e-6).abs() < 1e-12);
        // softplus(10) = 10 + ln(1 + e^-10)
        let expected = 10.0 + (-10f64).exp().ln_1p() + 1.0 + POSITIVITY_FLOOR;
        assert!((p.alpha - expected).abs() < 1e-12, "{}", p.alpha);
        assert!(p.beta > 0.0);
        assert!(head_transform([f64::NAN, 0.0, 0.0, 0.0]).is_err());
        assert!(head_transform([0.0, f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn nll_reference_value() {
        let v = nll_loss(&m(0.0, 1.0, 2.0, 1.0), 0.0).unwrap();
        assert!((v - 0.98079).abs() < 1e-4, "{v}");
        assert!((v - student_t_nll(&m(0.0, 1.0, 2.0, 1.0), 0.0)).abs() < 1e-12);
    }

    #[test]
    fn nll_is_minimized_at_omega() {
        let p = m(1.5, 0.7, 2.3, 0.4);
        let at = nll_loss(&p, 1.5).unwrap();
        for dy in [-2.0, -0.1, 0.01, 0.5, 3.0] {
            assert!(nll_loss(&p, 1.5 + dy).unwrap() > at);
        }
    }

    #[test]
    fn nll_heavy_tail_slope() {
        let p = m(0.0, 1.0, 2.0, 1.0);
        let a = nll_loss(&p, 1e3).unwrap();
        let b = nll_loss(&p, 1e4).unwrap();
        let slope = (b - a) / (10f64.ln());
        assert!((slope - 2.0 * 2.5).abs() < 1e-4, "{slope}");
    }

    #[test]
    fn nll_rejects_invalid() {
        let bad = EvidentialParams {
            omega: 0.0,
            nu: 1.0,
            alpha: 0.9,
            beta: 1.0,
        };
        assert!(nll_loss(&bad, 0.0).is_err());
        assert!(predictive_variance(&bad).is_err());
    }

    #[test]
    fn nll_matches_student_t_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = m(
                rng.random_range(-5.0..5.0),
                rng.random_range(0.01..20.0),
                rng.random_range(1.01..30.0),
                rng.random_range(0.01..20.0),
            );
            let y = p.omega + rng.random_range(-10.0..10.0);
            let a = nll_loss(&p, y).unwrap();
            let b = student_t_nll(&p, y);
            assert!((a - b).abs() < 1e-10, "{a} vs {b} at {p:?}");
        }
    }

    #[test]
    fn hyperprior_components() {
        let cfg = HyperpriorConfig::default();
        // nu contribution under Gam(5, 1) at nu = 5
        let nu_term = gamma_log_pdf(5.0, 5.0, 1.0);
        assert!((nu_term - (-1.74030)).abs() < 1e-5, "{nu_term}");
        let omega_term = normal_log_pdf(0.0, 0.0, 100.0);
        let expected = -(100.0 * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((omega_term - expected).abs() < 1e-12, "{omega_term}");
        assert!((omega_term - (-5.524109)).abs() < 1e-6);
        let wider = normal_log_pdf(0.0, 0.0, 200.0);
        assert!((omega_term - wider - 2f64.ln()).abs() < 1e-12);

        let p = m(0.0, 5.0, 6.0, 5.0);
        let total = hyperprior_log_density(&p, &cfg).unwrap();
        assert!((total - (omega_term + 3.0 * nu_term)).abs() < 1e-12);

        let outside = m(0.0, 1.0, 1.0 + 1e-9, 1.0);
        let shifted = HyperpriorConfig {
            alpha_shift: 1.5,
            ..cfg
        };
        assert!(matches!(
            hyperprior_log_density(&outside, &shifted),
            Err(EvidentialError::OutsideHyperpriorSupport { .. })
        ));
    }

    #[test]
    fn evl_composition() {
        let p = m(0.0, 1.0, 2.0, 1.0);
        let zero = HyperpriorConfig {
            xi: 0.0,
            ..Default::default()
        };
        assert_eq!(
            evl_loss(&p, 0.3, &zero).unwrap(),
            nll_loss(&p, 0.3).unwrap()
        );

        let cfg = HyperpriorConfig::default();
        let expected = 0.98079
            - 0.01
                * (normal_log_pdf(0.0, 0.0, 100.0)
                    + gamma_log_pdf(1.0, 5.0, 1.0)
                    + gamma_log_pdf(1.0, 5.0, 1.0)
                    + gamma_log_pdf(1.0, 5.0, 1.0));
        let got = evl_loss(&p, 0.0, &cfg).unwrap();
        assert!((got - expected).abs() < 1e-4, "{got} vs {expected}");
    }

    #[test]
    fn raw_gradient_matches_finite_differences() {
        let cfg = HyperpriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let raw: [f64; 4] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
            let y = rng.random_range(-4.0..4.0);
            let (_, g) = evl_loss_and_raw_grad(raw, y, &cfg).unwrap();
            for i in 0..4 {
                let h = 1e-5;
                let mut up = raw;
                up[i] += h;
                let mut down = raw;
                down[i] -= h;
                let fd = (evl_loss_and_raw_grad(up, y, &cfg).unwrap().0
                    - evl_loss_and_raw_grad(down, y, &cfg).unwrap().0)
                    / (2.0 * h);
                let tol = 1e-4 * fd.abs().max(g[i].abs()) + 1e-6;
                assert!((fd - g[i]).abs() <= tol, "component {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn predictive_moments() {
        let p = m(3.5, 1.0, 2.0, 1.0);
        assert_eq!(predictive_mean(&p), 3.5);
        assert_eq!(predictive_mean(&m(3.5, 9.0, 7.0, 0.1)), 3.5);
        let d = predictive_variance(&p).unwrap();
        assert_eq!((d.aleatoric, d.epistemic, d.total), (1.0, 1.0, 2.0));

        let big_nu = predictive_variance(&m(0.0, 1e12, 2.0, 1.0)).unwrap();
        assert!(big_nu.epistemic < 1e-11);
        assert!((big_nu.total - big_nu.aleatoric).abs() < 1e-11);

        let scaled = predictive_variance(&m(0.0, 1.0, 2.0, 3.0)).unwrap();
        assert_eq!(scaled.total, 3.0 * d.total);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = EvidentialParams> {
            (-5.0f64..5.0, 0.01f64..10.0, 1.01f64..10.0, 0.01f64..10.0)
                .prop_map(|(o, n, a, b)| m(o, n, a, b))
        }

        proptest! {
            #[test]
            fn total_is_sum_of_parts(p in params()) {
                let d = predictive_variance(&p).unwrap();
                prop_assert_eq!(d.total, d.aleatoric + d.epistemic);
                prop_assert!(d.aleatoric >= 0.0 && d.epistemic >= 0.0);
            }

            #[test]
            fn evl_non_decreasing_in_residual(p in params(), r1 in 0.0f64..20.0, r2 in 0.0f64..20.0) {
                let cfg = HyperpriorConfig::default();
                let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
                let a = evl_loss(&p, p.omega + lo, &cfg).unwrap();
                let b = evl_loss(&p, p.omega - hi, &cfg).unwrap();
                prop_assert!(a <= b + 1e-12);
            }
        }
    }
}
