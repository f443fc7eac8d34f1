//! Drift constants, stepsize schedules and closed-form finite-sample bounds.
//!
//! Logarithms are natural throughout.

use serde::{Deserialize, Serialize};
use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::norms::EquivalenceConstants;

/// Relative slack when comparing a stepsize against `alpha2 / alpha3`, so a
/// schedule built with `K = eps alpha3 / alpha2` is not rejected by rounding.
const STEP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaConstants {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub gamma: f64,
    pub mu: f64,
    pub smoothness: f64,
    pub equiv_cs: EquivalenceConstants,
    pub equiv_es: EquivalenceConstants,
    pub noise_b: f64,
}

impl AlphaConstants {
    /// Largest admissible initial stepsize `alpha2 / alpha3`.
    pub fn max_step(&self) -> f64 {
        self.alpha2 / self.alpha3
    }
}

pub fn compute_alphas(
    gamma: f64,
    mu: f64,
    smoothness: f64,
    equiv_cs: EquivalenceConstants,
    equiv_es: EquivalenceConstants,
    noise_b: f64,
) -> Result<AlphaConstants> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    if !(smoothness > 0.0 && smoothness.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "smoothness constant must be positive, got {smoothness}"
        )));
    }
    if !(noise_b >= 0.0 && noise_b.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise B must be nonnegative, got {noise_b}")));
    }
    for c in [equiv_cs, equiv_es] {
        if !(c.lower > 0.0 && c.lower <= c.upper && c.upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "equivalence constants need 0 < lower <= upper, got ({}, {})",
                c.lower, c.upper
            )));
        }
    }
    let (l_cs, u_cs) = (equiv_cs.lower.powi(2), equiv_cs.upper.powi(2));
    let (l_es, u_es) = (equiv_es.lower.powi(2), equiv_es.upper.powi(2));
    let alpha1 = (1.0 + mu / l_cs) / (1.0 + mu / u_cs);
    let alpha2 = 1.0 - gamma * alpha1.sqrt();
    if alpha2 <= 0.0 {
        return Err(Error::Infeasible { alpha2 });
    }
    let alpha3 = 4.0 * u_cs * u_es * (noise_b + 2.0) * smoothness * (l_cs + mu) / (mu * l_cs * l_es);
    let alpha4 = alpha3 / (2.0 * (noise_b + 2.0));
    Ok(AlphaConstants {
        alpha1,
        alpha2,
        alpha3,
        alpha4,
        gamma,
        mu,
        smoothness,
        equiv_cs,
        equiv_es,
        noise_b,
    })
}

/// Exponent `p = 4 ln d` of the dimension-tuned smoothing norm.
pub fn corollary3_exponent(d: usize) -> f64 {
    4.0 * (d as f64).ln()
}

/// `mu = (1/2 + 1/(2 gamma))^2 - 1`.
pub fn corollary3_mu(gamma: f64) -> f64 {
    (0.5 + 0.5 / gamma).powi(2) - 1.0
}

/// Smallest `gamma` for which the dimension-tuned constants give
/// `alpha1 <= 3/2`. There `alpha1 = sqrt(e) (1 + mu) / (sqrt(e) + mu)`, which
/// increases in `mu` towards `sqrt(e) > 3/2`; below this `gamma` the bound
/// `alpha1 <= 3/2` is false and only `alpha1 <= sqrt(e)` survives.
pub fn corollary3_gamma_threshold() -> f64 {
    let r = E.sqrt();
    let mu = 0.5 * r / (r - 1.5);
    1.0 / (2.0 * (1.0 + mu).sqrt() - 1.0)
}

/// Exact constants for a sup-norm contraction with the `l_{4 ln d}` smoothing
/// norm and `mu = (1/2 + 1/(2 gamma))^2 - 1`; both equivalence pairs are
/// `(1, d^(1/p)) = (1, e^(1/4))`.
///
/// The guaranteed inequalities `alpha2 >= (1 - gamma)/2`,
/// `alpha3 <= 32 e (B + 2) ln d / (1 - gamma)`, `alpha4 <= 16 e ln d / (1 - gamma)`
/// and `alpha1 <= sqrt(e)` are asserted. `alpha1 <= 3/2` holds only for
/// `gamma >= corollary3_gamma_threshold()`.
pub fn corollary3_constants(gamma: f64, d: usize, noise_b: f64) -> Result<AlphaConstants> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("dimension must be at least 2, got {d}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let p = corollary3_exponent(d);
    let equiv = EquivalenceConstants {
        lower: 1.0,
        upper: (d as f64).powf(1.0 / p),
    };
    let alphas = compute_alphas(gamma, corollary3_mu(gamma), p - 1.0, equiv, equiv, noise_b)?;
    let ln_d = (d as f64).ln();
    let tight = 1.0 + 1e-12;
    assert!(alphas.alpha1 <= E.sqrt() * tight, "alpha1 = {}", alphas.alpha1);
    assert!(alphas.alpha2 * tight >= 0.5 * (1.0 - gamma), "alpha2 = {}", alphas.alpha2);
    assert!(
        alphas.alpha3 <= 32.0 * E * (noise_b + 2.0) * ln_d / (1.0 - gamma) * tight,
        "alpha3 = {}",
        alphas.alpha3
    );
    assert!(
        alphas.alpha4 <= 16.0 * E * ln_d / (1.0 - gamma) * tight,
        "alpha4 = {}",
        alphas.alpha4
    );
    Ok(alphas)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsizeSchedule {
    Constant { eps: f64 },
    /// `eps / (k + offset)^xi`.
    Polynomial { eps: f64, xi: f64, offset: f64 },
}

impl StepsizeSchedule {
    pub fn step(&self, k: usize) -> f64 {
        match *self {
            StepsizeSchedule::Constant { eps } => eps,
            StepsizeSchedule::Polynomial { eps, xi, offset } => {
                let base = k as f64 + offset;
                if xi == 1.0 {
                    eps / base
                } else {
                    eps / base.powf(xi)
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepsizeSchedule::Constant { eps } => {
                if !(eps >= 0.0 && eps.is_finite()) {
                    return Err(Error::InvalidParameter(format!("stepsize must be >= 0, got {eps}")));
                }
            }
            StepsizeSchedule::Polynomial { eps, xi, offset } => {
                if !(eps > 0.0 && eps.is_finite()) {
                    return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
                }
                check_xi(xi)?;
                if !(offset >= 1.0 && offset.is_finite()) {
                    return Err(Error::InvalidParameter(format!("K must be >= 1, got {offset}")));
                }
            }
        }
        Ok(())
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::InvalidParameter(format!("xi must lie in (0, 1], got {xi}")));
    }
    Ok(())
}

/// `K` making `eps / K^xi <= alpha2 / alpha3` (and, for `xi < 1`, large
/// enough for the second-moment recursion).
pub fn schedule_offset(alphas: &AlphaConstants, eps: f64, xi: f64) -> Result<f64> {
    check_xi(xi)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let ratio = eps * alphas.alpha3 / alphas.alpha2;
    Ok(if xi == 1.0 {
        ratio.max(1.0)
    } else {
        let a = ratio.powf(1.0 / xi);
        let b = (2.0 * xi / (alphas.alpha2 * eps)).powf(1.0 / (1.0 - xi));
        1.0f64.max(a).max(b)
    })
}

/// Constant schedule when `xi` is `None`, else `eps / (k + K)^xi` with the
/// offset from [`schedule_offset`].
pub fn build_schedule(alphas: &AlphaConstants, eps: f64, xi: Option<f64>) -> Result<StepsizeSchedule> {
    match xi {
        None => {
            check_initial_step(alphas, eps)?;
            Ok(StepsizeSchedule::Constant { eps })
        }
        Some(xi) => Ok(StepsizeSchedule::Polynomial {
            eps,
            xi,
            offset: schedule_offset(alphas, eps, xi)?,
        }),
    }
}

fn check_initial_step(alphas: &AlphaConstants, eps0: f64) -> Result<()> {
    let limit = alphas.max_step();
    if !(eps0 >= 0.0) || eps0 > limit * (1.0 + STEP_SLACK) {
        return Err(Error::StepsizeTooLarge { eps0, limit });
    }
    Ok(())
}

/// The problem-dependent inputs shared by the contraction bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConstants {
    /// `||x_0 - x*||_c^2`.
    pub initial_error_sq: f64,
    pub a: f64,
    pub b: f64,
    /// `||x*||_c`.
    pub x_star_norm: f64,
}

impl ProblemConstants {
    /// `A + 2 B ||x*||_c^2`.
    pub fn variance_factor(&self) -> f64 {
        self.a + 2.0 * self.b * self.x_star_norm.powi(2)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("initial error", self.initial_error_sq),
            ("A", self.a),
            ("B", self.b),
            ("||x*||", self.x_star_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Bound curve for `k = 0..=k_max`, accumulated with running products:
/// `T1_{k+1} = (1 - alpha2 eps_k) T1_k` and `T2_{k+1} = (1 - alpha2 eps_k) T2_k + eps_k^2`.
pub fn theorem1_bound(
    alphas: &AlphaConstants,
    schedule: &StepsizeSchedule,
    problem: &ProblemConstants,
    k_max: usize,
) -> Result<Vec<f64>> {
    schedule.validate()?;
    problem.validate()?;
    check_initial_step(alphas, schedule.step(0))?;
    let head = alphas.alpha1 * problem.initial_error_sq;
    let tail = alphas.alpha4 * problem.variance_factor();
    let mut t1 = 1.0;
    let mut t2 = 0.0;
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        out.push(head * t1 + tail * t2);
        let eps = schedule.step(k);
        let factor = 1.0 - alphas.alpha2 * eps;
        t1 *= factor;
        t2 = factor * t2 + eps * eps;
    }
    Ok(out)
}

pub fn corollary1_bound(alphas: &AlphaConstants, eps: f64, problem: &ProblemConstants, k: usize) -> Result<f64> {
    problem.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    check_initial_step(alphas, eps)?;
    Ok(alphas.alpha1 * problem.initial_error_sq * (1.0 - alphas.alpha2 * eps).powi(k as i32)
        + problem.variance_factor() * alphas.alpha4 * eps / alphas.alpha2)
}

/// Which closed form of the diminishing-stepsize corollary applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiminishingCase {
    /// `xi = 1`, `alpha2 eps < 1`.
    Slow,
    /// `xi = 1`, `alpha2 eps = 1`; the log-augmented rate.
    Critical,
    /// `xi = 1`, `alpha2 eps > 1`; the optimal `1/k` rate.
    Fast,
    /// `xi < 1`.
    Polynomial,
}

pub fn diminishing_case(alphas: &AlphaConstants, eps: f64, xi: f64) -> Result<DiminishingCase> {
    check_xi(xi)?;
    Ok(if xi < 1.0 {
        DiminishingCase::Polynomial
    } else {
        let r = alphas.alpha2 * eps;
        if r < 1.0 {
            DiminishingCase::Slow
        } else if r == 1.0 {
            DiminishingCase::Critical
        } else {
            DiminishingCase::Fast
        }
    })
}

/// Diminishing-stepsize bound at iteration `k` for `eps / (k + K)^xi` with `K`
/// from [`schedule_offset`].
pub fn corollary2_bound(
    alphas: &AlphaConstants,
    eps: f64,
    xi: f64,
    problem: &ProblemConstants,
    k: usize,
) -> Result<f64> {
    problem.validate()?;
    let offset = schedule_offset(alphas, eps, xi)?;
    let case = diminishing_case(alphas, eps, xi)?;
    let (a1, a2, a4) = (alphas.alpha1, alphas.alpha2, alphas.alpha4);
    let head = a1 * problem.initial_error_sq;
    let c = problem.variance_factor();
    let kk = k as f64 + offset;
    let r = a2 * eps;
    Ok(match case {
        DiminishingCase::Slow => {
            head * (offset / kk).powf(r) + 4.0 * eps * eps * a4 / (1.0 - r) * c / kk.powf(r)
        }
        DiminishingCase::Critical => head * offset / kk + 4.0 * a4 / (a2 * a2) * c * kk.ln() / kk,
        DiminishingCase::Fast => head * (offset / kk).powf(r) + 4.0 * E * eps * eps * a4 / (r - 1.0) * c / kk,
        DiminishingCase::Polynomial => {
            let decay = (-r / (1.0 - xi) * (kk.powf(1.0 - xi) - offset.powf(1.0 - xi))).exp();
            head * decay + 2.0 * eps * a4 / a2 * c / kk.powf(xi)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragedRegime {
    /// `eps_k = eps`.
    Constant,
    /// `eps_k = eps / sqrt(k + 1)`.
    InvSqrt,
    /// `eps_k = eps / (k + 1)`.
    InvK,
}

impl AveragedRegime {
    pub fn schedule(self, eps: f64) -> StepsizeSchedule {
        match self {
            AveragedRegime::Constant => StepsizeSchedule::Constant { eps },
            AveragedRegime::InvSqrt => StepsizeSchedule::Polynomial {
                eps,
                xi: 0.5,
                offset: 1.0,
            },
            AveragedRegime::InvK => StepsizeSchedule::Polynomial {
                eps,
                xi: 1.0,
                offset: 1.0,
            },
        }
    }
}

/// Bound on `min_{i <= k} E ||H(x_i) - x_i||_2^2` for non-expansive `H` with
/// `D` the initial distance to the fixed-point set and noise `A` (`B = 0`).
pub fn theorem2_bound(d: f64, a: f64, eps: f64, regime: AveragedRegime, k: usize) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(d >= 0.0 && a >= 0.0) {
        return Err(Error::InvalidParameter("D and A must be nonnegative".into()));
    }
    let kf = k as f64;
    let d2 = d * d;
    let denom = (1.0 - eps) * eps;
    match regime {
        AveragedRegime::Constant => Ok(d2 / ((kf + 1.0) * denom) + a * eps / (1.0 - eps)),
        AveragedRegime::InvSqrt | AveragedRegime::InvK if k == 0 => Err(Error::InvalidParameter(
            "diminishing-stepsize bounds are defined for k >= 1 only".into(),
        )),
        AveragedRegime::InvSqrt => {
            Ok((d2 + a * eps * eps * (1.0 + kf.ln())) / (2.0 * denom * ((kf + 1.0).sqrt() - 1.0)))
        }
        AveragedRegime::InvK => Ok((d2 + 2.0 * a * eps * eps) / (denom * (kf + 1.0).ln())),
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

fn check_alpha1_regime(name: &str, v: f64) -> Result<()> {
    let threshold = corollary3_gamma_threshold();
    if v < threshold {
        return Err(Error::InvalidParameter(format!(
            "{name} = {v} is below {threshold:.6}; the closed form uses alpha1 <= 3/2, which fails there"
        )));
    }
    Ok(())
}

fn check_count(name: &str, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("{name} must be at least 2, got {n}")));
    }
    Ok(())
}

/// V-trace schedule: `eps = 4/(1-gamma)`, `K = 64 (A + 2) ln|S| / (1-gamma)^3`.
pub fn theorem3_schedule(gamma: f64, a: f64, n_states: usize) -> Result<StepsizeSchedule> {
    check_unit("gamma", gamma)?;
    check_count("|S|", n_states)?;
    let g = 1.0 - gamma;
    Ok(StepsizeSchedule::Polynomial {
        eps: 4.0 / g,
        xi: 1.0,
        offset: (64.0 * (a + 2.0) * (n_states as f64).ln() / g.powi(3)).max(1.0),
    })
}

/// V-trace bound on `E ||V_k - V_{pi_rho}||_inf^2` under [`theorem3_schedule`].
/// `a` is the V-trace noise constant (`A = B`).
pub fn theorem3_bound(
    gamma: f64,
    a: f64,
    n_states: usize,
    initial_error_sq: f64,
    v_star_norm: f64,
    k: usize,
) -> Result<f64> {
    check_alpha1_regime("gamma", gamma)?;
    let StepsizeSchedule::Polynomial { offset, .. } = theorem3_schedule(gamma, a, n_states)? else {
        unreachable!()
    };
    let ln_s = (n_states as f64).ln();
    Ok(1024.0 * E * E * (initial_error_sq + 2.0 * v_star_norm.powi(2) + 1.0) * (a + 2.0) * ln_s
        / (1.0 - gamma).powi(3)
        / (k as f64 + offset))
}

/// Largest constant TD(n) stepsize `(1 - beta^n) / (16 (1 + beta^{2n}))`.
pub fn theorem4_max_step(beta: f64, n: usize) -> Result<f64> {
    check_unit("beta", beta)?;
    if n == 0 {
        return Err(Error::InvalidParameter("horizon n must be at least 1".into()));
    }
    let bn = beta.powi(n as i32);
    Ok((1.0 - bn) / (16.0 * (1.0 + bn * bn)))
}

/// TD(n) bound on `E ||V_k - V_pi||_Lambda^2` for a constant stepsize.
pub fn theorem4_bound(
    beta: f64,
    n: usize,
    eps: f64,
    initial_error_sq: f64,
    v_pi_norm: f64,
    k: usize,
) -> Result<f64> {
    let limit = theorem4_max_step(beta, n)?;
    if !(eps > 0.0) || eps > limit * (1.0 + STEP_SLACK) {
        return Err(Error::StepsizeTooLarge { eps0: eps, limit });
    }
    let bn = beta.powi(n as i32);
    let g = 1.0 - bn;
    Ok(initial_error_sq * (1.0 - g * eps).powi(k as i32)
        + 8.0 / g * (g * g / (1.0 - beta).powi(2) + 2.0 * bn * bn * v_pi_norm.powi(2)) * eps)
}

/// Largest constant Q-learning stepsize `(1-beta)^2 / (640 e ln(|S||A|))`.
pub fn theorem5a_max_step(beta: f64, n_pairs: usize) -> Result<f64> {
    check_unit("beta", beta)?;
    check_count("|S||A|", n_pairs)?;
    Ok((1.0 - beta).powi(2) / (640.0 * E * (n_pairs as f64).ln()))
}

pub fn theorem5a_bound(
    beta: f64,
    n_pairs: usize,
    eps: f64,
    initial_error_sq: f64,
    q_star_norm: f64,
    k: usize,
) -> Result<f64> {
    check_alpha1_regime("beta", beta)?;
    let limit = theorem5a_max_step(beta, n_pairs)?;
    if !(eps > 0.0) || eps > limit * (1.0 + STEP_SLACK) {
        return Err(Error::StepsizeTooLarge { eps0: eps, limit });
    }
    let ln_d = (n_pairs as f64).ln();
    Ok(1.5 * initial_error_sq * (1.0 - (1.0 - beta) * eps / 2.0).powi(k as i32)
        + (1.0 + 2.0 * q_star_norm.powi(2)) * 256.0 * E * ln_d * eps / (1.0 - beta).powi(2))
}

/// Q-learning schedule: `eps = 4/(1-beta)`, `K = 640 e ln(|S||A|) / (1-beta)^3`.
pub fn theorem5b_schedule(beta: f64, n_pairs: usize) -> Result<StepsizeSchedule> {
    check_unit("beta", beta)?;
    check_count("|S||A|", n_pairs)?;
    let g = 1.0 - beta;
    Ok(StepsizeSchedule::Polynomial {
        eps: 4.0 / g,
        xi: 1.0,
        offset: 640.0 * E * (n_pairs as f64).ln() / g.powi(3),
    })
}

pub fn theorem5b_bound(
    beta: f64,
    n_pairs: usize,
    initial_error_sq: f64,
    q_star_norm: f64,
    k: usize,
) -> Result<f64> {
    check_alpha1_regime("beta", beta)?;
    let StepsizeSchedule::Polynomial { offset, .. } = theorem5b_schedule(beta, n_pairs)? else {
        unreachable!()
    };
    let ln_d = (n_pairs as f64).ln();
    Ok(8192.0 * E * E * (1.0 + 2.0 * q_star_norm.powi(2) + initial_error_sq) * ln_d
        / (1.0 - beta).powi(3)
        / (k as f64 + offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn td_alphas(beta: f64, n: i32) -> AlphaConstants {
        let bn = beta.powi(n);
        let one = EquivalenceConstants::IDENTITY;
        compute_alphas(bn, 1.0, 1.0, one, one, 2.0 * bn * bn).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn td_instantiation() {
        for (beta, n) in [(0.9, 1), (0.5, 3), (0.99, 10)] {
            let a = td_alphas(beta, n);
            let bn = f64::powi(beta, n);
            assert_eq!(a.alpha1, 1.0);
            assert!(close(a.alpha2, 1.0 - bn, 1e-15));
            assert!(close(a.alpha3, 16.0 * (bn * bn + 1.0), 1e-14));
            assert!(close(a.alpha4, 4.0, 1e-14));
        }
        let a = td_alphas(0.9, 1);
        assert!(close(a.alpha2, 0.1, 1e-14));
        assert!(close(a.alpha3, 28.96, 1e-14));
    }

    #[test]
    fn tiny_gamma_gives_unit_alpha2() {
        let one = EquivalenceConstants::IDENTITY;
        let a = compute_alphas(1e-300, 1.0, 1.0, one, one, 0.0).unwrap();
        assert_eq!(a.alpha2, 1.0);
    }

    #[test]
    fn infeasible_mu_rejected() {
        let cs = EquivalenceConstants { lower: 0.1, upper: 1.0 };
        let one = EquivalenceConstants::IDENTITY;
        assert!(matches!(
            compute_alphas(0.9, 10.0, 1.0, cs, one, 0.0),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn corollary3_mu_formula() {
        assert!(close(corollary3_mu(0.5), 1.25, 1e-15));
    }

    #[test]
    fn corollary3_examples() {
        let a = corollary3_constants(0.5, 100, 0.0).unwrap();
        assert!(a.alpha1 <= 1.5);
        assert!(a.alpha2 >= 0.25);
        let a = corollary3_constants(0.99, 2, 0.0).unwrap();
        assert!(a.alpha1 <= 1.5);
        assert!(a.alpha2 >= 0.005);
    }

    #[test]
    fn corollary3_threshold_is_sharp() {
        let g = corollary3_gamma_threshold();
        assert!(g > 0.24 && g < 0.245);
        let at = corollary3_constants(g, 50, 0.0).unwrap();
        assert!(close(at.alpha1, 1.5, 1e-12));
        assert!(corollary3_constants(g + 1e-6, 50, 0.0).unwrap().alpha1 < 1.5);
        // Counterexample to the unconditional alpha1 <= 3/2.
        assert!(corollary3_constants(0.1, 50, 0.0).unwrap().alpha1 > 1.6);
    }

    #[test]
    fn corollary3_sweep() {
        for gamma in [0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99] {
            for d in [2usize, 3, 10, 100, 1000, 100_000, 1_000_000] {
                for b in [0.0, 2.0, 8.0] {
                    let a = corollary3_constants(gamma, d, b).unwrap();
                    if gamma >= corollary3_gamma_threshold() {
                        assert!(a.alpha1 <= 1.5);
                    }
                }
            }
        }
    }

    #[test]
    fn schedule_offsets() {
        let mut a = td_alphas(0.9, 1);
        a.alpha2 = 0.5;
        a.alpha3 = 8.0;
        let s = build_schedule(&a, 2.0, Some(1.0)).unwrap();
        assert_eq!(s, StepsizeSchedule::Polynomial { eps: 2.0, xi: 1.0, offset: 32.0 });
        assert!(s.step(0) <= a.max_step() * (1.0 + 1e-15));

        let s = build_schedule(&a, 0.05, None).unwrap();
        assert_eq!(s, StepsizeSchedule::Constant { eps: 0.05 });
        assert!(build_schedule(&a, 0.1, None).is_err());

        // third term dominates for small eps
        let eps = 1e-3;
        let k = schedule_offset(&a, eps, 0.5).unwrap();
        let third = (2.0 * 0.5 / (0.5 * eps)).powf(2.0);
        assert!(third > (eps * 8.0 / 0.5f64).powf(2.0));
        assert_eq!(k, third);
    }

    #[test]
    fn theorem1_basics() {
        let a = td_alphas(0.9, 2);
        let p = ProblemConstants { initial_error_sq: 3.0, a: 1.0, b: 0.5, x_star_norm: 2.0 };
        let s = build_schedule(&a, 1.0, Some(1.0)).unwrap();
        let curve = theorem1_bound(&a, &s, &p, 10).unwrap();
        assert_eq!(curve.len(), 11);
        assert_eq!(curve[0], a.alpha1 * 3.0);

        let too_big = StepsizeSchedule::Constant { eps: a.max_step() * 2.0 };
        assert!(matches!(
            theorem1_bound(&a, &too_big, &p, 3),
            Err(Error::StepsizeTooLarge { .. })
        ));
    }

    #[test]
    fn theorem1_degenerate_unit_contraction() {
        let one = EquivalenceConstants::IDENTITY;
        // alpha2 = 1 and alpha3 = 16: step 1/16 gives alpha2 eps = 1/16, so
        // instead force alpha2 eps = 1 directly.
        let mut a = compute_alphas(1e-300, 1.0, 1.0, one, one, 0.0).unwrap();
        a.alpha3 = 1.0;
        let p = ProblemConstants { initial_error_sq: 5.0, a: 0.0, b: 0.0, x_star_norm: 0.0 };
        let curve = theorem1_bound(&a, &StepsizeSchedule::Constant { eps: 1.0 }, &p, 4).unwrap();
        assert_eq!(curve[0], 5.0);
        assert!(curve[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn theorem1_constant_step_geometric_form() {
        let a = td_alphas(0.9, 3);
        let p = ProblemConstants { initial_error_sq: 2.0, a: 0.7, b: 0.3, x_star_norm: 1.5 };
        let eps = a.max_step();
        let curve = theorem1_bound(&a, &StepsizeSchedule::Constant { eps }, &p, 1000).unwrap();
        let q = 1.0 - a.alpha2 * eps;
        for (k, v) in curve.iter().enumerate() {
            let qk = q.powi(k as i32);
            let closed = a.alpha1 * 2.0 * qk + a.alpha4 * p.variance_factor() * eps * (1.0 - qk) / a.alpha2;
            assert!(close(*v, closed, 1e-12), "k={k}");
            let c1 = corollary1_bound(&a, eps, &p, k).unwrap();
            let gap = a.alpha4 * p.variance_factor() * eps * qk / a.alpha2;
            assert!(close(c1 - v, gap, 1e-9) || (c1 - v - gap).abs() < 1e-12, "k={k}");
            assert!(c1 >= *v);
        }
    }

    #[test]
    fn corollary1_plateau() {
        let a = td_alphas(0.9, 1);
        let p = ProblemConstants { initial_error_sq: 1.0, a: 2.0, b: 1.0, x_star_norm: 1.0 };
        let eps = a.max_step() / 2.0;
        let far = corollary1_bound(&a, eps, &p, 1_000_000).unwrap();
        assert!(close(far, 4.0 * a.alpha4 * eps / a.alpha2, 1e-12));
        let pure = ProblemConstants { a: 0.0, b: 0.0, ..p };
        let v = corollary1_bound(&a, eps, &pure, 7).unwrap();
        assert!(close(v, (1.0 - a.alpha2 * eps).powi(7), 1e-14));
    }

    #[test]
    fn corollary2_case_selection() {
        let a = td_alphas(0.9, 1);
        let tie = 1.0 / a.alpha2;
        assert_eq!(diminishing_case(&a, tie, 1.0).unwrap(), DiminishingCase::Critical);
        assert_eq!(diminishing_case(&a, tie * 1.5, 1.0).unwrap(), DiminishingCase::Fast);
        assert_eq!(diminishing_case(&a, tie * 0.5, 1.0).unwrap(), DiminishingCase::Slow);
        assert_eq!(diminishing_case(&a, tie, 0.7).unwrap(), DiminishingCase::Polynomial);
        assert!(diminishing_case(&a, tie, 0.0).is_err());
        assert!(diminishing_case(&a, tie, 1.2).is_err());

        let p = ProblemConstants { initial_error_sq: 1.0, a: 1.0, b: 0.0, x_star_norm: 0.0 };
        let k = 100;
        let crit = corollary2_bound(&a, tie, 1.0, &p, k).unwrap();
        let kk = k as f64 + schedule_offset(&a, tie, 1.0).unwrap();
        let expected = a.alpha1 * schedule_offset(&a, tie, 1.0).unwrap() / kk
            + 4.0 * a.alpha4 / a.alpha2.powi(2) * kk.ln() / kk;
        assert!(close(crit, expected, 1e-14));
        for eps in [tie * 0.999, tie, tie * 1.001] {
            let v = corollary2_bound(&a, eps, 1.0, &p, 100_000).unwrap();
            assert!(v.is_finite() && v > 0.0);
        }
    }

    #[test]
    fn theorem2_forms() {
        assert!(close(
            theorem2_bound(2.0, 0.0, 0.5, AveragedRegime::Constant, 9).unwrap(),
            4.0 / (10.0 * 0.25),
            1e-15
        ));
        assert_eq!(theorem2_bound(0.0, 0.0, 0.3, AveragedRegime::InvK, 5).unwrap(), 0.0);
        assert!(theorem2_bound(1.0, 1.0, 0.3, AveragedRegime::InvK, 0).is_err());
        assert!(theorem2_bound(1.0, 1.0, 0.3, AveragedRegime::InvSqrt, 0).is_err());
        assert!(theorem2_bound(1.0, 1.0, 1.0, AveragedRegime::Constant, 3).is_err());
        let a = theorem2_bound(1.0, 1.0, 0.3, AveragedRegime::InvK, 100).unwrap();
        let b = theorem2_bound(1.0, 1.0, 0.3, AveragedRegime::InvK, 10_000).unwrap();
        assert!(close(a / b, (10_001f64).ln() / (101f64).ln(), 1e-12));
    }

    #[test]
    fn theorem5a_at_cap() {
        let beta = 0.9;
        let eps = theorem5a_max_step(beta, 30).unwrap();
        let v = theorem5a_bound(beta, 30, eps, 2.0, 3.0, 0).unwrap();
        let expected = 1.5 * 2.0 + 19.0 * 256.0 * E * 30f64.ln() * eps / 0.01;
        assert!(close(v, expected, 1e-13));
        assert!(theorem5a_bound(beta, 30, eps * 1.01, 2.0, 3.0, 0).is_err());
        assert!(theorem5a_bound(0.2, 30, 1e-6, 2.0, 3.0, 0).is_err());
    }

    #[test]
    fn theorem5b_schedule_values() {
        let s = theorem5b_schedule(0.9, 30).unwrap();
        let StepsizeSchedule::Polynomial { eps, offset, .. } = s else { panic!() };
        assert!(close(eps, 40.0, 1e-14));
        assert!(close(offset, 640.0 * E * 30f64.ln() / 0.001, 1e-12));
    }

    #[test]
    fn theorem4_zero_initial_error() {
        let (beta, n) = (0.9, 3);
        let eps = theorem4_max_step(beta, n).unwrap();
        let bn = f64::powi(beta, 3);
        let v = theorem4_bound(beta, n, eps, 0.0, 2.0, 50).unwrap();
        let variance = 8.0 / (1.0 - bn) * ((1.0 - bn).powi(2) / 0.01 + 2.0 * bn * bn * 4.0) * eps;
        assert!(close(v, variance, 1e-14));
    }

    #[test]
    fn theorem3_dominates_corollary2_asymptotically() {
        let (gamma, s, a) = (0.9, 10usize, 32.0);
        let alphas = corollary3_constants(gamma, s, a).unwrap();
        let p = ProblemConstants { initial_error_sq: 4.0, a, b: a, x_star_norm: 5.0 };
        let eps = 4.0 / (1.0 - gamma);
        assert_eq!(diminishing_case(&alphas, eps, 1.0).unwrap(), DiminishingCase::Fast);
        for k in [10_000_000usize, 100_000_000] {
            let t3 = theorem3_bound(gamma, a, s, 4.0, 5.0, k).unwrap();
            let c2 = corollary2_bound(&alphas, eps, 1.0, &p, k).unwrap();
            assert!(t3 >= c2, "k={k}: {t3} < {c2}");
        }
    }

    fn alpha_strategy() -> impl Strategy<Value = AlphaConstants> {
        (0.05f64..0.95, 0.1f64..3.0, 1.0f64..5.0, 0.3f64..1.0, 1.0f64..2.0, 0.0f64..4.0).prop_filter_map(
            "feasible",
            |(gamma, mu, l, lo, hi, b)| {
                let cs = EquivalenceConstants { lower: lo, upper: hi };
                compute_alphas(gamma, mu, l, cs, cs, b).ok()
            },
        )
    }

    proptest! {
        #[test]
        fn theorem1_monotone_in_inputs(alphas in alpha_strategy(),
                                       e0 in 0.0f64..10.0, a in 0.0f64..10.0, b in 0.0f64..5.0,
                                       xn in 0.0f64..3.0, bump in 0.0f64..2.0, which in 0usize..3) {
            let s = build_schedule(&alphas, 2.0 / alphas.alpha2, Some(1.0)).unwrap();
            let p = ProblemConstants { initial_error_sq: e0, a, b, x_star_norm: xn };
            let mut q = p;
            match which {
                0 => q.initial_error_sq += bump,
                1 => q.a += bump,
                _ => q.b += bump,
            }
            let lo = theorem1_bound(&alphas, &s, &p, 200).unwrap();
            let hi = theorem1_bound(&alphas, &s, &q, 200).unwrap();
            for (l, h) in lo.iter().zip(&hi) {
                prop_assert!(h >= l);
            }
        }

        #[test]
        fn corollary2_dominates_theorem1(alphas in alpha_strategy(), scale in 0.2f64..4.0,
                                         xi in prop_oneof![Just(1.0f64), 0.3f64..0.95],
                                         e0 in 0.0f64..10.0, a in 0.0f64..10.0) {
            let eps = scale / alphas.alpha2;
            let s = build_schedule(&alphas, eps, Some(xi)).unwrap();
            let p = ProblemConstants { initial_error_sq: e0, a, b: 0.5, x_star_norm: 1.0 };
            let curve = theorem1_bound(&alphas, &s, &p, 300).unwrap();
            for k in (0..=300).step_by(7) {
                let c2 = corollary2_bound(&alphas, eps, xi, &p, k).unwrap();
                prop_assert!(c2 >= curve[k] * (1.0 - 1e-12), "k={} c2={} t1={}", k, c2, curve[k]);
            }
        }
    }
}
