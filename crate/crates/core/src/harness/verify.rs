//! Property suites behind `contract-sa verify`. Every suite uses fixed seeds
//! and reports one result per property.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;
use std::str::FromStr;

use crate::bounds::corollary3_constants;
use crate::envelope::EnvelopeSpec;
use crate::error::{Error, Result};
use crate::mdp::{
    clipped_policy, policy_lipschitz_check, q_star, rho_max, tdn_operator, value_of_policy, vtrace_contraction_factor,
    vtrace_operator, Mdp, Policy, VtraceParams,
};
use crate::norms::Norm;
use crate::rl::{QLearningConfig, QLearningOracle, TdnConfig, TdnOracle, VtraceConfig, VtraceOracle};
use crate::sa_engine::{
    gaussian_average_experiment, mean_stderr, path_rng, refute_contraction, verify_drift, FnOperator, NoisyOracle,
    OperatorModel, PathRng,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Sandwich,
    Drift,
    Contraction,
    Noise,
    Lipschitz,
    Tightness,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Sandwich,
        Suite::Drift,
        Suite::Contraction,
        Suite::Noise,
        Suite::Lipschitz,
        Suite::Tightness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Sandwich => "sandwich",
            Suite::Drift => "drift",
            Suite::Contraction => "contraction",
            Suite::Noise => "noise",
            Suite::Lipschitz => "lipschitz",
            Suite::Tightness => "tightness",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub suite: Suite,
    pub property: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    /// `suite.property<TAB>PASS|FAIL<TAB>detail`.
    pub fn line(&self) -> String {
        format!(
            "{}.{}\t{}\t{}",
            self.suite,
            self.property,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<PropertyResult>> {
    let mut out = Vec::new();
    let mut push = |property: &str, passed: bool, detail: String| {
        out.push(PropertyResult {
            suite,
            property: property.to_string(),
            passed,
            detail,
        })
    };
    match suite {
        Suite::Sandwich => {
            let (cases, failures) = sandwich_cases(1000, seed)?;
            push("envelope_sandwich", failures == 0, format!("{cases} cases, {failures} failures"));
        }
        Suite::Drift => {
            let (points, worst) = drift_points(50, 10_000, seed)?;
            push(
                "qlearning_one_step_drift",
                worst >= 0.0,
                format!("{points} points, smallest margin {worst:e}"),
            );
        }
        Suite::Contraction => {
            for r in contraction_checks(1000, seed)? {
                push(&r.0, r.1, r.2);
            }
            let (draws, worst_fp, worst_unbiased) = fixed_point_checks(20, seed)?;
            push(
                "vtrace_fixed_point",
                worst_fp < 1e-10,
                format!("{draws} draws, max ||T(V) - V||_inf = {worst_fp:e}"),
            );
            push(
                "vtrace_unclipped_target",
                worst_unbiased < 1e-10,
                format!("max ||V_rho - V_pi||_inf = {worst_unbiased:e} when rho_bar >= rho_max"),
            );
        }
        Suite::Noise => {
            for r in noise_checks(10, 10_000, seed)? {
                push(&r.0, r.1, r.2);
            }
        }
        Suite::Lipschitz => {
            let (pairs, violations, worst) = lipschitz_pairs(1000, seed)?;
            push(
                "policy_lipschitz",
                violations == 0,
                format!("{pairs} pairs, {violations} violations, max lhs/rhs {worst:.4}"),
            );
        }
        Suite::Tightness => {
            let dims = [2, 8, 32, 128, 512];
            let table = gaussian_average_experiment(&dims, 1000, 500, seed)?;
            let fit = table.log_dimension_fit(1000)?;
            push(
                "log_dimension_fit",
                fit.r_squared > 0.95 && fit.slope > 0.0,
                format!("slope {:.4}, intercept {:.4}, R^2 {:.4}", fit.slope, fit.intercept, fit.r_squared),
            );
        }
    }
    Ok(out)
}

fn normal_vec(rng: &mut PathRng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Random `(spec, x)` pairs with `d <= 16`; returns `(cases, failures)`.
pub fn sandwich_cases(cases: usize, seed: u64) -> Result<(usize, usize)> {
    let mut rng = path_rng(seed, 1, 0);
    let mut failures = 0;
    for _ in 0..cases {
        let d = rng.random_range(1..=16usize);
        let c = match rng.random_range(0..3) {
            0 => Norm::LInf,
            1 => Norm::l2(),
            _ => Norm::lp(rng.random_range(2.0..8.0))?,
        };
        let s = match rng.random_range(0..3) {
            0 => Norm::l2(),
            1 if d >= 2 => Norm::log_dimension_lp(d)?,
            _ => Norm::lp(rng.random_range(2.0..12.0))?,
        };
        let mu = (rng.random_range((0.05f64).ln()..(5.0f64).ln())).exp();
        let scale = (rng.random_range((1e-2f64).ln()..(1e2f64).ln())).exp();
        let spec = EnvelopeSpec::new(c, s, mu)?;
        let x = normal_vec(&mut rng, d, scale);
        let check = spec.sandwich_check(&x, spec.default_tol(&x))?;
        if !(check.lower_ok && check.upper_ok) {
            failures += 1;
        }
    }
    Ok((cases, failures))
}

/// Q-learning one-step drift on a random 5x3 MDP at `points` random Q
/// values; returns `(points, smallest margin)`.
pub fn drift_points(points: usize, samples: usize, seed: u64) -> Result<(usize, f64)> {
    let beta = 0.9;
    let mdp = Mdp::random(5, 3, beta, seed)?;
    let d = 15;
    let alphas = corollary3_constants(beta, d, 8.0)?;
    let spec = EnvelopeSpec::new(Norm::LInf, Norm::log_dimension_lp(d)?, alphas.mu)?;
    let q = q_star(&mdp)?;
    let oracle = QLearningOracle::new(QLearningConfig { mdp });
    let eps = alphas.alpha2 / (2.0 * alphas.alpha3);
    let mut rng = path_rng(seed, 2, 0);
    let mut worst = f64::INFINITY;
    for i in 0..points {
        let x: Vec<f64> = q.iter().map(|v| v + rng.random_range(-5.0..5.0)).collect();
        let check = verify_drift(&spec, &oracle, &alphas, &x, &q, eps, samples, seed.wrapping_add(1 + i as u64))?;
        worst = worst.min(check.margin);
    }
    Ok((points, worst))
}

fn random_vtrace(rng: &mut PathRng, n_states: usize, n_actions: usize, beta: f64) -> Result<VtraceConfig> {
    let mdp = Mdp::random(n_states, n_actions, beta, rng.random())?;
    let pi = Policy::random(n_states, n_actions, rng);
    let behavior = Policy::random(n_states, n_actions, rng);
    let rho_bar = rng.random_range(0.5..3.0);
    let params = VtraceParams {
        c_bar: rng.random_range(0.0..=rho_bar),
        rho_bar,
        n: rng.random_range(1..=6),
    };
    VtraceConfig::new(mdp, pi, behavior, params)
}

/// `(property, passed, detail)` for the TD(n) and V-trace contraction claims.
pub fn contraction_checks(pairs: usize, seed: u64) -> Result<Vec<(String, bool, String)>> {
    let mut out = Vec::new();
    let mut rng = path_rng(seed, 3, 0);
    for n in [1usize, 3] {
        let mdp = Mdp::random(10, 3, 0.9, seed.wrapping_add(n as u64))?;
        let pi = Policy::random(10, 3, &mut rng);
        let config = TdnConfig::new(mdp, pi, n)?;
        let norm = config.lambda_norm()?;
        let gamma = config.mdp.beta().powi(n as i32);
        let op = FnOperator {
            dim: 10,
            f: |x: &[f64], o: &mut [f64]| {
                o.copy_from_slice(&tdn_operator(&config.mdp, &config.policy, n, x).expect("valid"))
            },
        };
        let model = OperatorModel {
            operator: op,
            contraction_norm: norm,
            gamma,
            fixed_point: None,
        };
        let r = refute_contraction(&model, pairs, 10.0, seed.wrapping_add(10 + n as u64), 1e-10)?;
        out.push((
            format!("tdn_lambda_contraction_n{n}"),
            r.violations == 0,
            format!("{} pairs, {} violations, max ratio {:.6} vs beta^n = {gamma:.6}", r.pairs, r.violations, r.max_ratio),
        ));
    }

    let config = random_vtrace(&mut rng, 10, 3, 0.9)?;
    let gamma = config.contraction_factor()?;
    let op = FnOperator {
        dim: 10,
        f: |x: &[f64], o: &mut [f64]| {
            o.copy_from_slice(
                &vtrace_operator(&config.mdp, &config.target, &config.behavior, &config.params, x).expect("valid"),
            )
        },
    };
    let model = OperatorModel {
        operator: op,
        contraction_norm: Norm::LInf,
        gamma,
        fixed_point: None,
    };
    let r = refute_contraction(&model, pairs, 10.0, seed.wrapping_add(20), 1e-10)?;
    out.push((
        "vtrace_sup_contraction".into(),
        r.violations == 0,
        format!("{} pairs, {} violations, max ratio {:.6} vs gamma = {gamma:.6}", r.pairs, r.violations, r.max_ratio),
    ));

    let mut worst: f64 = 0.0;
    for n in 1..=8 {
        for beta in [0.3, 0.9, 0.99] {
            let pi = Policy::random(6, 3, &mut rng);
            let params = VtraceParams {
                c_bar: 1.0,
                rho_bar: 1.0,
                n,
            };
            let g = vtrace_contraction_factor(&pi, &pi, &params, beta)?;
            worst = worst.max((g - beta.powi(n as i32)).abs());
        }
    }
    out.push((
        "vtrace_on_policy_factor".into(),
        worst <= 1e-14,
        format!("max |gamma - beta^n| = {worst:e}"),
    ));
    Ok(out)
}

/// `(draws, max ||T(V_rho) - V_rho||_inf, max ||V_rho - V_pi||_inf at rho_bar >= rho_max)`.
pub fn fixed_point_checks(draws: usize, seed: u64) -> Result<(usize, f64, f64)> {
    let mut rng = path_rng(seed, 4, 0);
    let (mut worst_fp, mut worst_unbiased): (f64, f64) = (0.0, 0.0);
    for _ in 0..draws {
        let n_states = rng.random_range(2..=12);
        let n_actions = rng.random_range(1..=4);
        let beta = rng.random_range(0.5..0.99);
        let config = random_vtrace(&mut rng, n_states, n_actions, beta)?;
        let v = config.fixed_point()?;
        let tv = vtrace_operator(&config.mdp, &config.target, &config.behavior, &config.params, &v)?;
        worst_fp = worst_fp.max(tv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

        let rho = rho_max(&config.target, &config.behavior)?;
        let clipped = clipped_policy(&config.target, &config.behavior, rho * rng.random_range(1.0..2.0))?;
        let v_rho = value_of_policy(&config.mdp, &clipped)?;
        let v_pi = value_of_policy(&config.mdp, &config.target)?;
        worst_unbiased = worst_unbiased.max(v_rho.iter().zip(&v_pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok((draws, worst_fp, worst_unbiased))
}

/// Empirical `E ||w||_e^2` against `A + B ||x||_e^2 + 3 SE` at `points`
/// random iterates. Returns the worst `(bound - estimate) / SE` slack.
pub fn noise_envelope_check<O: NoisyOracle>(
    oracle: &O,
    points: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<(usize, f64)> {
    let noise = oracle.noise_model();
    let d = oracle.dim();
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let (mut mean, mut sample, mut w) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for (i, x) in points.iter().enumerate() {
        oracle.mean(x, &mut mean);
        let mut rng = path_rng(seed, 5, i as u32);
        let values: Vec<f64> = (0..samples)
            .map(|_| {
                oracle.sample(x, &mut rng, &mut sample);
                for ((wi, s), m) in w.iter_mut().zip(&sample).zip(&mean) {
                    *wi = s - m;
                }
                noise.norm.value(&w).powi(2)
            })
            .collect();
        let (m, se) = mean_stderr(values);
        let bound = noise.a + noise.b * noise.norm.eval(x)?.powi(2);
        if m > bound + 3.0 * se {
            violations += 1;
        }
        worst = worst.min(bound - m);
    }
    Ok((violations, worst))
}

fn noise_checks(points: usize, samples: usize, seed: u64) -> Result<Vec<(String, bool, String)>> {
    let mut rng = path_rng(seed, 6, 0);
    let mdp = Mdp::random(10, 3, 0.9, seed)?;
    let pi = Policy::random(10, 3, &mut rng);
    let behavior = Policy::random(10, 3, &mut rng);
    let mut draw = |d: usize, scale: f64| -> Vec<Vec<f64>> {
        (0..points).map(|_| (0..d).map(|_| rng.random_range(-scale..scale)).collect()).collect()
    };
    let v_points = draw(10, 10.0);
    let q_points = draw(30, 10.0);
    let mut out = Vec::new();
    let mut report = |name: &str, (violations, worst): (usize, f64)| {
        out.push((
            name.to_string(),
            violations == 0,
            format!("{points} points x {samples} samples, {violations} violations, min (bound - estimate) {worst:.4}"),
        ));
    };
    let params = VtraceParams {
        c_bar: 1.0,
        rho_bar: 1.5,
        n: 3,
    };
    let vt = VtraceOracle::new(VtraceConfig::new(mdp.clone(), pi.clone(), behavior, params)?)?;
    report("vtrace_noise", noise_envelope_check(&vt, &v_points, samples, seed)?);
    let td = TdnOracle::new(TdnConfig::new(mdp.clone(), pi, 3)?)?;
    report("tdn_noise", noise_envelope_check(&td, &v_points, samples, seed.wrapping_add(1))?);
    let q = QLearningOracle::new(QLearningConfig { mdp });
    report("qlearning_noise", noise_envelope_check(&q, &q_points, samples, seed.wrapping_add(2))?);
    Ok(out)
}

/// `(pairs, violations, max lhs/rhs)` over random MDPs and policy pairs.
pub fn lipschitz_pairs(pairs: usize, seed: u64) -> Result<(usize, usize, f64)> {
    let mut rng = path_rng(seed, 7, 0);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let mut mdp = Mdp::random(5, 3, 0.9, seed)?;
    for i in 0..pairs {
        if i % 20 == 0 {
            let n = rng.random_range(2..=8);
            let m = rng.random_range(1..=4);
            mdp = Mdp::random(n, m, rng.random_range(0.5..0.99), rng.random())?;
        }
        let (n, m) = (mdp.n_states(), mdp.n_actions());
        let p1 = Policy::random(n, m, &mut rng);
        // half the pairs are close, where the linear bound is tightest
        let p2 = if i % 2 == 0 {
            Policy::random(n, m, &mut rng)
        } else {
            let t = rng.random_range(0.0..0.05);
            let other = Policy::random(n, m, &mut rng);
            Policy::new(
                n,
                m,
                p1.probs().iter().zip(other.probs()).map(|(a, b)| (1.0 - t) * a + t * b).collect(),
            )?
        };
        let check = policy_lipschitz_check(&mdp, &p1, &p2)?;
        if !check.ok {
            violations += 1;
        }
        if check.rhs > 0.0 {
            worst = worst.max(check.lhs / check.rhs);
        }
    }
    Ok((pairs, violations, worst))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn small_sandwich_and_lipschitz_pass() {
        assert_eq!(sandwich_cases(50, 3).unwrap().1, 0);
        assert_eq!(lipschitz_pairs(100, 3).unwrap().1, 0);
    }

    #[test]
    fn contraction_suite_passes() {
        for (name, ok, detail) in contraction_checks(200, 1).unwrap() {
            assert!(ok, "{name}: {detail}");
        }
    }
}
