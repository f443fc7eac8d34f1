//! Tabular MDPs and their exact operators.
//!
//! Layouts: transitions are `[action][state][next_state]`, rewards and
//! policies are `[state][action]`, and Q-functions are flattened as
//! `s * n_actions + a`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{check_dim, Error, Result};
use crate::norms::sup;

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    beta: f64,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VtraceParams {
    pub c_bar: f64,
    pub rho_bar: f64,
    pub n: usize,
}

impl VtraceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_bar >= 0.0 && self.c_bar.is_finite()) {
            return Err(Error::InvalidParameter(format!("c_bar must be >= 0, got {}", self.c_bar)));
        }
        if !(self.rho_bar > 0.0 && self.rho_bar >= self.c_bar && self.rho_bar.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "rho_bar must be positive and >= c_bar, got rho_bar = {}, c_bar = {}",
                self.rho_bar, self.c_bar
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("horizon n must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_stochastic_rows(values: &[f64], width: usize, what: &str) -> Result<()> {
    for (i, row) in values.chunks(width).enumerate() {
        if let Some(v) = row.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("{what} row {i} has entry {v}")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidParameter(format!("{what} row {i} sums to {sum}")));
        }
    }
    Ok(())
}

/// A row of normalized i.i.d. exponentials: uniform on the simplex.
fn simplex_row<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut sum = 0.0;
    for v in out.iter_mut() {
        *v = rng.sample::<f64, _>(Exp1);
        sum += *v;
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
}

impl Mdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        beta: f64,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidParameter("MDP needs at least one state and one action".into()));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!("discount must lie in (0, 1), got {beta}")));
        }
        check_dim(n_actions * n_states * n_states, transitions.len())?;
        check_dim(n_states * n_actions, rewards.len())?;
        check_stochastic_rows(&transitions, n_states, "transition")?;
        if let Some(r) = rewards.iter().find(|r| !(**r >= 0.0 && **r <= 1.0)) {
            return Err(Error::InvalidParameter(format!("rewards must lie in [0, 1], got {r}")));
        }
        Ok(Self {
            n_states,
            n_actions,
            beta,
            transitions,
            rewards,
        })
    }

    /// Rows uniform on the simplex, rewards uniform on `[0, 1]`, all drawn
    /// from ChaCha8 seeded with `seed`.
    pub fn random(n_states: usize, n_actions: usize, beta: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut transitions = vec![0.0; n_actions * n_states * n_states];
        for row in transitions.chunks_mut(n_states.max(1)) {
            simplex_row(&mut rng, row);
        }
        let rewards = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
        Self::new(n_states, n_actions, beta, transitions, rewards)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// `P_a(s, .)`.
    pub fn transition_row(&self, a: usize, s: usize) -> &[f64] {
        let n = self.n_states;
        let start = (a * n + s) * n;
        &self.transitions[start..start + n]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: Mdp = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(raw.n_states, raw.n_actions, raw.beta, raw.transitions, raw.rewards)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub(crate) fn check_policy(&self, pi: &Policy) -> Result<()> {
        check_dim(self.n_states, pi.n_states)?;
        check_dim(self.n_actions, pi.n_actions)
    }

    /// `P_pi(s, s') = sum_a pi(a|s) P_a(s, s')`.
    pub fn policy_transition(&self, pi: &Policy) -> Result<DMatrix<f64>> {
        self.check_policy(pi)?;
        let n = self.n_states;
        let mut p = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (sp, v) in self.transition_row(a, s).iter().enumerate() {
                    p[(s, sp)] += w * v;
                }
            }
        }
        Ok(p)
    }

    /// `R_pi(s) = sum_a pi(a|s) R(s, a)`.
    pub fn policy_reward(&self, pi: &Policy) -> Result<DVector<f64>> {
        self.check_policy(pi)?;
        Ok(DVector::from_fn(self.n_states, |s, _| {
            (0..self.n_actions).map(|a| pi.prob(s, a) * self.reward(s, a)).sum()
        }))
    }
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidParameter("policy needs at least one state and one action".into()));
        }
        check_dim(n_states * n_actions, probs.len())?;
        check_stochastic_rows(&probs, n_actions, "policy")?;
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Rows uniform on the simplex.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let mut probs = vec![0.0; n_states * n_actions];
        for row in probs.chunks_mut(n_actions) {
            simplex_row(rng, row);
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    /// One-hot rows selecting `actions[s]`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidParameter(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `max_s sum_a |pi1(a|s) - pi2(a|s)|`.
    pub fn distance(&self, other: &Policy) -> Result<f64> {
        check_dim(self.probs.len(), other.probs.len())?;
        Ok((0..self.n_states)
            .map(|s| {
                self.row(s)
                    .iter()
                    .zip(other.row(s))
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max))
    }
}

fn same_shape(pi: &Policy, other: &Policy) -> Result<()> {
    check_dim(pi.n_states, other.n_states)?;
    check_dim(pi.n_actions, other.n_actions)
}

/// Solves `(I - beta P_pi) V = R_pi` by LU.
pub fn value_of_policy(mdp: &Mdp, pi: &Policy) -> Result<Vec<f64>> {
    let p = mdp.policy_transition(pi)?;
    let r = mdp.policy_reward(pi)?;
    let n = mdp.n_states;
    let system = DMatrix::identity(n, n) - p * mdp.beta;
    let v = system
        .clone()
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::InvalidParameter("policy evaluation system is singular".into()))?;
    // One step of iterative refinement.
    let residual = &r - &system * &v;
    let v = match system.lu().solve(&residual) {
        Some(dv) => v + dv,
        None => v,
    };
    Ok(v.iter().copied().collect())
}

/// Stationary distribution of the chain under `pi`.
///
/// Uniqueness is checked first: the stationary distribution is unique iff
/// `P^T - I` with its last row replaced by ones is nonsingular. Power
/// iteration then runs on the lazy chain `(I + P)/2` (same stationary
/// distribution, aperiodic), with a direct solve of the bordered system as
/// fallback.
pub fn stationary_distribution(mdp: &Mdp, pi: &Policy) -> Result<Vec<f64>> {
    let p = mdp.policy_transition(pi)?;
    let n = mdp.n_states;
    let mut bordered = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        bordered[(n - 1, j)] = 1.0;
    }
    let sv = bordered.clone().singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    if smin <= 1e-10 * smax.max(1.0) {
        return Err(Error::NonUniqueStationary);
    }

    let mut lambda = DVector::from_element(n, 1.0 / n as f64);
    let lazy = (p + DMatrix::identity(n, n)) * 0.5;
    let lazy_t = lazy.transpose();
    let mut converged = false;
    for _ in 0..1_000_000 {
        let next = &lazy_t * &lambda;
        let change: f64 = next.iter().zip(lambda.iter()).map(|(a, b)| (a - b).abs()).sum();
        lambda = next;
        if change < 1e-13 {
            converged = true;
            break;
        }
    }
    if !converged {
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        lambda = bordered.lu().solve(&rhs).ok_or(Error::NonUniqueStationary)?;
    }
    let total: f64 = lambda.iter().sum();
    let lambda: Vec<f64> = lambda.iter().map(|v| v / total).collect();
    if let Some((state, &value)) = lambda.iter().enumerate().find(|(_, v)| **v < 1e-9) {
        return Err(Error::DegenerateStationary { state, value });
    }
    Ok(lambda)
}

/// Errors when the target puts mass on an action the behavior never takes.
pub fn check_coverage(pi: &Policy, pi_prime: &Policy) -> Result<()> {
    same_shape(pi, pi_prime)?;
    for s in 0..pi.n_states {
        for a in 0..pi.n_actions {
            if pi.prob(s, a) > 0.0 && pi_prime.prob(s, a) == 0.0 {
                return Err(Error::Coverage { state: s, action: a });
            }
        }
    }
    Ok(())
}

/// `max_{(s,a)} pi(a|s) / pi'(a|s)`; infinite without coverage.
pub fn rho_max(pi: &Policy, pi_prime: &Policy) -> Result<f64> {
    same_shape(pi, pi_prime)?;
    let mut m: f64 = 0.0;
    for (t, b) in pi.probs.iter().zip(&pi_prime.probs) {
        if *t > 0.0 {
            if *b == 0.0 {
                return Ok(f64::INFINITY);
            }
            m = m.max(t / b);
        }
    }
    Ok(m)
}

/// `min(level, pi/pi')`, with `0/0` read as 0.
pub(crate) fn truncated_ratio(target: f64, behavior: f64, level: f64) -> f64 {
    if target == 0.0 {
        0.0
    } else {
        level.min(target / behavior)
    }
}

/// Row-normalized `min(rho_bar pi'(a|s), pi(a|s))`.
pub fn clipped_policy(pi: &Policy, pi_prime: &Policy, rho_bar: f64) -> Result<Policy> {
    check_coverage(pi, pi_prime)?;
    if !(rho_bar > 0.0) {
        return Err(Error::InvalidParameter(format!("rho_bar must be positive, got {rho_bar}")));
    }
    let mut probs = vec![0.0; pi.probs.len()];
    for s in 0..pi.n_states {
        let row = &mut probs[s * pi.n_actions..(s + 1) * pi.n_actions];
        for (a, v) in row.iter_mut().enumerate() {
            *v = (rho_bar * pi_prime.prob(s, a)).min(pi.prob(s, a));
        }
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter(format!("clipped policy row {s} has zero mass")));
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(Policy {
        n_states: pi.n_states,
        n_actions: pi.n_actions,
        probs,
    })
}

/// `(kappa_c, kappa_rho)` with `kappa = min_s sum_a min(level pi'(a|s), pi(a|s))`.
pub fn kappa_constants(pi: &Policy, pi_prime: &Policy, params: &VtraceParams) -> Result<(f64, f64)> {
    params.validate()?;
    check_coverage(pi, pi_prime)?;
    let kappa = |level: f64| -> f64 {
        (0..pi.n_states)
            .map(|s| {
                (0..pi.n_actions)
                    .map(|a| (level * pi_prime.prob(s, a)).min(pi.prob(s, a)))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (kc, kr) = (kappa(params.c_bar), kappa(params.rho_bar));
    if !(kr > 0.0) {
        return Err(Error::InvalidParameter("kappa_rho vanished despite coverage".into()));
    }
    debug_assert!(kc <= kr * (1.0 + 1e-15) && kr <= 1.0 + 1e-12);
    Ok((kc, kr))
}

/// `1 - (1 - beta)(1 - (beta kappa_c)^n) kappa_rho / (1 - beta kappa_c)`.
pub fn contraction_from_kappas(kappa_c: f64, kappa_rho: f64, beta: f64, n: usize) -> f64 {
    let bk = beta * kappa_c;
    1.0 - (1.0 - beta) * (1.0 - bk.powi(n as i32)) * kappa_rho / (1.0 - bk)
}

pub fn vtrace_contraction_factor(pi: &Policy, pi_prime: &Policy, params: &VtraceParams, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("discount must lie in (0, 1), got {beta}")));
    }
    let (kc, kr) = kappa_constants(pi, pi_prime, params)?;
    Ok(contraction_from_kappas(kc, kr, beta, params.n))
}

/// `A = B` in `E ||w||_inf^2 <= A + B ||V||_inf^2`. Discontinuous at
/// `beta c_bar = 1`: the first branch blows up there while the middle branch
/// is `32 rho_bar^2 n^2`.
pub fn vtrace_noise_constant(params: &VtraceParams, beta: f64) -> Result<f64> {
    params.validate()?;
    let x = beta * params.c_bar;
    let r2 = 32.0 * params.rho_bar * params.rho_bar;
    Ok(if x < 1.0 {
        r2 / (1.0 - x).powi(2)
    } else if x == 1.0 {
        r2 * (params.n as f64).powi(2)
    } else {
        r2 * x.powi(2 * params.n as i32) / (x - 1.0).powi(2)
    })
}

/// Exact expected V-trace operator `V + sum_{t<n} beta^t Q_c^t b`, evaluated
/// by Horner's rule.
pub fn vtrace_operator(
    mdp: &Mdp,
    pi: &Policy,
    pi_prime: &Policy,
    params: &VtraceParams,
    v: &[f64],
) -> Result<Vec<f64>> {
    params.validate()?;
    mdp.check_policy(pi)?;
    check_coverage(pi, pi_prime)?;
    check_dim(mdp.n_states, v.len())?;
    let (n, m) = (mdp.n_states, mdp.n_actions);
    let beta = mdp.beta;
    let mut qc = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for s in 0..n {
        for a in 0..m {
            let (t, bh) = (pi.prob(s, a), pi_prime.prob(s, a));
            let c = bh * truncated_ratio(t, bh, params.c_bar);
            let rho = bh * truncated_ratio(t, bh, params.rho_bar);
            let row = mdp.transition_row(a, s);
            if c != 0.0 {
                for (sp, p) in row.iter().enumerate() {
                    qc[(s, sp)] += c * p;
                }
            }
            if rho != 0.0 {
                let next: f64 = row.iter().zip(v).map(|(p, x)| p * x).sum();
                b[s] += rho * (mdp.reward(s, a) + beta * next - v[s]);
            }
        }
    }
    let mut r = b.clone();
    for _ in 1..params.n {
        r = &b + (&qc * &r) * beta;
    }
    Ok(v.iter().zip(r.iter()).map(|(x, y)| x + y).collect())
}

/// `beta^n P^n V + sum_{i<n} beta^i P^i R`, by Horner's rule.
pub fn tdn_operator(mdp: &Mdp, pi: &Policy, n: usize, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(mdp.n_states, v.len())?;
    if n == 0 {
        return Err(Error::InvalidParameter("horizon n must be at least 1".into()));
    }
    let p = mdp.policy_transition(pi)?;
    let r = mdp.policy_reward(pi)?;
    let mut x = DVector::from_column_slice(v);
    for _ in 0..n {
        x = &r + (&p * &x) * mdp.beta;
    }
    Ok(x.iter().copied().collect())
}

/// `T(Q)(s,a) = R(s,a) + beta sum_s' P_a(s,s') max_a' Q(s',a')`.
pub fn bellman_optimality(mdp: &Mdp, q: &[f64]) -> Result<Vec<f64>> {
    let (n, m) = (mdp.n_states, mdp.n_actions);
    check_dim(n * m, q.len())?;
    let best: Vec<f64> = q
        .chunks(m)
        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut out = vec![0.0; n * m];
    for s in 0..n {
        for a in 0..m {
            let next: f64 = mdp.transition_row(a, s).iter().zip(&best).map(|(p, v)| p * v).sum();
            out[s * m + a] = mdp.reward(s, a) + mdp.beta * next;
        }
    }
    Ok(out)
}

/// Optimal Q-function by policy iteration (exact up to the linear solves),
/// polished with value-iteration steps.
pub fn q_star(mdp: &Mdp) -> Result<Vec<f64>> {
    let (n, m) = (mdp.n_states, mdp.n_actions);
    let greedy = |q: &[f64], prev: Option<&[usize]>| -> Vec<usize> {
        (0..n)
            .map(|s| {
                let row = &q[s * m..(s + 1) * m];
                let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                match prev {
                    // keep the incumbent on ties so the loop terminates
                    Some(p) if row[p[s]] >= best - 1e-14 * best.abs().max(1.0) => p[s],
                    _ => row.iter().position(|v| *v == best).unwrap_or(0),
                }
            })
            .collect()
    };
    let q_of = |v: &[f64]| -> Vec<f64> {
        let mut q = vec![0.0; n * m];
        for s in 0..n {
            for a in 0..m {
                let next: f64 = mdp.transition_row(a, s).iter().zip(v).map(|(p, x)| p * x).sum();
                q[s * m + a] = mdp.reward(s, a) + mdp.beta * next;
            }
        }
        q
    };
    let mut actions = greedy(&mdp.rewards, None);
    let mut q = Vec::new();
    for _ in 0..10_000 {
        let v = value_of_policy(mdp, &Policy::deterministic(m, &actions)?)?;
        q = q_of(&v);
        let next = greedy(&q, Some(&actions));
        if next == actions {
            break;
        }
        actions = next;
    }
    for _ in 0..3 {
        let tq = bellman_optimality(mdp, &q)?;
        let residual = sup(&tq.iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<_>>());
        q = tq;
        if residual < 1e-14 {
            break;
        }
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// `||V_pi1 - V_pi2||_inf <= 2 / (1-beta)^2 ||pi1 - pi2||_inf`.
pub fn policy_lipschitz_check(mdp: &Mdp, pi1: &Policy, pi2: &Policy) -> Result<LipschitzCheck> {
    let v1 = value_of_policy(mdp, pi1)?;
    let v2 = value_of_policy(mdp, pi2)?;
    let lhs = v1.iter().zip(&v2).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let rhs = 2.0 / (1.0 - mdp.beta).powi(2) * pi1.distance(pi2)?;
    Ok(LipschitzCheck {
        lhs,
        rhs,
        ok: lhs <= rhs + 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linf_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn random_is_deterministic_and_valid() {
        let a = Mdp::random(10, 3, 0.9, 7).unwrap();
        let b = Mdp::random(10, 3, 0.9, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, Mdp::random(10, 3, 0.9, 8).unwrap());
        let one = Mdp::random(1, 4, 0.5, 123).unwrap();
        assert!(one.transitions().iter().all(|p| *p == 1.0));
    }

    #[test]
    fn rejects_malformed() {
        assert!(Mdp::new(2, 1, 0.9, vec![0.5, 0.5, 1.0, 0.1], vec![0.0, 0.0]).is_err());
        assert!(Mdp::new(1, 1, 1.0, vec![1.0], vec![0.0]).is_err());
        assert!(Mdp::new(1, 1, 0.5, vec![1.0], vec![1.5]).is_err());
        assert!(matches!(
            Mdp::new(1, 1, 0.5, vec![1.0, 0.0], vec![0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_state_value() {
        let mdp = Mdp::new(1, 1, 0.75, vec![1.0], vec![0.6]).unwrap();
        let v = value_of_policy(&mdp, &Policy::uniform(1, 1)).unwrap();
        assert!((v[0] - 0.6 / 0.25).abs() < 1e-14);
        let zero = Mdp::new(1, 1, 0.75, vec![1.0], vec![0.0]).unwrap();
        assert_eq!(value_of_policy(&zero, &Policy::uniform(1, 1)).unwrap(), vec![0.0]);
    }

    #[test]
    fn value_residual_small() {
        let mdp = Mdp::random(10, 3, 0.99, 3).unwrap();
        let pi = Policy::uniform(10, 3);
        let v = value_of_policy(&mdp, &pi).unwrap();
        let tv = tdn_operator(&mdp, &pi, 1, &v).unwrap();
        assert!(linf_diff(&v, &tv) < 1e-10);
    }

    #[test]
    fn stationary_examples() {
        // doubly stochastic two-state chain
        let mdp = Mdp::new(2, 1, 0.9, vec![0.3, 0.7, 0.7, 0.3], vec![0.0, 0.0]).unwrap();
        let lambda = stationary_distribution(&mdp, &Policy::uniform(2, 1)).unwrap();
        assert!((lambda[0] - 0.5).abs() < 1e-12 && (lambda[1] - 0.5).abs() < 1e-12);

        let id = Mdp::new(2, 1, 0.9, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            stationary_distribution(&id, &Policy::uniform(2, 1)),
            Err(Error::NonUniqueStationary)
        ));

        // periodic chain still has a unique stationary law
        let flip = Mdp::new(2, 1, 0.9, vec![0.0, 1.0, 1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let lambda = stationary_distribution(&flip, &Policy::uniform(2, 1)).unwrap();
        assert!((lambda[0] - 0.5).abs() < 1e-12);

        // transient state
        let absorb = Mdp::new(2, 1, 0.9, vec![0.5, 0.5, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            stationary_distribution(&absorb, &Policy::uniform(2, 1)),
            Err(Error::DegenerateStationary { state: 0, .. })
        ));
    }

    #[test]
    fn clipped_policy_examples() {
        let pi = Policy::new(1, 2, vec![1.0, 0.0]).unwrap();
        let mu = Policy::uniform(1, 2);
        let clipped = clipped_policy(&pi, &mu, 1.0).unwrap();
        assert_eq!(clipped.probs(), &[1.0, 0.0]);
        let (kc, kr) = kappa_constants(&pi, &mu, &VtraceParams { c_bar: 1.0, rho_bar: 1.0, n: 1 }).unwrap();
        assert_eq!((kc, kr), (0.5, 0.5));

        let same = kappa_constants(&mu, &mu, &VtraceParams { c_bar: 1.0, rho_bar: 2.0, n: 1 }).unwrap();
        assert_eq!(same, (1.0, 1.0));

        // no coverage
        assert!(matches!(
            clipped_policy(&mu, &pi, 1.0),
            Err(Error::Coverage { state: 0, action: 1 })
        ));
        assert_eq!(rho_max(&mu, &pi).unwrap(), f64::INFINITY);
    }

    #[test]
    fn noise_constant_branches() {
        // rho_bar >= c_bar forces rho_bar >= 1/beta > 1 on the middle branch
        let p = VtraceParams { c_bar: 2.0, rho_bar: 2.0, n: 5 };
        assert_eq!(vtrace_noise_constant(&p, 0.5).unwrap(), 32.0 * 4.0 * 25.0);
        let zero = VtraceParams { c_bar: 0.0, rho_bar: 2.0, n: 3 };
        assert_eq!(vtrace_noise_constant(&zero, 0.9).unwrap(), 128.0);
        let below = VtraceParams { c_bar: 1.98, rho_bar: 2.0, n: 5 };
        let v = vtrace_noise_constant(&below, 0.5).unwrap();
        assert!(v > 3200.0, "first branch near the boundary is {v}, far above the middle branch");
    }

    #[test]
    fn on_policy_contraction_is_beta_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pi = Policy::random(4, 3, &mut rng);
        for n in 1..6 {
            let g = vtrace_contraction_factor(&pi, &pi, &VtraceParams { c_bar: 1.0, rho_bar: 1.0, n }, 0.9).unwrap();
            assert!((g - 0.9f64.powi(n as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn bellman_examples() {
        let mdp = Mdp::new(1, 1, 0.5, vec![1.0], vec![1.0]).unwrap();
        let q = q_star(&mdp).unwrap();
        assert!((q[0] - 2.0).abs() < 1e-14);
        let mdp = Mdp::random(8, 3, 0.95, 11).unwrap();
        let q = q_star(&mdp).unwrap();
        let tq = bellman_optimality(&mdp, &q).unwrap();
        assert!(linf_diff(&q, &tq) < 1e-10);
    }

    #[test]
    fn tdn_fixed_point_and_one_step() {
        let mdp = Mdp::random(6, 2, 0.9, 5).unwrap();
        let pi = Policy::uniform(6, 2);
        let v = value_of_policy(&mdp, &pi).unwrap();
        assert!(linf_diff(&tdn_operator(&mdp, &pi, 4, &v).unwrap(), &v) < 1e-12);
        let w = vec![1.0, -2.0, 0.5, 0.0, 3.0, 1.0];
        let p = mdp.policy_transition(&pi).unwrap();
        let r = mdp.policy_reward(&pi).unwrap();
        let expected = r + p * DVector::from_column_slice(&w) * 0.9;
        let got = tdn_operator(&mdp, &pi, 1, &w).unwrap();
        assert!(linf_diff(&got, expected.as_slice()) < 1e-14);
    }

    #[test]
    fn mdp_round_trip_example() {
        let mdp = Mdp::random(3, 2, 0.9, 99).unwrap();
        let text = mdp.to_toml().unwrap();
        assert_eq!(Mdp::from_toml(&text).unwrap(), mdp);
        assert!(Mdp::from_toml(&format!("{text}\nextra = 1\n")).is_err());
    }

    proptest! {
        #[test]
        fn mdp_round_trip_exact(n in 1usize..5, m in 1usize..4, beta in 0.01f64..0.999, seed in any::<u64>()) {
            let mdp = Mdp::random(n, m, beta, seed).unwrap();
            let back = Mdp::from_toml(&mdp.to_toml().unwrap()).unwrap();
            prop_assert_eq!(back, mdp);
        }

        #[test]
        fn kappas_monotone_in_levels(seed in any::<u64>(), c in 0.0f64..2.0, dc in 0.0f64..1.0, dr in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pi = Policy::random(4, 3, &mut rng);
            let mu = Policy::random(4, 3, &mut rng);
            let lo = VtraceParams { c_bar: c, rho_bar: c + 0.5, n: 2 };
            let hi = VtraceParams { c_bar: c + dc, rho_bar: c + 0.5 + dc + dr, n: 2 };
            let (kc0, kr0) = kappa_constants(&pi, &mu, &lo).unwrap();
            let (kc1, kr1) = kappa_constants(&pi, &mu, &hi).unwrap();
            prop_assert!(kc1 >= kc0 && kr1 >= kr0);
            prop_assert!(kc0 <= kr0 && kr0 <= 1.0 + 1e-12);
        }
    }
}
