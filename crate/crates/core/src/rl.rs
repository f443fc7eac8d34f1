//! Synchronous samplers for V-trace, TD(n) and Q-learning, each a
//! [`NoisyOracle`] around the exact operator from [`crate::mdp`].
//!
//! Within one oracle call, state (or state-action pair) `i` is simulated
//! after `i - 1` from the same path generator, so the per-state draws are
//! independent. V-trace and TD(n) consume the generator identically (action,
//! then successor, per step), which makes on-policy unclipped V-trace and
//! TD(n) produce the same trajectories under a shared seed.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::bounds::{
    theorem3_bound, theorem3_schedule, theorem4_bound, theorem4_max_step, theorem5a_bound, theorem5a_max_step,
    theorem5b_bound, theorem5b_schedule, StepsizeSchedule,
};
use crate::error::{check_dim, Error, Result};
use crate::mdp::{
    bellman_optimality, check_coverage, clipped_policy, q_star, stationary_distribution, tdn_operator, truncated_ratio,
    value_of_policy, vtrace_contraction_factor, vtrace_noise_constant, vtrace_operator, Mdp, Policy, VtraceParams,
};
use crate::norms::Norm;
use crate::sa_engine::{run_paths, MultiRun, NoiseModel, NoisyOracle, PathRng, RunOptions};

/// Sampling tables for one MDP.
#[derive(Debug, Clone)]
struct Tables {
    /// Indexed `a * n_states + s`.
    successors: Vec<WeightedIndex<f64>>,
}

impl Tables {
    fn new(mdp: &Mdp) -> Self {
        let n = mdp.n_states();
        let successors = (0..mdp.n_actions() * n)
            .map(|i| WeightedIndex::new(mdp.transition_row(i / n, i % n)).expect("validated transition row"))
            .collect();
        Self { successors }
    }

    fn next(&self, mdp: &Mdp, s: usize, a: usize, rng: &mut PathRng) -> usize {
        self.successors[a * mdp.n_states() + s].sample(rng)
    }
}

fn action_tables(pi: &Policy) -> Vec<WeightedIndex<f64>> {
    (0..pi.n_states())
        .map(|s| WeightedIndex::new(pi.row(s)).expect("validated policy row"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct VtraceConfig {
    pub mdp: Mdp,
    pub target: Policy,
    pub behavior: Policy,
    pub params: VtraceParams,
}

impl VtraceConfig {
    pub fn new(mdp: Mdp, target: Policy, behavior: Policy, params: VtraceParams) -> Result<Self> {
        params.validate()?;
        mdp.check_policy(&target)?;
        mdp.check_policy(&behavior)?;
        check_coverage(&target, &behavior)?;
        Ok(Self {
            mdp,
            target,
            behavior,
            params,
        })
    }

    /// `V_{pi_rho}`, the value of the clipped target policy.
    pub fn fixed_point(&self) -> Result<Vec<f64>> {
        let clipped = clipped_policy(&self.target, &self.behavior, self.params.rho_bar)?;
        value_of_policy(&self.mdp, &clipped)
    }

    pub fn contraction_factor(&self) -> Result<f64> {
        vtrace_contraction_factor(&self.target, &self.behavior, &self.params, self.mdp.beta())
    }

    pub fn noise_constant(&self) -> Result<f64> {
        vtrace_noise_constant(&self.params, self.mdp.beta())
    }
}

#[derive(Debug, Clone)]
pub struct TdnConfig {
    pub mdp: Mdp,
    pub policy: Policy,
    pub n: usize,
}

impl TdnConfig {
    pub fn new(mdp: Mdp, policy: Policy, n: usize) -> Result<Self> {
        mdp.check_policy(&policy)?;
        if n == 0 {
            return Err(Error::InvalidParameter("horizon n must be at least 1".into()));
        }
        Ok(Self { mdp, policy, n })
    }

    /// `||.||_Lambda`, weighted by the stationary distribution of the policy.
    pub fn lambda_norm(&self) -> Result<Norm> {
        Norm::weighted_l2(stationary_distribution(&self.mdp, &self.policy)?)
    }

    /// `(A, B) = (2 (1-beta^n)^2 / (1-beta)^2, 2 beta^{2n})` in the Lambda norm.
    pub fn noise_constants(&self) -> (f64, f64) {
        let beta = self.mdp.beta();
        let bn = beta.powi(self.n as i32);
        (2.0 * (1.0 - bn).powi(2) / (1.0 - beta).powi(2), 2.0 * bn * bn)
    }
}

#[derive(Debug, Clone)]
pub struct QLearningConfig {
    pub mdp: Mdp,
}

pub struct VtraceOracle {
    config: VtraceConfig,
    tables: Tables,
    actions: Vec<WeightedIndex<f64>>,
    /// Truncated ratios `min(c_bar, pi/pi')` and `min(rho_bar, pi/pi')`, `[s][a]`.
    c: Vec<f64>,
    rho: Vec<f64>,
    noise: NoiseModel,
}

impl VtraceOracle {
    pub fn new(config: VtraceConfig) -> Result<Self> {
        let (n, m) = (config.mdp.n_states(), config.mdp.n_actions());
        let ratio = |level: f64| -> Vec<f64> {
            (0..n * m)
                .map(|i| truncated_ratio(config.target.prob(i / m, i % m), config.behavior.prob(i / m, i % m), level))
                .collect()
        };
        let c = ratio(config.params.c_bar);
        let rho = ratio(config.params.rho_bar);
        let a = config.noise_constant()?;
        Ok(Self {
            tables: Tables::new(&config.mdp),
            actions: action_tables(&config.behavior),
            c,
            rho,
            noise: NoiseModel { a, b: a, norm: Norm::LInf },
            config,
        })
    }

    pub fn config(&self) -> &VtraceConfig {
        &self.config
    }
}

impl NoisyOracle for VtraceOracle {
    fn dim(&self) -> usize {
        self.config.mdp.n_states()
    }

    fn mean(&self, x: &[f64], out: &mut [f64]) {
        let c = &self.config;
        let v = vtrace_operator(&c.mdp, &c.target, &c.behavior, &c.params, x).expect("validated config");
        out.copy_from_slice(&v);
    }

    fn sample(&self, x: &[f64], rng: &mut PathRng, out: &mut [f64]) {
        let mdp = &self.config.mdp;
        let (m, beta) = (mdp.n_actions(), mdp.beta());
        for (s0, o) in out.iter_mut().enumerate() {
            let mut s = s0;
            let mut weight = 1.0;
            let mut acc = 0.0;
            for _ in 0..self.config.params.n {
                let a = self.actions[s].sample(rng);
                let next = self.tables.next(mdp, s, a, rng);
                let rho = self.rho[s * m + a];
                if rho != 0.0 {
                    acc += weight * rho * (mdp.reward(s, a) + beta * x[next] - x[s]);
                }
                weight *= beta * self.c[s * m + a];
                s = next;
            }
            *o = x[s0] + acc;
        }
    }

    fn noise_model(&self) -> NoiseModel {
        self.noise.clone()
    }
}

pub struct TdnOracle {
    config: TdnConfig,
    tables: Tables,
    actions: Vec<WeightedIndex<f64>>,
    noise: NoiseModel,
}

impl TdnOracle {
    pub fn new(config: TdnConfig) -> Result<Self> {
        let (a, b) = config.noise_constants();
        Ok(Self {
            tables: Tables::new(&config.mdp),
            actions: action_tables(&config.policy),
            noise: NoiseModel {
                a,
                b,
                norm: config.lambda_norm()?,
            },
            config,
        })
    }

    pub fn config(&self) -> &TdnConfig {
        &self.config
    }
}

impl NoisyOracle for TdnOracle {
    fn dim(&self) -> usize {
        self.config.mdp.n_states()
    }

    fn mean(&self, x: &[f64], out: &mut [f64]) {
        let c = &self.config;
        out.copy_from_slice(&tdn_operator(&c.mdp, &c.policy, c.n, x).expect("validated config"));
    }

    fn sample(&self, x: &[f64], rng: &mut PathRng, out: &mut [f64]) {
        let mdp = &self.config.mdp;
        let beta = mdp.beta();
        for (s0, o) in out.iter_mut().enumerate() {
            let mut s = s0;
            let mut discount = 1.0;
            let mut acc = 0.0;
            for _ in 0..self.config.n {
                let a = self.actions[s].sample(rng);
                let next = self.tables.next(mdp, s, a, rng);
                acc += discount * mdp.reward(s, a);
                discount *= beta;
                s = next;
            }
            *o = acc + discount * x[s];
        }
    }

    fn noise_model(&self) -> NoiseModel {
        self.noise.clone()
    }
}

pub struct QLearningOracle {
    mdp: Mdp,
    tables: Tables,
}

impl QLearningOracle {
    pub fn new(config: QLearningConfig) -> Self {
        Self {
            tables: Tables::new(&config.mdp),
            mdp: config.mdp,
        }
    }

    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }
}

impl NoisyOracle for QLearningOracle {
    fn dim(&self) -> usize {
        self.mdp.n_states() * self.mdp.n_actions()
    }

    fn mean(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&bellman_optimality(&self.mdp, x).expect("validated MDP"));
    }

    fn sample(&self, x: &[f64], rng: &mut PathRng, out: &mut [f64]) {
        let m = self.mdp.n_actions();
        let beta = self.mdp.beta();
        for (i, o) in out.iter_mut().enumerate() {
            let (s, a) = (i / m, i % m);
            let next = self.tables.next(&self.mdp, s, a, rng);
            let best = x[next * m..(next + 1) * m].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            *o = self.mdp.reward(s, a) + beta * best;
        }
    }

    fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            a: 8.0,
            b: 8.0,
            norm: Norm::LInf,
        }
    }
}

/// A multi-path run with its exact target and, when the schedule is one a
/// theorem covers, the bound at every recorded `k`.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub run: MultiRun,
    pub fixed_point: Vec<f64>,
    pub error_norm: Norm,
    pub bound: Option<Vec<f64>>,
    /// Why `bound` is absent.
    pub bound_note: Option<String>,
}

fn bound_curve(k: &[usize], f: impl Fn(usize) -> Result<f64>) -> Result<Vec<f64>> {
    k.iter().map(|k| f(*k)).collect()
}

fn finish(
    run: MultiRun,
    fixed_point: Vec<f64>,
    error_norm: Norm,
    bound: Option<Result<Vec<f64>>>,
    unmatched: &str,
) -> AlgorithmRun {
    let (bound, bound_note) = match bound {
        Some(Ok(b)) => (Some(b), None),
        Some(Err(e)) => (None, Some(e.to_string())),
        None => (None, Some(unmatched.to_string())),
    };
    AlgorithmRun {
        run,
        fixed_point,
        error_norm,
        bound,
        bound_note,
    }
}

fn start(x0: Option<Vec<f64>>, d: usize) -> Result<Vec<f64>> {
    let x0 = x0.unwrap_or_else(|| vec![0.0; d]);
    check_dim(d, x0.len())?;
    Ok(x0)
}

fn distance_sq(norm: &Norm, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm.value(&diff).powi(2)
}

#[allow(clippy::too_many_arguments)]
pub fn run_vtrace(
    config: &VtraceConfig,
    schedule: &StepsizeSchedule,
    k_max: usize,
    paths: usize,
    seed: u64,
    x0: Option<Vec<f64>>,
) -> Result<AlgorithmRun> {
    let oracle = VtraceOracle::new(config.clone())?;
    let v_star = config.fixed_point()?;
    let x0 = start(x0, v_star.len())?;
    let norm = Norm::LInf;
    let opts = RunOptions::new(norm.clone()).with_fixed_point(v_star.clone());
    let run = run_paths(&oracle, &x0, schedule, k_max, paths, seed, 0, &opts)?;
    let n_states = config.mdp.n_states();
    let bound = (|| -> Option<Result<Vec<f64>>> {
        let gamma = match config.contraction_factor() {
            Ok(g) => g,
            Err(e) => return Some(Err(e)),
        };
        let a = oracle.noise.a;
        let prescribed = theorem3_schedule(gamma, a, n_states).ok()?;
        (*schedule == prescribed).then(|| {
            let e0 = distance_sq(&norm, &x0, &v_star);
            let vn = norm.value(&v_star);
            bound_curve(&run.k, |k| theorem3_bound(gamma, a, n_states, e0, vn, k))
        })
    })();
    Ok(finish(run, v_star, norm, bound, "no V-trace bound for this schedule"))
}

pub fn run_tdn(
    config: &TdnConfig,
    schedule: &StepsizeSchedule,
    k_max: usize,
    paths: usize,
    seed: u64,
    x0: Option<Vec<f64>>,
) -> Result<AlgorithmRun> {
    let oracle = TdnOracle::new(config.clone())?;
    let v_star = value_of_policy(&config.mdp, &config.policy)?;
    let x0 = start(x0, v_star.len())?;
    let norm = oracle.noise.norm.clone();
    let opts = RunOptions::new(norm.clone()).with_fixed_point(v_star.clone());
    let run = run_paths(&oracle, &x0, schedule, k_max, paths, seed, 0, &opts)?;
    let beta = config.mdp.beta();
    let bound = match *schedule {
        StepsizeSchedule::Constant { eps } => Some(theorem4_max_step(beta, config.n).and_then(|_| {
            let e0 = distance_sq(&norm, &x0, &v_star);
            let vn = norm.value(&v_star);
            bound_curve(&run.k, |k| theorem4_bound(beta, config.n, eps, e0, vn, k))
        })),
        _ => None,
    };
    Ok(finish(run, v_star, norm, bound, "the TD(n) bound covers constant stepsizes only"))
}

pub fn run_qlearning(
    config: &QLearningConfig,
    schedule: &StepsizeSchedule,
    k_max: usize,
    paths: usize,
    seed: u64,
    x0: Option<Vec<f64>>,
) -> Result<AlgorithmRun> {
    let oracle = QLearningOracle::new(config.clone());
    let q = q_star(&config.mdp)?;
    let x0 = start(x0, q.len())?;
    let norm = Norm::LInf;
    let opts = RunOptions::new(norm.clone()).with_fixed_point(q.clone());
    let run = run_paths(&oracle, &x0, schedule, k_max, paths, seed, 0, &opts)?;
    let beta = config.mdp.beta();
    let pairs = q.len();
    let e0 = distance_sq(&norm, &x0, &q);
    let qn = norm.value(&q);
    let bound = match *schedule {
        StepsizeSchedule::Constant { eps } => Some(
            theorem5a_max_step(beta, pairs)
                .and_then(|_| bound_curve(&run.k, |k| theorem5a_bound(beta, pairs, eps, e0, qn, k))),
        ),
        _ => match theorem5b_schedule(beta, pairs) {
            Ok(prescribed) if prescribed == *schedule => {
                Some(bound_curve(&run.k, |k| theorem5b_bound(beta, pairs, e0, qn, k)))
            }
            _ => None,
        },
    };
    Ok(finish(
        run,
        q,
        norm,
        bound,
        "Q-learning bounds cover constant stepsizes and the prescribed 1/k schedule only",
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sa_engine::{mean_stderr, path_rng};

    fn deterministic_mdp() -> Mdp {
        // 3 states, 2 actions, one-hot rows
        let next = [[1, 2, 0], [2, 0, 1]];
        let mut t = vec![0.0; 2 * 3 * 3];
        for a in 0..2 {
            for s in 0..3 {
                t[a * 9 + s * 3 + next[a][s]] = 1.0;
            }
        }
        Mdp::new(3, 2, 0.8, t, vec![0.1, 0.9, 0.5, 0.3, 0.7, 0.2]).unwrap()
    }

    #[test]
    fn deterministic_vtrace_is_exact() {
        let mdp = deterministic_mdp();
        let pi = Policy::deterministic(2, &[0, 1, 1]).unwrap();
        let params = VtraceParams {
            c_bar: 1.0,
            rho_bar: 1.0,
            n: 4,
        };
        let oracle = VtraceOracle::new(VtraceConfig::new(mdp, pi.clone(), pi, params).unwrap()).unwrap();
        let v = [0.3, -1.0, 2.0];
        let (mut exact, mut sample) = ([0.0; 3], [0.0; 3]);
        oracle.mean(&v, &mut exact);
        oracle.sample(&v, &mut path_rng(0, 0, 0), &mut sample);
        for (a, b) in exact.iter().zip(&sample) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn deterministic_tdn_and_q_are_exact() {
        let mdp = deterministic_mdp();
        let pi = Policy::deterministic(2, &[0, 0, 0]).unwrap();
        let oracle = TdnOracle::new(TdnConfig::new(mdp.clone(), pi, 1).unwrap()).unwrap();
        let v = [1.0, 2.0, -3.0];
        let (mut exact, mut sample) = ([0.0; 3], [0.0; 3]);
        oracle.mean(&v, &mut exact);
        oracle.sample(&v, &mut path_rng(1, 0, 0), &mut sample);
        for (a, b) in exact.iter().zip(&sample) {
            assert!((a - b).abs() < 1e-14);
        }
        let q_oracle = QLearningOracle::new(QLearningConfig { mdp });
        let q = [0.5, -0.5, 1.0, 2.0, 0.0, 0.3];
        let (mut exact, mut sample) = ([0.0; 6], [0.0; 6]);
        q_oracle.mean(&q, &mut exact);
        q_oracle.sample(&q, &mut path_rng(2, 0, 0), &mut sample);
        assert_eq!(exact, sample);
    }

    #[test]
    fn on_policy_unclipped_vtrace_equals_tdn() {
        let mdp = Mdp::random(6, 3, 0.9, 4).unwrap();
        let pi = Policy::random(6, 3, &mut path_rng(5, 0, 0));
        for n in [1, 3, 7] {
            let params = VtraceParams {
                c_bar: 1.0,
                rho_bar: 1.0,
                n,
            };
            let vt = VtraceOracle::new(VtraceConfig::new(mdp.clone(), pi.clone(), pi.clone(), params).unwrap())
                .unwrap();
            let td = TdnOracle::new(TdnConfig::new(mdp.clone(), pi.clone(), n).unwrap()).unwrap();
            let v = [0.5, -1.0, 2.0, 0.0, 3.0, 1.5];
            let (mut rng_a, mut rng_b) = (path_rng(9, 0, 0), path_rng(9, 0, 0));
            for _ in 0..200 {
                let (mut a, mut b) = ([0.0; 6], [0.0; 6]);
                vt.sample(&v, &mut rng_a, &mut a);
                td.sample(&v, &mut rng_b, &mut b);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "n={n}: {x} vs {y}");
                }
            }
        }
    }

    fn assert_unbiased<O: NoisyOracle>(oracle: &O, x: &[f64], samples: usize, seed: u64) {
        let d = oracle.dim();
        let mut exact = vec![0.0; d];
        oracle.mean(x, &mut exact);
        let mut rng = path_rng(seed, 0, 0);
        let mut draws = vec![Vec::with_capacity(samples); d];
        let mut out = vec![0.0; d];
        for _ in 0..samples {
            oracle.sample(x, &mut rng, &mut out);
            for (col, v) in draws.iter_mut().zip(&out) {
                col.push(*v);
            }
        }
        for (i, col) in draws.into_iter().enumerate() {
            let (m, se) = mean_stderr(col);
            assert!((m - exact[i]).abs() <= 4.0 * se + 1e-12, "coordinate {i}: {m} vs {} (se {se})", exact[i]);
        }
    }

    #[test]
    fn samplers_are_unbiased() {
        let mdp = Mdp::random(5, 3, 0.9, 21).unwrap();
        let mut rng = path_rng(22, 0, 0);
        let pi = Policy::random(5, 3, &mut rng);
        let behavior = Policy::random(5, 3, &mut rng);
        let params = VtraceParams {
            c_bar: 0.8,
            rho_bar: 1.5,
            n: 3,
        };
        let v = [1.0, -2.0, 0.5, 3.0, 0.0];
        let vt = VtraceOracle::new(VtraceConfig::new(mdp.clone(), pi.clone(), behavior, params).unwrap()).unwrap();
        assert_unbiased(&vt, &v, 20_000, 1);
        let td = TdnOracle::new(TdnConfig::new(mdp.clone(), pi, 4).unwrap()).unwrap();
        assert_unbiased(&td, &v, 20_000, 2);
        let q: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        assert_unbiased(&QLearningOracle::new(QLearningConfig { mdp }), &q, 20_000, 3);
    }

    #[test]
    fn full_clipping_level_reaches_target_value() {
        let mdp = Mdp::random(4, 2, 0.7, 8).unwrap();
        let mut rng = path_rng(3, 0, 0);
        let pi = Policy::random(4, 2, &mut rng);
        let behavior = Policy::random(4, 2, &mut rng);
        let rho = crate::mdp::rho_max(&pi, &behavior).unwrap();
        let params = VtraceParams {
            c_bar: 1.0,
            rho_bar: rho.max(1.0),
            n: 2,
        };
        let config = VtraceConfig::new(mdp.clone(), pi.clone(), behavior, params).unwrap();
        let v_pi = value_of_policy(&mdp, &pi).unwrap();
        for (a, b) in config.fixed_point().unwrap().iter().zip(&v_pi) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn run_helpers_attach_bounds() {
        let mdp = Mdp::random(4, 2, 0.9, 2).unwrap();
        let pi = Policy::uniform(4, 2);
        let tdn = TdnConfig::new(mdp.clone(), pi, 2).unwrap();
        let eps = theorem4_max_step(0.9, 2).unwrap();
        let r = run_tdn(&tdn, &StepsizeSchedule::Constant { eps }, 50, 4, 0, None).unwrap();
        assert_eq!(r.bound.as_ref().unwrap().len(), r.run.k.len());
        let r = run_tdn(&tdn, &StepsizeSchedule::Constant { eps: 0.5 }, 10, 2, 0, None).unwrap();
        assert!(r.bound.is_none());
        assert!(r.bound_note.unwrap().contains("exceeds"));

        let q = QLearningConfig { mdp };
        let schedule = theorem5b_schedule(0.9, 8).unwrap();
        let r = run_qlearning(&q, &schedule, 20, 2, 0, None).unwrap();
        assert!(r.bound.is_some());
        let other = StepsizeSchedule::Polynomial {
            eps: 1.0,
            xi: 0.5,
            offset: 1.0,
        };
        assert!(run_qlearning(&q, &other, 20, 2, 0, None).unwrap().bound.is_none());
    }
}
