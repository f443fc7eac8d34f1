//! Stochastic approximation `x_{k+1} = x_k + eps_k (H(x_k) + w_k - x_k)`.
//!
//! Randomness: every path owns a ChaCha8 generator keyed by the base seed
//! with stream `(case << 32) | path`, so paths can run in any order or in
//! parallel and still produce bit-identical records. Aggregates over paths
//! use compensated summation in path order.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{AlphaConstants, StepsizeSchedule};
use crate::envelope::EnvelopeSpec;
use crate::error::{check_dim, Error, Result};
use crate::norms::Norm;

pub type PathRng = ChaCha8Rng;

/// Iterations recorded one by one before thinning starts.
const DENSE_RECORDING: usize = 1000;
const THINNING_RATIO: f64 = 1.05;

pub fn path_rng(seed: u64, case: u32, path: u32) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((case as u64) << 32) | path as u64);
    rng
}

/// Deterministic map `x -> H(x)`.
pub trait Operator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

/// Operator backed by a closure.
pub struct FnOperator<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> Operator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// An operator together with its claimed contraction certificate.
#[derive(Debug, Clone)]
pub struct OperatorModel<H> {
    pub operator: H,
    pub contraction_norm: Norm,
    pub gamma: f64,
    pub fixed_point: Option<Vec<f64>>,
}

/// `E ||w||_e^2 <= a + b ||x||_e^2` with `e = norm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub a: f64,
    pub b: f64,
    pub norm: Norm,
}

/// Noisy evaluations `H(x) + w` with `E[w | x] = 0`. Implementations must be
/// pure given `(x, rng)`.
pub trait NoisyOracle: Sync {
    fn dim(&self) -> usize;
    /// The mean operator `H(x)`.
    fn mean(&self, x: &[f64], out: &mut [f64]);
    fn sample(&self, x: &[f64], rng: &mut PathRng, out: &mut [f64]);
    fn noise_model(&self) -> NoiseModel;
}

pub trait Stepsizes: Sync {
    fn step(&self, k: usize) -> f64;
}

impl Stepsizes for StepsizeSchedule {
    fn step(&self, k: usize) -> f64 {
        StepsizeSchedule::step(self, k)
    }
}

impl<F: Fn(usize) -> f64 + Sync> Stepsizes for F {
    fn step(&self, k: usize) -> f64 {
        self(k)
    }
}

/// `H(x) = M x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineOperator {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineOperator {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        check_dim(matrix.nrows(), matrix.ncols())?;
        check_dim(matrix.nrows(), offset.len())?;
        Ok(Self { matrix, offset })
    }

    /// Rotation of the plane by `theta` about the origin.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            matrix: DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            offset: DVector::zeros(2),
        }
    }

    pub fn zero(d: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(d, d),
            offset: DVector::zeros(d),
        }
    }
}

impl Operator for AffineOperator {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.offset[i] + (0..x.len()).map(|j| self.matrix[(i, j)] * x[j]).sum::<f64>();
        }
    }
}

/// `H(x) + sigma * N(0, I)`; in the Euclidean norm `A = d sigma^2`, `B = 0`.
#[derive(Debug, Clone)]
pub struct GaussianOracle<H> {
    pub operator: H,
    pub sigma: f64,
}

impl<H: Operator> NoisyOracle for GaussianOracle<H> {
    fn dim(&self) -> usize {
        self.operator.dim()
    }

    fn mean(&self, x: &[f64], out: &mut [f64]) {
        self.operator.apply(x, out);
    }

    fn sample(&self, x: &[f64], rng: &mut PathRng, out: &mut [f64]) {
        self.operator.apply(x, out);
        if self.sigma != 0.0 {
            for o in out.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *o += self.sigma * z;
            }
        }
    }

    fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            a: self.dim() as f64 * self.sigma * self.sigma,
            b: 0.0,
            norm: Norm::l2(),
        }
    }
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Mean and standard error of the mean of `values`.
pub fn mean_stderr(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.into_iter().collect();
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut sum = KahanSum::default();
    values.iter().for_each(|v| sum.add(*v));
    let mean = sum.value() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut sq = KahanSum::default();
    values.iter().for_each(|v| sq.add((v - mean).powi(2)));
    let var = sq.value() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Every `k <= 1000`, then `ceil(1.05^j)` beyond, then `k_max`.
pub fn recording_points(k_max: usize) -> Vec<usize> {
    let mut points: Vec<usize> = (0..=k_max.min(DENSE_RECORDING)).collect();
    let mut j = (DENSE_RECORDING as f64).ln() / THINNING_RATIO.ln();
    j = j.floor();
    loop {
        let k = THINNING_RATIO.powf(j).ceil() as usize;
        if k > k_max {
            break;
        }
        if k > *points.last().unwrap_or(&0) {
            points.push(k);
        }
        j += 1.0;
    }
    if points.last() != Some(&k_max) {
        points.push(k_max);
    }
    points
}

/// What to record along a run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Norm for `||x_k - x*||^2`.
    pub error_norm: Norm,
    pub fixed_point: Option<Vec<f64>>,
    /// When set, also record `M(x_k - x*)`.
    pub envelope: Option<EnvelopeSpec>,
    pub keep_iterates: bool,
}

impl RunOptions {
    pub fn new(error_norm: Norm) -> Self {
        Self {
            error_norm,
            fixed_point: None,
            envelope: None,
            keep_iterates: false,
        }
    }

    pub fn with_fixed_point(mut self, x_star: Vec<f64>) -> Self {
        self.fixed_point = Some(x_star);
        self
    }

    pub fn with_envelope(mut self, spec: EnvelopeSpec) -> Self {
        self.envelope = Some(spec);
        self
    }

    pub fn keeping_iterates(mut self) -> Self {
        self.keep_iterates = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub k: Vec<usize>,
    /// `||x_k - x*||^2` in the error norm; needs a fixed point.
    pub error_sq: Option<Vec<f64>>,
    pub envelope: Option<Vec<f64>>,
    /// `||H(x_k) - x_k||_2^2` (averaged runs only).
    pub residual_sq: Option<Vec<f64>>,
    /// `min_{i <= k} ||H(x_i) - x_i||_2^2` over every iteration, recorded or not.
    pub residual_min: Option<Vec<f64>>,
    pub iterates: Option<Vec<Vec<f64>>>,
    pub final_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveStats {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl CurveStats {
    fn from_records<'a>(columns: impl Iterator<Item = &'a [f64]> + Clone, len: usize) -> Self {
        let (mean, stderr) = (0..len)
            .map(|i| mean_stderr(columns.clone().map(|c| c[i])))
            .unzip();
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRun {
    pub k: Vec<usize>,
    pub records: Vec<RunRecord>,
    pub error: Option<CurveStats>,
    pub envelope: Option<CurveStats>,
    pub residual: Option<CurveStats>,
    pub residual_min: Option<CurveStats>,
}

impl MultiRun {
    fn aggregate(records: Vec<RunRecord>) -> Self {
        let k = records[0].k.clone();
        let len = k.len();
        let stats = |pick: fn(&RunRecord) -> Option<&Vec<f64>>| -> Option<CurveStats> {
            pick(&records[0])?;
            Some(CurveStats::from_records(
                records.iter().map(move |r| pick(r).expect("uniform records").as_slice()),
                len,
            ))
        };
        let error = stats(|r| r.error_sq.as_ref());
        let envelope = stats(|r| r.envelope.as_ref());
        let residual = stats(|r| r.residual_sq.as_ref());
        let residual_min = stats(|r| r.residual_min.as_ref());
        Self {
            k,
            records,
            error,
            envelope,
            residual,
            residual_min,
        }
    }

    /// `min_{i <= k} E ||H(x_i) - x_i||^2` over the recorded points, with the
    /// standard error at the minimizing index.
    pub fn residual_mean_running_min(&self) -> Option<CurveStats> {
        let r = self.residual.as_ref()?;
        let mut best = (f64::INFINITY, 0.0);
        let (mut mean, mut stderr) = (Vec::new(), Vec::new());
        for (m, s) in r.mean.iter().zip(&r.stderr) {
            if *m < best.0 {
                best = (*m, *s);
            }
            mean.push(best.0);
            stderr.push(best.1);
        }
        Some(CurveStats { mean, stderr })
    }
}

fn check_run_inputs<O: NoisyOracle + ?Sized>(oracle: &O, x0: &[f64], opts: &RunOptions) -> Result<()> {
    check_dim(oracle.dim(), x0.len())?;
    opts.error_norm.check_dim(x0.len())?;
    if let Some(x_star) = &opts.fixed_point {
        check_dim(x0.len(), x_star.len())?;
    }
    if opts.envelope.is_some() && opts.fixed_point.is_none() {
        return Err(Error::InvalidParameter("envelope diagnostics need a fixed point".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { k: 0 });
    }
    Ok(())
}

fn run_path<O: NoisyOracle + ?Sized, S: Stepsizes + ?Sized>(
    oracle: &O,
    x0: &[f64],
    schedule: &S,
    k_max: usize,
    rng: &mut PathRng,
    opts: &RunOptions,
    track_residual: bool,
) -> Result<RunRecord> {
    let d = x0.len();
    let points = recording_points(k_max);
    let mut x = x0.to_vec();
    let mut sample = vec![0.0; d];
    let mut hx = vec![0.0; d];
    let mut diff = vec![0.0; d];
    let mut error_sq = opts.fixed_point.as_ref().map(|_| Vec::with_capacity(points.len()));
    let mut envelope = opts.envelope.as_ref().map(|_| Vec::with_capacity(points.len()));
    let mut residual_sq = track_residual.then(|| Vec::with_capacity(points.len()));
    let mut residual_min = track_residual.then(|| Vec::with_capacity(points.len()));
    let mut iterates = opts.keep_iterates.then(|| Vec::with_capacity(points.len()));
    let mut running_min = f64::INFINITY;
    let mut next_point = 0;

    for k in 0..=k_max {
        let mut residual_now = 0.0;
        if track_residual {
            oracle.mean(&x, &mut hx);
            residual_now = hx.iter().zip(&x).map(|(h, v)| (h - v).powi(2)).sum::<f64>();
            running_min = running_min.min(residual_now);
        }
        if next_point < points.len() && points[next_point] == k {
            next_point += 1;
            if let (Some(out), Some(x_star)) = (error_sq.as_mut(), opts.fixed_point.as_ref()) {
                for ((o, v), s) in diff.iter_mut().zip(&x).zip(x_star) {
                    *o = v - s;
                }
                out.push(opts.error_norm.value(&diff).powi(2));
                if let (Some(env), Some(spec)) = (envelope.as_mut(), opts.envelope.as_ref()) {
                    env.push(spec.evaluate(&diff, spec.default_tol(&diff))?.value);
                }
            }
            if let Some(out) = residual_sq.as_mut() {
                out.push(residual_now);
            }
            if let Some(out) = residual_min.as_mut() {
                out.push(running_min);
            }
            if let Some(out) = iterates.as_mut() {
                out.push(x.clone());
            }
        }
        if k == k_max {
            break;
        }
        let eps = schedule.step(k);
        oracle.sample(&x, rng, &mut sample);
        for (v, s) in x.iter_mut().zip(&sample) {
            *v += eps * (s - *v);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { k: k + 1 });
        }
    }
    Ok(RunRecord {
        k: points,
        error_sq,
        envelope,
        residual_sq,
        residual_min,
        iterates,
        final_x: x,
    })
}

/// One path on stream `(0, 0)` of `seed`.
pub fn run_sa<O: NoisyOracle + ?Sized, S: Stepsizes + ?Sized>(
    oracle: &O,
    x0: &[f64],
    schedule: &S,
    k_max: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunRecord> {
    check_run_inputs(oracle, x0, opts)?;
    run_path(oracle, x0, schedule, k_max, &mut path_rng(seed, 0, 0), opts, false)
}

fn check_paths(paths: usize) -> Result<u32> {
    if paths == 0 {
        return Err(Error::InvalidParameter("paths must be at least 1".into()));
    }
    u32::try_from(paths).map_err(|_| Error::InvalidParameter(format!("too many paths: {paths}")))
}

/// `paths` independent runs, evaluated in parallel, aggregated in path order.
#[allow(clippy::too_many_arguments)]
pub fn run_paths<O: NoisyOracle + ?Sized, S: Stepsizes + ?Sized>(
    oracle: &O,
    x0: &[f64],
    schedule: &S,
    k_max: usize,
    paths: usize,
    seed: u64,
    case: u32,
    opts: &RunOptions,
) -> Result<MultiRun> {
    let n = check_paths(paths)?;
    check_run_inputs(oracle, x0, opts)?;
    let records = (0..n)
        .into_par_iter()
        .map(|p| run_path(oracle, x0, schedule, k_max, &mut path_rng(seed, case, p), opts, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiRun::aggregate(records))
}

fn check_averaged<O: NoisyOracle + ?Sized>(oracle: &O) -> Result<()> {
    let noise = oracle.noise_model();
    if noise.b != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "averaged iteration needs B = 0 in the noise model, got B = {}",
            noise.b
        )));
    }
    Ok(())
}

/// Single-path averaged (non-expansive) run; records the residual and its
/// running minimum.
pub fn run_averaged<O: NoisyOracle + ?Sized, S: Stepsizes + ?Sized>(
    oracle: &O,
    x0: &[f64],
    schedule: &S,
    k_max: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunRecord> {
    check_averaged(oracle)?;
    check_run_inputs(oracle, x0, opts)?;
    run_path(oracle, x0, schedule, k_max, &mut path_rng(seed, 0, 0), opts, true)
}

#[allow(clippy::too_many_arguments)]
pub fn run_averaged_paths<O: NoisyOracle + ?Sized, S: Stepsizes + ?Sized>(
    oracle: &O,
    x0: &[f64],
    schedule: &S,
    k_max: usize,
    paths: usize,
    seed: u64,
    case: u32,
    opts: &RunOptions,
) -> Result<MultiRun> {
    check_averaged(oracle)?;
    let n = check_paths(paths)?;
    check_run_inputs(oracle, x0, opts)?;
    let records = (0..n)
        .into_par_iter()
        .map(|p| run_path(oracle, x0, schedule, k_max, &mut path_rng(seed, case, p), opts, true))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiRun::aggregate(records))
}

/// `E ||x_k||_inf^2` for running means of standard normal vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAverageTable {
    pub dims: Vec<usize>,
    pub k: Vec<usize>,
    /// `mean[i][j]` is the estimate for `dims[i]` at `k[j]`.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares `y ~ intercept + slope x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    check_dim(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::InvalidParameter("a line fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("line fit with constant abscissa".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

impl GaussianAverageTable {
    fn column(&self, k: usize) -> Result<usize> {
        self.k
            .iter()
            .position(|v| *v == k)
            .ok_or_else(|| Error::InvalidParameter(format!("k = {k} was not recorded")))
    }

    /// `k E ||x_k||_inf^2` per dimension, with its standard error.
    pub fn scaled_at(&self, k: usize) -> Result<Vec<(f64, f64)>> {
        let j = self.column(k)?;
        Ok(self
            .mean
            .iter()
            .zip(&self.stderr)
            .map(|(m, s)| (k as f64 * m[j], k as f64 * s[j]))
            .collect())
    }

    /// Fit of `k E ||x_k||_inf^2` against `ln d`.
    pub fn log_dimension_fit(&self, k: usize) -> Result<LinearFit> {
        let x: Vec<f64> = self.dims.iter().map(|d| (*d as f64).ln()).collect();
        let y: Vec<f64> = self.scaled_at(k)?.into_iter().map(|(m, _)| m).collect();
        linear_fit(&x, &y)
    }
}

/// Runs `x_{k+1} = x_k + (w_k - x_k)/(k+1)` from `x_0 = 0`, so `x_k` is the
/// mean of `k` standard normal vectors. Dimension `i` uses case `i` streams.
pub fn gaussian_average_experiment(
    dims: &[usize],
    k_max: usize,
    paths: usize,
    seed: u64,
) -> Result<GaussianAverageTable> {
    check_paths(paths)?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::InvalidParameter("dimensions must be nonempty and positive".into()));
    }
    let schedule = StepsizeSchedule::Polynomial {
        eps: 1.0,
        xi: 1.0,
        offset: 1.0,
    };
    let mut table = GaussianAverageTable {
        dims: dims.to_vec(),
        k: recording_points(k_max),
        mean: Vec::new(),
        stderr: Vec::new(),
    };
    for (i, &d) in dims.iter().enumerate() {
        // matrix-free: the dense zero matrix would make each step O(d^2)
        let oracle = GaussianOracle {
            operator: FnOperator {
                dim: d,
                f: |_: &[f64], out: &mut [f64]| out.fill(0.0),
            },
            sigma: 1.0,
        };
        let opts = RunOptions::new(Norm::LInf).with_fixed_point(vec![0.0; d]);
        let case = u32::try_from(i).map_err(|_| Error::InvalidParameter("too many dimensions".into()))?;
        let run = run_paths(&oracle, &vec![0.0; d], &schedule, k_max, paths, seed, case, &opts)?;
        let stats = run.error.expect("fixed point set");
        table.mean.push(stats.mean);
        table.stderr.push(stats.stderr);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCheck {
    /// Monte Carlo estimate of `E[M(x_{k+1} - x*) | x_k = x]`.
    pub lhs: f64,
    pub stderr: f64,
    pub rhs: f64,
    /// `rhs - lhs - 3 stderr`.
    pub margin: f64,
}

/// Samples per RNG stream in [`verify_drift`].
const DRIFT_CHUNK: usize = 1024;

/// Compares a Monte Carlo one-step estimate of the envelope drift with
/// `(1 - 2 alpha2 eps + alpha3 eps^2) M(x - x*) + alpha4 (A + 2B ||x*||_c^2) eps^2 / (2 (1 + mu / l_cs^2))`.
#[allow(clippy::too_many_arguments)]
pub fn verify_drift<O: NoisyOracle + ?Sized>(
    spec: &EnvelopeSpec,
    oracle: &O,
    alphas: &AlphaConstants,
    x: &[f64],
    x_star: &[f64],
    eps: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<DriftCheck> {
    let d = oracle.dim();
    check_dim(d, x.len())?;
    check_dim(d, x_star.len())?;
    if mc_samples < 2 {
        return Err(Error::InvalidParameter("drift check needs at least two samples".into()));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("stepsize must be >= 0, got {eps}")));
    }
    let chunks = mc_samples.div_ceil(DRIFT_CHUNK);
    let per_chunk = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut rng = path_rng(seed, 0, c as u32);
            let count = DRIFT_CHUNK.min(mc_samples - c * DRIFT_CHUNK);
            let mut sample = vec![0.0; d];
            let mut next = vec![0.0; d];
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                oracle.sample(x, &mut rng, &mut sample);
                for (((n, xi), si), ti) in next.iter_mut().zip(x).zip(&sample).zip(x_star) {
                    *n = xi + eps * (si - xi) - ti;
                }
                values.push(spec.evaluate(&next, spec.default_tol(&next))?.value);
            }
            Ok(values)
        })
        .collect::<Result<Vec<_>>>()?;
    let (lhs, stderr) = mean_stderr(per_chunk.into_iter().flatten());

    let diff: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
    let m_now = spec.evaluate(&diff, spec.default_tol(&diff))?.value;
    let noise = oracle.noise_model();
    let x_star_norm = spec.contraction_norm.eval(x_star)?;
    let variance = noise.a + 2.0 * noise.b * x_star_norm.powi(2);
    let l_cs = alphas.equiv_cs.lower;
    let rhs = (1.0 - 2.0 * alphas.alpha2 * eps + alphas.alpha3 * eps * eps) * m_now
        + alphas.alpha4 * variance * eps * eps / (2.0 * (1.0 + alphas.mu / (l_cs * l_cs)));
    Ok(DriftCheck {
        lhs,
        stderr,
        rhs,
        margin: rhs - lhs - 3.0 * stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub pairs: usize,
    pub violations: usize,
    /// Largest observed `||H(x) - H(y)|| / ||x - y||`.
    pub max_ratio: f64,
}

/// Tries to refute `||H(x) - H(y)||_c <= gamma ||x - y||_c` on random pairs:
/// half drawn as `scale * N(0, I)` around the origin, half as small
/// perturbations of one another.
pub fn refute_contraction<H: Operator>(
    model: &OperatorModel<H>,
    pairs: usize,
    scale: f64,
    seed: u64,
    abs_tol: f64,
) -> Result<ContractionReport> {
    let d = model.operator.dim();
    model.contraction_norm.check_dim(d)?;
    let mut rng = path_rng(seed, 0, 0);
    let normal = |rng: &mut PathRng, s: f64| -> Vec<f64> {
        (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                s * z
            })
            .collect()
    };
    let (mut hx, mut hy) = (vec![0.0; d], vec![0.0; d]);
    let mut report = ContractionReport {
        pairs,
        violations: 0,
        max_ratio: 0.0,
    };
    for i in 0..pairs {
        let x = normal(&mut rng, scale);
        let y = if i % 2 == 0 {
            normal(&mut rng, scale)
        } else {
            let delta = normal(&mut rng, scale * 1e-3);
            x.iter().zip(&delta).map(|(a, b)| a + b).collect()
        };
        model.operator.apply(&x, &mut hx);
        model.operator.apply(&y, &mut hy);
        let dxy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dh: Vec<f64> = hx.iter().zip(&hy).map(|(a, b)| a - b).collect();
        let (nx, nh) = (model.contraction_norm.value(&dxy), model.contraction_norm.value(&dh));
        if nh > model.gamma * nx + abs_tol {
            report.violations += 1;
        }
        if nx > 0.0 {
            report.max_ratio = report.max_ratio.max(nh / nx);
        }
    }
    Ok(report)
}
