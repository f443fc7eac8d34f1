//! Generalized Moreau envelope of `f(u) = 1/2 ||u||_c^2` smoothed by
//! `g(z) = 1/2 ||z||_s^2`:
//!
//! ```text
//! M(x) = min_u  1/2 ||u||_c^2 + 1/(2 mu) ||x - u||_s^2
//! ```
//!
//! Identical norms, pairs of (weighted) Euclidean norms, and a sup-norm `c`
//! are solved directly (the last by a 1-D search over the clip level). Other
//! pairs run an accelerated proximal-gradient method (FISTA with
//! function-value restart) with the `s`-term as smooth part and `f` as
//! proximable part. Every result is certified by the Fenchel duality gap
//!
//! ```text
//! gap(u) = P(u) - [ <x, y> - 1/2 ||y||_{c*}^2 - mu/2 ||y||_{s*}^2 ],   y = grad g(x - u) / mu
//! ```
//!
//! which upper-bounds `P(u) - M(x)`, so the reported value is never more than
//! `residual` above the true infimum.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::norms::{dot, equivalence_constants, EquivalenceConstants, Norm};

const MAX_ITERATIONS: usize = 200_000;
/// FISTA iterations before trying a Newton polish from the best iterate.
const NEWTON_AFTER: usize = 2_000;
const NEWTON_STEPS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub contraction_norm: Norm,
    pub smoothing_norm: Norm,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeValue {
    pub value: f64,
    pub minimizer: Vec<f64>,
    /// Duality gap at `minimizer`; bounds `value - M(x)`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichCheck {
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub f: f64,
    pub envelope: f64,
    pub constants: EquivalenceConstants,
}

impl EnvelopeSpec {
    pub fn new(contraction_norm: Norm, smoothing_norm: Norm, mu: f64) -> Result<Self> {
        let spec = Self {
            contraction_norm,
            smoothing_norm,
            mu,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.contraction_norm.validate()?;
        self.smoothing_norm.validate()?;
        self.smoothing_norm.smoothness_constant()?;
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "envelope needs mu > 0, got {}",
                self.mu
            )));
        }
        if let (Some(a), Some(b)) = (self.contraction_norm.dim(), self.smoothing_norm.dim()) {
            check_dim(a, b)?;
        }
        Ok(())
    }

    /// Smoothness constant `L` of `g` with respect to the smoothing norm.
    pub fn smoothness(&self) -> f64 {
        self.smoothing_norm
            .smoothness_constant()
            .expect("validated smoothing norm")
    }

    /// `f(x) = 1/2 ||x||_c^2`.
    pub fn f(&self, x: &[f64]) -> Result<f64> {
        Ok(0.5 * self.contraction_norm.eval(x)?.powi(2))
    }

    pub fn default_tol(&self, x: &[f64]) -> f64 {
        1e-8 * (1.0 + self.contraction_norm.value(x).powi(2))
    }

    fn check_input(&self, x: &[f64], tol: f64) -> Result<()> {
        self.contraction_norm.check_dim(x.len())?;
        self.smoothing_norm.check_dim(x.len())?;
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("envelope input has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64], tol: f64) -> Result<EnvelopeValue> {
        self.check_input(x, tol)?;
        let mut solver = Solver::new(self, x.len());
        solver.solve(x, tol)?;
        Ok(EnvelopeValue {
            value: solver.best_value,
            minimizer: solver.best_u,
            residual: solver.best_gap,
        })
    }

    /// `grad M(x) = grad g(x - u*) / mu`. The inner problem is solved up to
    /// three orders tighter than `tol` when the solver gets there, because the
    /// gradient error scales with the square root of the value error.
    pub fn gradient(&self, x: &[f64], tol: f64) -> Result<Vec<f64>> {
        self.check_input(x, tol)?;
        let mut solver = Solver::new(self, x.len());
        let floor = 1e-14 * (1.0 + self.contraction_norm.value(x).powi(2));
        match solver.solve(x, (tol * 1e-3).max(floor)) {
            Ok(()) => {}
            // the tighter target is best effort
            Err(Error::NotConverged { residual, .. }) if residual <= tol => {}
            Err(e) => return Err(e),
        }
        Ok(solver.best_y)
    }

    /// Checks `(1 + mu/u_cs^2) M <= f <= (1 + mu/l_cs^2) M` with slack `10 tol`
    /// scaled by the larger multiplier.
    pub fn sandwich_check(&self, x: &[f64], tol: f64) -> Result<SandwichCheck> {
        let constants =
            equivalence_constants(&self.contraction_norm, &self.smoothing_norm, x.len())?;
        let m = self.evaluate(x, tol)?.value;
        let f = self.f(x)?;
        let lo = 1.0 + self.mu / constants.upper.powi(2);
        let hi = 1.0 + self.mu / constants.lower.powi(2);
        let slack = 10.0 * tol * hi;
        Ok(SandwichCheck {
            lower_ok: lo * m <= f + slack,
            upper_ok: f <= hi * m + slack,
            f,
            envelope: m,
            constants,
        })
    }
}

/// Scratch state for one envelope solve.
struct Solver<'a> {
    spec: &'a EnvelopeSpec,
    z: Vec<f64>,
    grad: Vec<f64>,
    sort_buf: Vec<f64>,
    best_u: Vec<f64>,
    best_y: Vec<f64>,
    best_value: f64,
    best_gap: f64,
}

impl<'a> Solver<'a> {
    fn new(spec: &'a EnvelopeSpec, d: usize) -> Self {
        Self {
            spec,
            z: vec![0.0; d],
            grad: vec![0.0; d],
            sort_buf: Vec::with_capacity(d),
            best_u: vec![0.0; d],
            best_y: vec![0.0; d],
            best_value: f64::INFINITY,
            best_gap: f64::INFINITY,
        }
    }

    /// Primal value and duality gap at `u`; leaves `y = grad g(x-u)/mu` in `self.grad`.
    fn certify(&mut self, x: &[f64], u: &[f64]) -> (f64, f64) {
        let spec = self.spec;
        for ((z, xi), ui) in self.z.iter_mut().zip(x).zip(u) {
            *z = xi - ui;
        }
        let s = &spec.smoothing_norm;
        let c = &spec.contraction_norm;
        let primal = 0.5 * c.value(u).powi(2) + 0.5 / spec.mu * s.value(&self.z).powi(2);
        s.half_sq_grad(&self.z, &mut self.grad)
            .expect("validated smoothing norm");
        for g in self.grad.iter_mut() {
            *g /= spec.mu;
        }
        let y = &self.grad;
        let dual = dot(x, y)
            - 0.5 * c.dual_value(y).powi(2)
            - 0.5 * spec.mu * s.dual_value(y).powi(2);
        (primal, (primal - dual).max(0.0))
    }

    fn record(&mut self, u: &[f64], value: f64, gap: f64) {
        if value < self.best_value || (value == self.best_value && gap < self.best_gap) {
            self.best_value = value;
            self.best_gap = gap;
            self.best_u.copy_from_slice(u);
            self.best_y.copy_from_slice(&self.grad);
        }
    }

    /// Exact minimizer for the structured cases, a warm start otherwise.
    fn direct_candidate(&self, x: &[f64]) -> Vec<f64> {
        let spec = self.spec;
        let mu = spec.mu;
        let c = &spec.contraction_norm;
        let s = &spec.smoothing_norm;
        if c == s {
            return x.iter().map(|v| v / (1.0 + mu)).collect();
        }
        if let (Some(a), Some(b)) = (quadratic_weights(c, x.len()), quadratic_weights(s, x.len())) {
            // separable: a_i u_i = (b_i / mu) (x_i - u_i)
            return x
                .iter()
                .zip(a.iter().zip(&b))
                .map(|(xi, (ai, bi))| bi / mu * xi / (ai + bi / mu))
                .collect();
        }
        if *c == Norm::LInf {
            let level = linf_clip_level(s, mu, x);
            return x.iter().map(|v| v.signum() * v.abs().min(level)).collect();
        }
        x.iter().map(|v| v / (1.0 + mu)).collect()
    }

    fn solve(&mut self, x: &[f64], tol: f64) -> Result<()> {
        let spec = self.spec;
        let d = x.len();
        if x.iter().all(|v| *v == 0.0) {
            self.best_value = 0.0;
            self.best_gap = 0.0;
            self.best_u.fill(0.0);
            self.best_y.fill(0.0);
            return Ok(());
        }
        let mut u = self.direct_candidate(x);
        let (mut value, gap) = self.certify(x, &u);
        self.record(&u, value, gap);
        if gap <= tol {
            return Ok(());
        }

        let lipschitz = spec
            .smoothing_norm
            .euclidean_grad_lipschitz()
            .expect("validated smoothing norm");
        // Euclidean Lipschitz constant of the smooth part is lipschitz / mu,
        // so the prox step is mu / lipschitz.
        let step = spec.mu / lipschitz;

        let mut w = u.clone();
        let mut v = vec![0.0; d];
        let mut u_next = vec![0.0; d];
        let mut t = 1.0f64;
        for iteration in 0..MAX_ITERATIONS {
            if iteration == NEWTON_AFTER && self.newton_polish(x, tol) {
                return Ok(());
            }
            for (zi, (xi, wi)) in self.z.iter_mut().zip(x.iter().zip(&w)) {
                *zi = xi - wi;
            }
            spec.smoothing_norm
                .half_sq_grad(&self.z, &mut self.grad)
                .expect("validated smoothing norm");
            for ((vi, wi), gi) in v.iter_mut().zip(&w).zip(&self.grad) {
                *vi = wi + gi / lipschitz;
            }
            prox_half_sq(&spec.contraction_norm, step, &v, &mut u_next, &mut self.sort_buf);

            let (next_value, gap) = self.certify(x, &u_next);
            self.record(&u_next, next_value, gap);
            if self.best_gap <= tol {
                return Ok(());
            }
            if next_value > value {
                // Momentum overshot: restart from the last accepted point.
                t = 1.0;
                w.copy_from_slice(&u);
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for ((wi, un), ui) in w.iter_mut().zip(&u_next).zip(&u) {
                *wi = un + beta * (un - ui);
            }
            std::mem::swap(&mut u, &mut u_next);
            value = next_value;
            t = t_next;
        }
        Err(Error::NotConverged {
            best_value: self.best_value,
            residual: self.best_gap,
            iterations: MAX_ITERATIONS,
        })
    }
}

impl Solver<'_> {
    /// Damped Newton from the best iterate, for pairs where both squared
    /// norms are twice differentiable. FISTA slows to a crawl when the
    /// curvature of `|z|^p` is small; Newton does not. Returns whether the gap
    /// reached `tol`.
    fn newton_polish(&mut self, x: &[f64], tol: f64) -> bool {
        let spec = self.spec;
        let (c, s, mu) = (&spec.contraction_norm, &spec.smoothing_norm, spec.mu);
        let d = x.len();
        let objective = |u: &[f64], z: &mut Vec<f64>| -> f64 {
            for ((zi, xi), ui) in z.iter_mut().zip(x).zip(u) {
                *zi = xi - ui;
            }
            0.5 * c.value(u).powi(2) + 0.5 / mu * s.value(z).powi(2)
        };
        let mut u = self.best_u.clone();
        let mut z = vec![0.0; d];
        let mut gc = vec![0.0; d];
        let mut gs = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut trial = vec![0.0; d];
        let mut value = objective(&u, &mut z);
        for _ in 0..NEWTON_STEPS {
            if c.half_sq_grad(&u, &mut gc).is_err() || s.half_sq_grad(&z, &mut gs).is_err() {
                return false;
            }
            let grad: Vec<f64> = gc.iter().zip(&gs).map(|(a, b)| a - b / mu).collect();
            hess.fill(0.0);
            if c.add_half_sq_hessian(&u, 1.0, &mut hess).is_none()
                || s.add_half_sq_hessian(&z, 1.0 / mu, &mut hess).is_none()
            {
                return false;
            }
            let scale = (0..d).map(|i| hess[i * d + i]).sum::<f64>() / d as f64;
            let mut h = nalgebra::DMatrix::from_row_slice(d, d, &hess);
            for i in 0..d {
                h[(i, i)] += 1e-12 * scale.max(f64::MIN_POSITIVE);
            }
            let Some(chol) = h.cholesky() else {
                return false;
            };
            let step = chol.solve(&nalgebra::DVector::from_iterator(d, grad.iter().map(|g| -g)));
            let slope = dot(&grad, step.as_slice());
            if !(slope < 0.0) {
                return false;
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..50 {
                for ((t, ui), di) in trial.iter_mut().zip(&u).zip(step.iter()) {
                    *t = ui + alpha * di;
                }
                let next = objective(&trial, &mut z);
                if next <= value + 1e-4 * alpha * slope + 4.0 * f64::EPSILON * value.abs() {
                    accepted = true;
                    value = next;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return false;
            }
            std::mem::swap(&mut u, &mut trial);
            let (v, gap) = self.certify(x, &u);
            self.record(&u, v, gap);
            if self.best_gap <= tol {
                return true;
            }
        }
        false
    }
}

fn quadratic_weights(norm: &Norm, d: usize) -> Option<Vec<f64>> {
    match norm {
        Norm::Lp { p } if *p == 2.0 => Some(vec![1.0; d]),
        Norm::WeightedL2 { weights } => Some(weights.clone()),
        _ => None,
    }
}

/// With `c` the sup-norm and `s` monotone in `|z_i|`, the best `u` with
/// `||u||_inf <= t` is the clip of `x` at `t`, so the envelope reduces to
/// `min_t 1/2 t^2 + 1/(2 mu) ||(|x| - t)_+||_s^2`. That is convex in `t` with
/// derivative `t - sum_i grad g(z)_i / mu`; bisect on the derivative.
fn linf_clip_level(s: &Norm, mu: f64, x: &[f64]) -> f64 {
    let mut z = vec![0.0; x.len()];
    let mut g = vec![0.0; x.len()];
    let mut derivative = |t: f64| -> f64 {
        for (zi, xi) in z.iter_mut().zip(x) {
            *zi = (xi.abs() - t).max(0.0);
        }
        s.half_sq_grad(&z, &mut g).expect("validated smoothing norm");
        t - g.iter().sum::<f64>() / mu
    };
    let mut lo = 0.0;
    let mut hi = crate::norms::sup(x);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if derivative(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `prox_{lambda f}(v) = argmin_u lambda/2 ||u||^2 + 1/2 ||u - v||_2^2`.
pub(crate) fn prox_half_sq(norm: &Norm, lambda: f64, v: &[f64], out: &mut [f64], buf: &mut Vec<f64>) {
    match norm {
        Norm::Lp { p } if *p == 2.0 => {
            for (o, vi) in out.iter_mut().zip(v) {
                *o = vi / (1.0 + lambda);
            }
        }
        Norm::WeightedL2 { weights } => {
            for ((o, vi), w) in out.iter_mut().zip(v).zip(weights) {
                *o = vi / (1.0 + lambda * w);
            }
        }
        Norm::LInf => prox_linf(lambda, v, out, buf),
        Norm::Lp { p } => prox_lp(*p, lambda, v, out),
    }
}

/// Clip at the level `t` solving `lambda t = sum_i (|v_i| - t)_+`, found by a
/// sort-and-scan over the magnitudes.
fn prox_linf(lambda: f64, v: &[f64], out: &mut [f64], buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(v.iter().map(|x| x.abs()));
    buf.sort_unstable_by(|a, b| b.total_cmp(a));
    if buf.first().is_none_or(|a| *a == 0.0) {
        out.fill(0.0);
        return;
    }
    let mut sum = 0.0;
    let mut level = 0.0;
    for k in 0..buf.len() {
        sum += buf[k];
        level = sum / (k as f64 + 1.0 + lambda);
        if buf.get(k + 1).is_none_or(|next| *next <= level) {
            break;
        }
    }
    for (o, x) in out.iter_mut().zip(v) {
        *o = x.signum() * x.abs().min(level);
    }
}

/// General `p`: with `r = ||u||_p` and `u_i = r t_i sign(v_i)`, each `t_i`
/// solves `t + lambda t^(p-1) = |v_i| / r`, and `r` is the root of
/// `sum_i t_i(r)^p = 1`, which is decreasing in `r`. Bisection on `r` over
/// `[||v||_p / (1 + lambda), ||v||_p]`.
fn prox_lp(p: f64, lambda: f64, v: &[f64], out: &mut [f64]) {
    let norm_v = crate::norms::lp_scaled(v, p);
    if norm_v == 0.0 {
        out.fill(0.0);
        return;
    }
    let mass = |r: f64| -> f64 {
        v.iter()
            .map(|x| scalar_root(x.abs() / r, lambda, p).powf(p))
            .sum::<f64>()
    };
    let mut lo = norm_v / (1.0 + lambda);
    let mut hi = norm_v;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    for (o, x) in out.iter_mut().zip(v) {
        *o = x.signum() * r * scalar_root(x.abs() / r, lambda, p);
    }
}

/// Nonnegative root of `t + lambda t^(p-1) = c`. Newton from the right
/// converges monotonically since the left side is convex and increasing.
fn scalar_root(c: f64, lambda: f64, p: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let mut t = c.min((c / lambda).powf(1.0 / (p - 1.0)));
    for _ in 0..100 {
        let tp = t.powf(p - 2.0);
        let phi = t + lambda * tp * t - c;
        let step = phi / (1.0 + lambda * (p - 1.0) * tp);
        let next = (t - step).max(0.0);
        if (t - next).abs() <= 1e-15 * t {
            return next;
        }
        t = next;
    }
    t
}
