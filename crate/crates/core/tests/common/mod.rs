//! Independent reference computations for integration tests. Nothing here
//! calls the library's numerical routines.

#![allow(dead_code)]

use contract_sa::mdp::{Mdp, Policy};
use contract_sa::norms::Norm;

pub fn norm_value(norm: &Norm, x: &[f64]) -> f64 {
    match norm {
        Norm::LInf => x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        Norm::Lp { p } => {
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                return 0.0;
            }
            scale * x.iter().map(|v| (v.abs() / scale).powf(*p)).sum::<f64>().powf(1.0 / p)
        }
        Norm::WeightedL2 { weights } => x.iter().zip(weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt(),
    }
}

/// `1/2 ||u||_c^2 + 1/(2 mu) ||x - u||_s^2`.
pub fn envelope_objective(c: &Norm, s: &Norm, mu: f64, x: &[f64], u: &[f64]) -> f64 {
    let diff: Vec<f64> = x.iter().zip(u).map(|(a, b)| a - b).collect();
    0.5 * norm_value(c, u).powi(2) + 0.5 * norm_value(s, &diff).powi(2) / mu
}

/// Coarse-to-fine grid minimization of the envelope objective, finishing on
/// a grid of spacing `h`. The minimizer lies in the `||x||_c` box because
/// `u = x` already achieves `1/2 ||x||_c^2`.
pub fn grid_envelope(c: &Norm, s: &Norm, mu: f64, x: &[f64], h: f64) -> f64 {
    let d = x.len();
    let radius = norm_value(c, x);
    if radius == 0.0 {
        return 0.0;
    }
    let mut center = vec![0.0; d];
    let mut step = radius / 8.0;
    let mut half = 8i64;
    let mut best = f64::INFINITY;
    loop {
        let last = step <= h;
        if last {
            step = h;
        }
        let side = (2 * half + 1) as usize;
        let total = side.pow(d as u32);
        let mut best_u = center.clone();
        let mut u = vec![0.0; d];
        for idx in 0..total {
            let mut rest = idx;
            for (i, ui) in u.iter_mut().enumerate() {
                let offset = (rest % side) as i64 - half;
                rest /= side;
                *ui = center[i] + offset as f64 * step;
            }
            let v = envelope_objective(c, s, mu, x, &u);
            if v < best {
                best = v;
                best_u.copy_from_slice(&u);
            }
        }
        center = best_u;
        if last {
            return best;
        }
        step /= 4.0;
        half = 8;
    }
}

/// `V_pi` by plain value iteration until successive iterates agree to `tol`.
pub fn value_iteration(mdp: &Mdp, pi: &Policy, tol: f64) -> Vec<f64> {
    let (n, m, beta) = (mdp.n_states(), mdp.n_actions(), mdp.beta());
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..m)
                    .map(|a| {
                        let p = mdp.transition_row(a, s);
                        let ev: f64 = p.iter().zip(&v).map(|(p, v)| p * v).sum();
                        pi.prob(s, a) * (mdp.reward(s, a) + beta * ev)
                    })
                    .sum()
            })
            .collect();
        let change = next.iter().zip(&v).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        v = next;
        // the remaining error is at most beta/(1-beta) times the last change
        if change * beta / (1.0 - beta) <= tol {
            return v;
        }
    }
}

pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Least-squares slope, intercept and R^2.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, sxy * sxy / (sxx * syy))
}
