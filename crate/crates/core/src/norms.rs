//! Vector norms used by the bound calculus.
//!
//! Three families are supported: `lp` for `p >= 2`, the sup-norm, and a
//! weighted Euclidean norm `(x' diag(w) x)^(1/2)`. Besides evaluation, each
//! norm knows its dual, the smoothness constant of `1/2 ||.||^2` with respect
//! to itself, and the tight equivalence constants against the other norms
//! where those are known in closed form.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Norm {
    Lp { p: f64 },
    LInf,
    WeightedL2 { weights: Vec<f64> },
}

/// Constants `(lower, upper)` with `lower * ||x||_from <= ||x||_to <= upper * ||x||_from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConstants {
    pub lower: f64,
    pub upper: f64,
}

impl EquivalenceConstants {
    pub const IDENTITY: Self = Self {
        lower: 1.0,
        upper: 1.0,
    };
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::Lp { p } => write!(f, "l{p}"),
            Norm::LInf => write!(f, "linf"),
            Norm::WeightedL2 { weights } => write!(f, "weighted-l2(d={})", weights.len()),
        }
    }
}

impl Norm {
    pub fn l2() -> Self {
        Norm::Lp { p: 2.0 }
    }

    pub fn lp(p: f64) -> Result<Self> {
        let norm = Norm::Lp { p };
        norm.validate()?;
        Ok(norm)
    }

    pub fn weighted_l2(weights: Vec<f64>) -> Result<Self> {
        let norm = Norm::WeightedL2 { weights };
        norm.validate()?;
        Ok(norm)
    }

    /// The smoothing norm `lp` with `p = 4 ln d`, which keeps `d^(4/p) (p - 1)`
    /// within `4 e ln d`. Requires `d >= 2` so that `p >= 2` is not violated too
    /// badly; for `d` with `4 ln d < 2` the exponent is raised to 2.
    pub fn log_dimension_lp(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!(
                "log-dimension smoothing needs d >= 2, got {d}"
            )));
        }
        Norm::lp((4.0 * (d as f64).ln()).max(2.0))
    }

    /// Checks the construction invariants. Deserialized norms must pass this
    /// before use.
    pub fn validate(&self) -> Result<()> {
        match self {
            Norm::Lp { p } => {
                if !(p.is_finite() && *p >= 2.0) {
                    return Err(Error::InvalidNorm(format!("lp needs finite p >= 2, got {p}")));
                }
            }
            Norm::LInf => {}
            Norm::WeightedL2 { weights } => {
                if weights.is_empty() {
                    return Err(Error::InvalidNorm("weighted l2 needs at least one weight".into()));
                }
                if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                    return Err(Error::InvalidNorm(format!(
                        "weighted l2 weights must be positive, got {w}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The fixed dimension of a weighted norm; `None` for dimension-free norms.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Norm::WeightedL2 { weights } => Some(weights.len()),
            _ => None,
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self.dim() {
            Some(expected) => check_dim(expected, d),
            None => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.value(x))
    }

    /// Evaluation without the dimension check.
    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        match self {
            Norm::Lp { p } => lp_scaled(x, *p),
            Norm::LInf => sup(x),
            Norm::WeightedL2 { weights } => weights
                .iter()
                .zip(x)
                .map(|(w, v)| w * v * v)
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Dual norm `sup { <x, y> : ||y|| <= 1 }`.
    pub(crate) fn dual_value(&self, x: &[f64]) -> f64 {
        match self {
            Norm::Lp { p } => lp_scaled(x, *p / (*p - 1.0)),
            Norm::LInf => x.iter().map(|v| v.abs()).sum(),
            Norm::WeightedL2 { weights } => weights
                .iter()
                .zip(x)
                .map(|(w, v)| v * v / w)
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// `L` such that `1/2 ||.||^2` is `L`-smooth with respect to this norm.
    pub fn smoothness_constant(&self) -> Result<f64> {
        match self {
            Norm::Lp { p } => Ok(p - 1.0),
            Norm::WeightedL2 { .. } => Ok(1.0),
            Norm::LInf => Err(Error::NonSmoothNorm),
        }
    }

    /// Lipschitz constant of `grad 1/2 ||.||^2` measured in the Euclidean norm.
    ///
    /// For `p >= 2` the dual-norm bound `||.||_q >= ||.||_2 >= ||.||_p` turns
    /// the `(p - 1)`-smoothness into a Euclidean one with the same constant.
    pub(crate) fn euclidean_grad_lipschitz(&self) -> Result<f64> {
        match self {
            Norm::Lp { p } => Ok(p - 1.0),
            Norm::WeightedL2 { weights } => Ok(weights.iter().cloned().fold(0.0, f64::max)),
            Norm::LInf => Err(Error::NonSmoothNorm),
        }
    }

    /// Gradient of `1/2 ||x||^2`, written into `out`. Zero at the origin.
    pub fn half_sq_grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x.len())?;
        check_dim(x.len(), out.len())?;
        match self {
            Norm::Lp { p } => {
                // ||x||_p^(2-p) sign(x) |x|^(p-1) = r sign(x) (|x|/r)^(p-1)
                let r = lp_scaled(x, *p);
                if r == 0.0 {
                    out.fill(0.0);
                } else {
                    for (o, v) in out.iter_mut().zip(x) {
                        *o = r * v.signum() * (v.abs() / r).powf(p - 1.0);
                        if *v == 0.0 {
                            *o = 0.0;
                        }
                    }
                }
                Ok(())
            }
            Norm::WeightedL2 { weights } => {
                for ((o, v), w) in out.iter_mut().zip(x).zip(weights) {
                    *o = w * v;
                }
                Ok(())
            }
            Norm::LInf => Err(Error::NonSmoothNorm),
        }
    }

    /// Hessian of `1/2 ||x||^2` added into the row-major `d x d` buffer `out`
    /// after scaling by `scale`. `None` where it does not exist (sup-norm,
    /// `p < 2`).
    pub(crate) fn add_half_sq_hessian(&self, x: &[f64], scale: f64, out: &mut [f64]) -> Option<()> {
        let d = x.len();
        match self {
            Norm::Lp { p } if *p >= 2.0 => {
                let r = lp_scaled(x, *p);
                if r == 0.0 {
                    return if *p == 2.0 {
                        (0..d).for_each(|i| out[i * d + i] += scale);
                        Some(())
                    } else {
                        None
                    };
                }
                // (p-1) diag(|x|/r)^(p-2) + (2-p) v v^T, v = sign(x) (|x|/r)^(p-1)
                let v: Vec<f64> =
                    x.iter().map(|xi| xi.signum() * (xi.abs() / r).powf(p - 1.0)).collect();
                for i in 0..d {
                    out[i * d + i] += scale * (p - 1.0) * (x[i].abs() / r).powf(p - 2.0);
                    for j in 0..d {
                        out[i * d + j] += scale * (2.0 - p) * v[i] * v[j];
                    }
                }
                Some(())
            }
            Norm::WeightedL2 { weights } => {
                for (i, w) in weights.iter().enumerate() {
                    out[i * d + i] += scale * w;
                }
                Some(())
            }
            _ => None,
        }
    }

    /// `1/p` for the lp family (0 for the sup-norm).
    fn inverse_exponent(&self) -> Option<f64> {
        match self {
            Norm::Lp { p } => Some(1.0 / p),
            Norm::LInf => Some(0.0),
            Norm::WeightedL2 { .. } => None,
        }
    }
}

/// Tight constants with `lower * ||x||_from <= ||x||_to <= upper * ||x||_from`
/// for every `x` in `R^d`.
///
/// Supported pairs: identical norms, any two members of the lp/sup family,
/// and a probability-weighted l2 norm against the sup-norm (both directions).
/// Everything else is an error rather than a loose guess.
pub fn equivalence_constants(from: &Norm, to: &Norm, d: usize) -> Result<EquivalenceConstants> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    from.validate()?;
    to.validate()?;
    from.check_dim(d)?;
    to.check_dim(d)?;
    if from == to {
        return Ok(EquivalenceConstants::IDENTITY);
    }
    let df = d as f64;
    if let (Some(a), Some(b)) = (from.inverse_exponent(), to.inverse_exponent()) {
        // ||x||_q <= ||x||_p <= d^(1/p - 1/q) ||x||_q for p <= q
        return Ok(if a <= b {
            EquivalenceConstants {
                lower: 1.0,
                upper: df.powf(b - a),
            }
        } else {
            EquivalenceConstants {
                lower: df.powf(b - a),
                upper: 1.0,
            }
        });
    }
    let unsupported = || Error::UnsupportedEquivalence {
        from: from.to_string(),
        to: to.to_string(),
    };
    match (from, to) {
        (Norm::LInf, Norm::WeightedL2 { weights }) => {
            let (min_w, _) = probability_weights(weights).ok_or_else(unsupported)?;
            Ok(EquivalenceConstants {
                lower: min_w.sqrt(),
                upper: 1.0,
            })
        }
        (Norm::WeightedL2 { weights }, Norm::LInf) => {
            let (min_w, _) = probability_weights(weights).ok_or_else(unsupported)?;
            Ok(EquivalenceConstants {
                lower: 1.0,
                upper: 1.0 / min_w.sqrt(),
            })
        }
        _ => Err(unsupported()),
    }
}

/// `(min weight, sum)` when the weights form a probability vector.
fn probability_weights(weights: &[f64]) -> Option<(f64, f64)> {
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return None;
    }
    let min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    Some((min, sum))
}

pub(crate) fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `||x||_p` evaluated as `||x||_inf * || x / ||x||_inf ||_p` so large `p`
/// cannot overflow. Accepts any `p >= 1`.
pub(crate) fn lp_scaled(x: &[f64], p: f64) -> f64 {
    let m = sup(x);
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    if p == 2.0 {
        return m * x.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt();
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
