//! Closed-form bound curves for `contract-sa bounds`.
//!
//! The general-purpose curves (`theorem1_bound`, `corollary1_bound`,
//! `corollary2_bound`) use the log-dimension instantiation: sup-norm
//! contraction in dimension `dim`, smoothing norm `l_p` with `p = 4 ln d`.

use crate::bounds::{
    build_schedule, corollary1_bound, corollary2_bound, corollary3_constants, schedule_offset, theorem1_bound,
    theorem2_bound, theorem3_bound, theorem3_schedule, theorem4_bound, theorem5a_bound, theorem5b_bound,
    theorem5b_schedule, AveragedRegime, ProblemConstants, StepsizeSchedule,
};
use crate::error::{Error, Result};

use super::output::CurveTable;

#[derive(Debug, Clone, PartialEq)]
pub enum BoundRequest {
    Theorem1 {
        gamma: f64,
        dim: usize,
        problem: ProblemConstants,
        eps: StepChoice,
        xi: Option<f64>,
    },
    Corollary1 {
        gamma: f64,
        dim: usize,
        problem: ProblemConstants,
        eps: StepChoice,
    },
    Corollary2 {
        gamma: f64,
        dim: usize,
        problem: ProblemConstants,
        eps: StepChoice,
        xi: f64,
    },
    Theorem2 {
        distance: f64,
        noise_a: f64,
        eps: f64,
        regime: AveragedRegime,
    },
    Theorem3 {
        gamma: f64,
        noise_a: f64,
        n_states: usize,
        initial_error_sq: f64,
        fixed_point_norm: f64,
    },
    Theorem4 {
        beta: f64,
        n: usize,
        eps: f64,
        initial_error_sq: f64,
        fixed_point_norm: f64,
    },
    Theorem5a {
        beta: f64,
        n_pairs: usize,
        eps: f64,
        initial_error_sq: f64,
        fixed_point_norm: f64,
    },
    Theorem5b {
        beta: f64,
        n_pairs: usize,
        initial_error_sq: f64,
        fixed_point_norm: f64,
    },
}

/// A stepsize given directly or as a multiple of `1 / alpha2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepChoice {
    Value(f64),
    OverAlpha2(f64),
}

/// The curve for `k = 0..=k_max` plus named scalars worth reporting (the
/// offset `K`, the alphas).
pub fn bound_curve(request: &BoundRequest, k_max: usize) -> Result<(CurveTable, Vec<(String, f64)>)> {
    let ks: Vec<usize> = (0..=k_max).collect();
    let mut info = Vec::new();
    let curve = |f: &dyn Fn(usize) -> Result<f64>| -> Result<Vec<f64>> { ks.iter().map(|k| f(*k)).collect() };
    let (label, values) = match request {
        BoundRequest::Theorem1 {
            gamma,
            dim,
            problem,
            eps,
            xi,
        } => {
            let alphas = corollary3_constants(*gamma, *dim, problem.b)?;
            let eps = resolve(*eps, alphas.alpha2);
            let schedule = build_schedule(&alphas, eps, *xi)?;
            push_alphas(&mut info, alphas.alpha1, alphas.alpha2, alphas.alpha3, alphas.alpha4);
            if let StepsizeSchedule::Polynomial { offset, .. } = schedule {
                info.push(("K".into(), offset));
            }
            ("theorem1", theorem1_bound(&alphas, &schedule, problem, k_max)?)
        }
        BoundRequest::Corollary1 {
            gamma,
            dim,
            problem,
            eps,
        } => {
            let alphas = corollary3_constants(*gamma, *dim, problem.b)?;
            let eps = resolve(*eps, alphas.alpha2);
            build_schedule(&alphas, eps, None)?;
            push_alphas(&mut info, alphas.alpha1, alphas.alpha2, alphas.alpha3, alphas.alpha4);
            ("corollary1", curve(&|k| corollary1_bound(&alphas, eps, problem, k))?)
        }
        BoundRequest::Corollary2 {
            gamma,
            dim,
            problem,
            eps,
            xi,
        } => {
            let alphas = corollary3_constants(*gamma, *dim, problem.b)?;
            let eps = resolve(*eps, alphas.alpha2);
            push_alphas(&mut info, alphas.alpha1, alphas.alpha2, alphas.alpha3, alphas.alpha4);
            info.push(("K".into(), schedule_offset(&alphas, eps, *xi)?));
            ("corollary2", curve(&|k| corollary2_bound(&alphas, eps, *xi, problem, k))?)
        }
        BoundRequest::Theorem2 {
            distance,
            noise_a,
            eps,
            regime,
        } => {
            // diminishing regimes start at k = 1; k = 0 stays empty
            let mut values = Vec::with_capacity(ks.len());
            for k in &ks {
                values.push(match theorem2_bound(*distance, *noise_a, *eps, *regime, *k) {
                    Ok(v) => v,
                    Err(_) if *k == 0 && *regime != AveragedRegime::Constant => f64::NAN,
                    Err(e) => return Err(e),
                });
            }
            ("theorem2", values)
        }
        BoundRequest::Theorem3 {
            gamma,
            noise_a,
            n_states,
            initial_error_sq,
            fixed_point_norm,
        } => {
            if let StepsizeSchedule::Polynomial { eps, offset, .. } = theorem3_schedule(*gamma, *noise_a, *n_states)? {
                info.push(("eps".into(), eps));
                info.push(("K".into(), offset));
            }
            (
                "theorem3",
                curve(&|k| theorem3_bound(*gamma, *noise_a, *n_states, *initial_error_sq, *fixed_point_norm, k))?,
            )
        }
        BoundRequest::Theorem4 {
            beta,
            n,
            eps,
            initial_error_sq,
            fixed_point_norm,
        } => (
            "theorem4",
            curve(&|k| theorem4_bound(*beta, *n, *eps, *initial_error_sq, *fixed_point_norm, k))?,
        ),
        BoundRequest::Theorem5a {
            beta,
            n_pairs,
            eps,
            initial_error_sq,
            fixed_point_norm,
        } => (
            "theorem5a",
            curve(&|k| theorem5a_bound(*beta, *n_pairs, *eps, *initial_error_sq, *fixed_point_norm, k))?,
        ),
        BoundRequest::Theorem5b {
            beta,
            n_pairs,
            initial_error_sq,
            fixed_point_norm,
        } => {
            if let StepsizeSchedule::Polynomial { eps, offset, .. } = theorem5b_schedule(*beta, *n_pairs)? {
                info.push(("eps".into(), eps));
                info.push(("K".into(), offset));
            }
            (
                "theorem5b",
                curve(&|k| theorem5b_bound(*beta, *n_pairs, *initial_error_sq, *fixed_point_norm, k))?,
            )
        }
    };
    if values.iter().any(|v| v.is_infinite()) {
        return Err(Error::InvalidParameter("bound overflowed".into()));
    }
    let n = ks.len();
    let table = CurveTable {
        label: label.to_string(),
        k: ks,
        mean: vec![f64::NAN; n],
        stderr: vec![f64::NAN; n],
        bound: values.into_iter().map(|v| (!v.is_nan()).then_some(v)).collect(),
    };
    Ok((table, info))
}

fn resolve(eps: StepChoice, alpha2: f64) -> f64 {
    match eps {
        StepChoice::Value(v) => v,
        StepChoice::OverAlpha2(c) => c / alpha2,
    }
}

fn push_alphas(info: &mut Vec<(String, f64)>, a1: f64, a2: f64, a3: f64, a4: f64) {
    for (name, v) in [("alpha1", a1), ("alpha2", a2), ("alpha3", a3), ("alpha4", a4)] {
        info.push((name.into(), v));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn theorem5b_reports_offset() {
        let req = BoundRequest::Theorem5b {
            beta: 0.9,
            n_pairs: 30,
            initial_error_sq: 1.0,
            fixed_point_norm: 2.0,
        };
        let (table, info) = bound_curve(&req, 3).unwrap();
        assert_eq!(table.k, vec![0, 1, 2, 3]);
        let k = info.iter().find(|(n, _)| n == "K").unwrap().1;
        let expected = 640.0 * E * 30f64.ln() / 0.001;
        assert!((k - expected).abs() <= 1e-9 * expected);
        assert!(table.bound.iter().all(|b| b.is_some()));
    }

    #[test]
    fn single_row_at_zero() {
        let req = BoundRequest::Theorem2 {
            distance: 1.0,
            noise_a: 0.5,
            eps: 0.5,
            regime: AveragedRegime::Constant,
        };
        let (table, _) = bound_curve(&req, 0).unwrap();
        assert_eq!(table.to_csv().lines().count(), 2);
    }

    #[test]
    fn corollary2_critical_case() {
        let problem = ProblemConstants {
            initial_error_sq: 1.0,
            a: 1.0,
            b: 1.0,
            x_star_norm: 1.0,
        };
        let req = BoundRequest::Corollary2 {
            gamma: 0.5,
            dim: 10,
            problem,
            eps: StepChoice::OverAlpha2(1.0),
            xi: 1.0,
        };
        let (table, _) = bound_curve(&req, 100).unwrap();
        assert!(table.bound.iter().all(|b| b.unwrap().is_finite()));
    }

    #[test]
    fn refuses_violated_preconditions() {
        let req = BoundRequest::Theorem4 {
            beta: 0.9,
            n: 1,
            eps: 0.5,
            initial_error_sq: 1.0,
            fixed_point_norm: 1.0,
        };
        assert!(matches!(bound_curve(&req, 5), Err(Error::StepsizeTooLarge { .. })));
    }
}
