//! Experiment orchestration: turns an [`ExperimentSpec`] into curve tables,
//! a summary, and files on disk.

use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::config::{Experiment, ExperimentSpec, ScheduleSpec};
use super::output::{render_svg, write_atomic, CurveTable};
use crate::bounds::{
    theorem2_bound, theorem3_schedule, theorem4_max_step, theorem5a_max_step, theorem5b_schedule, StepsizeSchedule,
};
use crate::error::{Error, Result};
use crate::mdp::VtraceParams;
use crate::norms::Norm;
use crate::rl::{run_qlearning, run_tdn, run_vtrace, AlgorithmRun, QLearningConfig, TdnConfig, TdnOracle, VtraceConfig};
use crate::sa_engine::{
    gaussian_average_experiment, run_averaged_paths, run_paths, AffineOperator, CurveStats, GaussianOracle, RunOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub spec_sha256: String,
    /// Case label to CSV file name.
    pub files: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub title: String,
    pub cases: Vec<CurveTable>,
    pub summary: Summary,
}

fn resolve_schedule(spec: &ScheduleSpec, prescribed: impl FnOnce(&ScheduleSpec) -> Option<Result<StepsizeSchedule>>) -> Result<StepsizeSchedule> {
    if let Some(s) = spec.explicit() {
        s.validate()?;
        return Ok(s);
    }
    prescribed(spec).unwrap_or_else(|| {
        Err(Error::InvalidParameter(format!(
            "schedule {spec:?} does not apply to this algorithm"
        )))
    })
}

fn table_from_run(label: &str, run: &AlgorithmRun) -> Result<CurveTable> {
    let stats = run.run.error.as_ref().expect("fixed point is always set");
    let table = CurveTable::new(label, run.run.k.clone(), stats.mean.clone(), stats.stderr.clone())?;
    match &run.bound {
        Some(b) => table.with_bound(b.iter().copied().map(Some).collect()),
        None => Ok(table),
    }
}

/// The prescribed schedules promise a bound; failing to produce one is an error.
fn require_bound(spec: &ScheduleSpec, run: &AlgorithmRun, notes: &mut Vec<String>) -> Result<()> {
    if let Some(note) = &run.bound_note {
        if spec.explicit().is_none() {
            return Err(Error::InvalidParameter(format!("bound precondition violated: {note}")));
        }
        notes.push(format!("no bound overlay: {note}"));
    }
    Ok(())
}

/// `(ln m_0 - ln m_w) / w`.
pub fn initial_decay_rate(k: &[usize], mean: &[f64], window: usize) -> Result<f64> {
    let j = k
        .iter()
        .position(|v| *v == window)
        .ok_or_else(|| Error::InvalidParameter(format!("k = {window} was not recorded")))?;
    if window == 0 {
        return Err(Error::InvalidParameter("decay window must be positive".into()));
    }
    Ok((mean[0].ln() - mean[j].ln()) / window as f64)
}

/// Mean of the recorded values with `k` in the last quarter of the run.
pub fn asymptotic_level(k: &[usize], mean: &[f64]) -> f64 {
    let k_max = *k.last().unwrap_or(&0);
    let start = k_max - k_max / 4;
    let tail: Vec<f64> = k.iter().zip(mean).filter(|(k, _)| **k >= start).map(|(_, m)| *m).collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

pub fn run_experiment(spec: &ExperimentSpec, base_dir: &Path, spec_sha256: &str) -> Result<ExperimentOutput> {
    spec.validate()?;
    let (paths, k_max, seed) = (spec.paths, spec.k_max, spec.seed);
    let mut cases = Vec::new();
    let mut metrics = BTreeMap::new();
    let mut notes = Vec::new();
    let title;
    match &spec.experiment {
        Experiment::Vtrace {
            mdp,
            target,
            behavior,
            c_bar,
            rho_bar,
            n,
            schedule,
            x0,
        } => {
            let mdp = mdp.resolve(base_dir)?;
            let params = VtraceParams {
                c_bar: *c_bar,
                rho_bar: *rho_bar,
                n: *n,
            };
            let (t, b) = (target.resolve(&mdp)?, behavior.resolve(&mdp)?);
            let config = VtraceConfig::new(mdp, t, b, params)?;
            let gamma = config.contraction_factor()?;
            let a = config.noise_constant()?;
            let s = resolve_schedule(schedule, |s| {
                matches!(s, ScheduleSpec::Theorem3).then(|| theorem3_schedule(gamma, a, config.mdp.n_states()))
            })?;
            let run = run_vtrace(&config, &s, k_max, paths, seed, x0.clone())?;
            require_bound(schedule, &run, &mut notes)?;
            metrics.insert("contraction_factor".into(), gamma);
            metrics.insert("noise_constant".into(), a);
            cases.push(table_from_run("vtrace", &run)?);
            title = format!("V-trace, n = {n}: E||V_k - V*||_inf^2");
        }
        Experiment::Tdn {
            mdp,
            policy,
            n,
            schedule,
            x0,
        } => {
            let mdp = mdp.resolve(base_dir)?;
            let pi = policy.resolve(&mdp)?;
            let config = TdnConfig::new(mdp, pi, *n)?;
            let beta = config.mdp.beta();
            let s = resolve_schedule(schedule, |s| {
                matches!(s, ScheduleSpec::Theorem4)
                    .then(|| theorem4_max_step(beta, *n).map(|eps| StepsizeSchedule::Constant { eps }))
            })?;
            let run = run_tdn(&config, &s, k_max, paths, seed, x0.clone())?;
            require_bound(schedule, &run, &mut notes)?;
            cases.push(table_from_run(&format!("n={n}"), &run)?);
            title = format!("TD({n}): E||V_k - V_pi||_Lambda^2");
        }
        Experiment::Qlearning { mdp, schedule, x0 } => {
            let mdp = mdp.resolve(base_dir)?;
            let (beta, pairs) = (mdp.beta(), mdp.n_states() * mdp.n_actions());
            let s = resolve_schedule(schedule, |s| match s {
                ScheduleSpec::Theorem5a => {
                    Some(theorem5a_max_step(beta, pairs).map(|eps| StepsizeSchedule::Constant { eps }))
                }
                ScheduleSpec::Theorem5b => Some(theorem5b_schedule(beta, pairs)),
                _ => None,
            })?;
            let run = run_qlearning(&QLearningConfig { mdp }, &s, k_max, paths, seed, x0.clone())?;
            require_bound(schedule, &run, &mut notes)?;
            cases.push(table_from_run("qlearning", &run)?);
            title = "Q-learning: E||Q_k - Q*||_inf^2".to_string();
        }
        Experiment::Fig1 {
            mdp,
            policy,
            horizons,
            eps,
            decay_window,
        } => {
            let mdp = mdp.resolve(base_dir)?;
            let pi = policy.resolve(&mdp)?;
            let schedule = StepsizeSchedule::Constant { eps: *eps };
            schedule.validate()?;
            let window = (*decay_window).min(k_max);
            for (case, &n) in horizons.iter().enumerate() {
                let config = TdnConfig::new(mdp.clone(), pi.clone(), n)?;
                let v_star = crate::mdp::value_of_policy(&config.mdp, &config.policy)?;
                let oracle = TdnOracle::new(config)?;
                let x0 = vec![0.0; v_star.len()];
                for (tag, norm) in [("l2", Norm::l2()), ("linf", Norm::LInf)] {
                    let opts = RunOptions::new(norm).with_fixed_point(v_star.clone());
                    let run = run_paths(&oracle, &x0, &schedule, k_max, paths, seed, case as u32, &opts)?;
                    let stats = run.error.expect("fixed point set");
                    metrics.insert(
                        format!("initial_decay.{tag}.n{n}"),
                        initial_decay_rate(&run.k, &stats.mean, window)?,
                    );
                    metrics.insert(format!("asymptotic_mse.{tag}.n{n}"), asymptotic_level(&run.k, &stats.mean));
                    cases.push(CurveTable::new(format!("n={n} {tag}"), run.k, stats.mean, stats.stderr)?);
                }
            }
            notes.push(format!(
                "initial decay over the first {window} iterations; asymptotic level averaged over k >= {}",
                k_max - k_max / 4
            ));
            title = format!("TD(n), constant stepsize {eps}: mean square distance to V_pi");
        }
        Experiment::Theorem2 {
            theta,
            sigma,
            eps,
            regimes,
            x0,
        } => {
            let oracle = GaussianOracle {
                operator: AffineOperator::rotation(*theta),
                sigma: *sigma,
            };
            let a = 2.0 * sigma * sigma;
            let d = (x0[0] * x0[0] + x0[1] * x0[1]).sqrt();
            for (case, regime) in regimes.iter().enumerate() {
                let schedule = regime.schedule(*eps);
                let opts = RunOptions::new(Norm::l2());
                let run = run_averaged_paths(&oracle, x0, &schedule, k_max, paths, seed, case as u32, &opts)?;
                let CurveStats { mean, stderr } = run.residual_mean_running_min().expect("residuals recorded");
                let bound = run
                    .k
                    .iter()
                    .map(|k| match theorem2_bound(d, a, *eps, *regime, *k) {
                        Ok(b) => Ok(Some(b)),
                        Err(_) if *k == 0 => Ok(None),
                        Err(e) => Err(e),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let label = format!("{regime:?}").to_lowercase();
                cases.push(CurveTable::new(label, run.k, mean, stderr)?.with_bound(bound)?);
            }
            notes.push("curve: running minimum over recorded k of the path-mean squared residual".into());
            title = format!("Averaged iteration on a rotation by {theta}: min_i E||H(x_i) - x_i||^2");
        }
        Experiment::Tightness { dims } => {
            let table = gaussian_average_experiment(dims, k_max, paths, seed)?;
            for (i, d) in dims.iter().enumerate() {
                cases.push(CurveTable::new(
                    format!("d={d}"),
                    table.k.clone(),
                    table.mean[i].clone(),
                    table.stderr[i].clone(),
                )?);
                if k_max > 0 {
                    let (m, s) = table.scaled_at(k_max)?[i];
                    metrics.insert(format!("scaled.d{d}"), m);
                    metrics.insert(format!("scaled_stderr.d{d}"), s);
                }
            }
            if dims.len() >= 2 && k_max > 0 {
                let fit = table.log_dimension_fit(k_max)?;
                metrics.insert("log_d_fit.slope".into(), fit.slope);
                metrics.insert("log_d_fit.intercept".into(), fit.intercept);
                metrics.insert("log_d_fit.r_squared".into(), fit.r_squared);
            }
            title = "Running means of standard normals: E||x_k||_inf^2".to_string();
        }
    }
    let single = cases.len() == 1;
    let files = cases
        .iter()
        .map(|c| {
            let file = if single {
                format!("{}.csv", spec.name)
            } else {
                format!("{}.{}.csv", spec.name, slug(&c.label))
            };
            (c.label.clone(), file)
        })
        .collect();
    Ok(ExperimentOutput {
        title,
        cases,
        summary: Summary {
            name: spec.name.clone(),
            spec_sha256: spec_sha256.to_string(),
            files,
            metrics,
            notes,
        },
    })
}

/// Renders everything first, then writes each file atomically. Returns the
/// written paths.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let name = &output.summary.name;
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    for case in &output.cases {
        let file = &output.summary.files[&case.label];
        files.push((dir.join(file), case.to_csv().into_bytes()));
    }
    let note = format!("spec sha256 {}", output.summary.spec_sha256);
    files.push((dir.join(format!("{name}.svg")), render_svg(&output.title, &output.cases, &note).into_bytes()));
    let summary = toml::to_string(&output.summary).map_err(|e| Error::Parse(e.to_string()))?;
    files.push((dir.join(format!("{name}.summary.toml")), summary.into_bytes()));
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
