//! Experiment specification files (TOML, unknown keys rejected).
//!
//! ```toml
//! name = "td-n3"
//! seed = 7
//! paths = 200
//! k_max = 10000
//!
//! [experiment]
//! kind = "tdn"
//! n = 3
//! mdp = { kind = "random", n_states = 10, n_actions = 3, beta = 0.9, seed = 1 }
//! policy = { kind = "uniform" }
//! schedule = { kind = "theorem4" }
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use crate::bounds::{AveragedRegime, StepsizeSchedule};
use crate::error::{Error, Result};
use crate::mdp::{Mdp, Policy};
use crate::sa_engine::path_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub paths: usize,
    pub k_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Vtrace {
        mdp: MdpSource,
        target: PolicySource,
        behavior: PolicySource,
        c_bar: f64,
        rho_bar: f64,
        n: usize,
        schedule: ScheduleSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0: Option<Vec<f64>>,
    },
    Tdn {
        mdp: MdpSource,
        policy: PolicySource,
        n: usize,
        schedule: ScheduleSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0: Option<Vec<f64>>,
    },
    Qlearning {
        mdp: MdpSource,
        schedule: ScheduleSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0: Option<Vec<f64>>,
    },
    /// TD(n) for several horizons under one constant stepsize.
    Fig1 {
        mdp: MdpSource,
        policy: PolicySource,
        horizons: Vec<usize>,
        eps: f64,
        /// Iterations over which the initial decay rate is measured.
        #[serde(default = "default_decay_window")]
        decay_window: usize,
    },
    /// Averaged iteration on a planar rotation with Gaussian noise.
    Theorem2 {
        theta: f64,
        sigma: f64,
        eps: f64,
        regimes: Vec<AveragedRegime>,
        x0: Vec<f64>,
    },
    /// Running means of standard normal vectors in several dimensions.
    Tightness { dims: Vec<usize> },
}

fn default_decay_window() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    Random {
        n_states: usize,
        n_actions: usize,
        beta: f64,
        seed: u64,
    },
    /// Relative paths resolve against the spec file's directory.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySource {
    Uniform,
    Random { seed: u64 },
    Deterministic { actions: Vec<usize> },
    /// Row-major `[state][action]` probabilities.
    Table { probs: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { eps: f64 },
    Polynomial { eps: f64, xi: f64, offset: f64 },
    /// V-trace: `4/(1-gamma)` over `k + K`.
    Theorem3,
    /// TD(n): the largest constant stepsize the bound admits.
    Theorem4,
    /// Q-learning: the largest constant stepsize the bound admits.
    Theorem5a,
    /// Q-learning: `4/(1-beta)` over `k + K`.
    Theorem5b,
}

impl ScheduleSpec {
    /// The schedule when it does not depend on the problem.
    pub fn explicit(&self) -> Option<StepsizeSchedule> {
        match *self {
            ScheduleSpec::Constant { eps } => Some(StepsizeSchedule::Constant { eps }),
            ScheduleSpec::Polynomial { eps, xi, offset } => Some(StepsizeSchedule::Polynomial { eps, xi, offset }),
            _ => None,
        }
    }
}

impl MdpSource {
    pub fn resolve(&self, base: &Path) -> Result<Mdp> {
        match self {
            MdpSource::Random {
                n_states,
                n_actions,
                beta,
                seed,
            } => Mdp::random(*n_states, *n_actions, *beta, *seed),
            MdpSource::File { path } => Mdp::load(base.join(path)),
        }
    }
}

impl PolicySource {
    pub fn resolve(&self, mdp: &Mdp) -> Result<Policy> {
        let (n, m) = (mdp.n_states(), mdp.n_actions());
        match self {
            PolicySource::Uniform => Ok(Policy::uniform(n, m)),
            PolicySource::Random { seed } => Ok(Policy::random(n, m, &mut path_rng(*seed, 0, 0))),
            PolicySource::Deterministic { actions } => {
                let pi = Policy::deterministic(m, actions)?;
                if pi.n_states() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: pi.n_states(),
                    });
                }
                Ok(pi)
            }
            PolicySource::Table { probs } => Policy::new(n, m, probs.clone()),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(Error::InvalidParameter(format!(
                "name {:?} must be nonempty and use only [A-Za-z0-9._-]",
                self.name
            )));
        }
        if self.paths == 0 {
            return Err(Error::InvalidParameter("paths must be at least 1".into()));
        }
        match &self.experiment {
            Experiment::Fig1 { horizons, .. } if horizons.is_empty() || horizons.contains(&0) => {
                Err(Error::InvalidParameter("fig1 needs a nonempty list of positive horizons".into()))
            }
            Experiment::Theorem2 { regimes, x0, .. } if regimes.is_empty() || x0.len() != 2 => Err(
                Error::InvalidParameter("theorem2 needs at least one regime and a planar x0".into()),
            ),
            Experiment::Tightness { dims } if dims.is_empty() || dims.contains(&0) => {
                Err(Error::InvalidParameter("tightness needs a nonempty list of positive dimensions".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TDN: &str = r#"
name = "td-n3"
seed = 7
paths = 2
k_max = 10

[experiment]
kind = "tdn"
n = 3
mdp = { kind = "random", n_states = 4, n_actions = 2, beta = 0.9, seed = 1 }
policy = { kind = "uniform" }
schedule = { kind = "theorem4" }
"#;

    #[test]
    fn parses_and_round_trips() {
        let spec = ExperimentSpec::from_toml(TDN).unwrap();
        assert_eq!(spec.name, "td-n3");
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(ExperimentSpec::from_toml(&text).unwrap(), spec);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let typo = TDN.replace("k_max", "kmax");
        assert!(ExperimentSpec::from_toml(&typo).is_err());
        let nested = TDN.replace("n = 3", "n = 3\nhorizon = 3");
        assert!(ExperimentSpec::from_toml(&nested).is_err());
        let inner = TDN.replace("seed = 1 }", "seed = 1, gamma = 0.5 }");
        assert!(ExperimentSpec::from_toml(&inner).is_err());
    }

    #[test]
    fn zero_paths_rejected() {
        assert!(ExperimentSpec::from_toml(&TDN.replace("paths = 2", "paths = 0")).is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
