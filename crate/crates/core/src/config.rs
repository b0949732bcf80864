//! Experiment configuration: a flat TOML file, validated before any work.
//!
//! ```toml
//! experiment = "quenched_clt_d2"
//! d = 2
//! walk = "lazy_srw"
//! n = 65536
//! replicas = 10000
//! environments = 3
//! t_grid = [0.5, 1.0]
//! charges = "gaussian"
//! master_seed = 7
//!
//! [tolerance]
//! se_gate = 4.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::charges::{ChargeLaw, TruncationSchedule};
use crate::error::{Error, Result};
use crate::stats::validate_lil_grid;
use crate::walk::{make_step_law, StepLaw, WalkKind, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    OracleCheck,
    AnnealedClt,
    QuenchedCltD2,
    QuenchedCltDge3,
    FcltGivenS,
    D1Annealed,
    D1Oscillation,
    MomentDecomposition,
    TruncationDrift,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::OracleCheck => "oracle_check",
            Experiment::AnnealedClt => "annealed_clt",
            Experiment::QuenchedCltD2 => "quenched_clt_d2",
            Experiment::QuenchedCltDge3 => "quenched_clt_dge3",
            Experiment::FcltGivenS => "fclt_given_s",
            Experiment::D1Annealed => "d1_annealed",
            Experiment::D1Oscillation => "d1_oscillation",
            Experiment::MomentDecomposition => "moment_decomposition",
            Experiment::TruncationDrift => "truncation_drift",
        }
    }
}

/// Gate overrides; unset fields take each experiment's default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// KS significance level (default 0.01).
    pub ks_level: Option<f64>,
    /// Standard-error multiple for moment gates.
    pub se_gate: Option<f64>,
    /// Relative tolerance for asymptotic-constant comparisons.
    pub relative: Option<f64>,
    /// Fraction of environments that must pass a per-environment gate.
    pub env_fraction: Option<f64>,
}

fn default_d() -> usize {
    1
}
fn default_walk() -> WalkKind {
    WalkKind::Srw
}
fn default_n() -> u64 {
    10_000
}
fn default_replicas() -> usize {
    1000
}
fn default_t_grid() -> Vec<f64> {
    vec![1.0]
}
fn default_charges() -> String {
    "gaussian".into()
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_walk")]
    pub walk: WalkKind,
    /// Holding probability for `lazy_srw` (default 1/2).
    #[serde(default)]
    pub lazy_weight: Option<f64>,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Checkpoint times in `(0, 1]`, increasing.
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    /// `rademacher`, `gaussian` or `student_like:<gamma>`.
    #[serde(default = "default_charges")]
    pub charges: String,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Number of charge environments for quenched experiments.
    #[serde(default = "default_one")]
    pub environments: usize,
    /// Size grid for `d1_oscillation`.
    #[serde(default)]
    pub n_list: Vec<u64>,
    /// Oracle depth for `oracle_check`.
    #[serde(default)]
    pub max_m: Option<usize>,
    /// Surrogate walk length for the d=1 limit sampler.
    #[serde(default)]
    pub sampler_m: Option<u64>,
    #[serde(default)]
    pub tolerance: Tolerances,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Write samples.csv.
    #[serde(default = "default_true")]
    pub samples_csv: bool,
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(experiment: Experiment, d: usize, walk: WalkKind) -> Self {
        ExperimentConfig {
            experiment,
            d,
            walk,
            lazy_weight: None,
            n: default_n(),
            replicas: default_replicas(),
            t_grid: default_t_grid(),
            charges: default_charges(),
            beta: None,
            alpha: None,
            master_seed: 0,
            environments: 1,
            n_list: Vec::new(),
            max_m: None,
            sampler_m: None,
            tolerance: Tolerances::default(),
            output: None,
            samples_csv: true,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn charge_law(&self) -> Result<ChargeLaw> {
        self.charges.parse()
    }

    pub fn step_law(&self) -> Result<StepLaw> {
        let lazy = match self.walk {
            WalkKind::LazySrw => self.lazy_weight.unwrap_or(0.5),
            _ => self.lazy_weight.unwrap_or(0.0),
        };
        make_step_law(self.walk, self.d, lazy, None)
    }

    pub fn ks_level(&self) -> f64 {
        self.tolerance
            .ks_level
            .unwrap_or(crate::stats::DEFAULT_LEVEL)
    }

    /// Check every constraint; returns warnings that do not stop a run.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.d == 0 || self.d > MAX_DIM {
            return Err(range("d", self.d as f64, format!("[1, {MAX_DIM}]")));
        }
        if self.walk == WalkKind::Custom {
            return Err(Error::Config(
                "walk = \"custom\" is not supported in configs".into(),
            ));
        }
        self.step_law()?;
        let law = self.charge_law()?;
        if self.n < 2 {
            return Err(range("n", self.n as f64, "[2, inf)".into()));
        }
        if self.replicas == 0 {
            return Err(range("replicas", 0.0, "[1, inf)".into()));
        }
        if self.environments == 0 {
            return Err(range("environments", 0.0, "[1, inf)".into()));
        }
        if self.t_grid.is_empty()
            || self.t_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0))
            || self.t_grid.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Config(format!(
                "t_grid={:?} must be non-empty, non-decreasing and inside (0, 1]",
                self.t_grid
            )));
        }
        if let Some(level) = self.tolerance.ks_level {
            if !(level > 0.0 && level < 1.0) {
                return Err(range("tolerance.ks_level", level, "(0, 1)".into()));
            }
        }
        for (name, v) in [
            ("tolerance.se_gate", self.tolerance.se_gate),
            ("tolerance.relative", self.tolerance.relative),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(range(name, v, "(0, inf)".into()));
                }
            }
        }
        if let Some(f) = self.tolerance.env_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(range("tolerance.env_fraction", f, "[0, 1]".into()));
            }
        }
        let need_dim = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "experiment {} requires {what}, got d={}",
                    self.experiment.name(),
                    self.d
                )))
            }
        };
        match self.experiment {
            Experiment::QuenchedCltD2 => need_dim(self.d == 2, "d=2")?,
            Experiment::QuenchedCltDge3 => need_dim(self.d >= 3, "d>=3")?,
            Experiment::FcltGivenS => need_dim(self.d >= 2, "d>=2")?,
            Experiment::D1Annealed | Experiment::D1Oscillation => {
                need_dim(self.d == 1, "d=1")?;
                if self.walk != WalkKind::Srw {
                    return Err(Error::Config(format!(
                        "experiment {} requires walk = \"srw\"",
                        self.experiment.name()
                    )));
                }
            }
            _ => {}
        }
        if self.experiment == Experiment::D1Oscillation {
            if self.n_list.len() < 2 {
                return Err(Error::Config("n_list needs at least two sizes".into()));
            }
            validate_lil_grid(&self.n_list)?;
            if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("n_list must be strictly increasing".into()));
            }
        }
        if self.experiment == Experiment::TruncationDrift {
            let beta = self
                .beta
                .ok_or_else(|| Error::Config("truncation_drift requires beta".into()))?;
            let alpha = self
                .alpha
                .ok_or_else(|| Error::Config("truncation_drift requires alpha".into()))?;
            TruncationSchedule::new(beta, alpha, law.gamma_moment())?;
        } else if let Some(beta) = self.beta {
            // still checked so a stray value cannot hide a typo
            TruncationSchedule::new(beta, self.alpha.unwrap_or(0.75), f64::INFINITY)?;
        }
        if self.d == 1 && law.gamma_moment() <= 6.0 {
            warnings.push(format!(
                "d=1 results assume E|q|^6 < inf; charge law {law} has moments only below order {}",
                law.gamma_moment()
            ));
        }
        Ok(warnings)
    }

    /// SHA-256 of the canonical JSON form, with `output` cleared so the
    /// destination does not change the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn range(name: &'static str, value: f64, constraint: String) -> Error {
    Error::OutOfRange {
        name,
        value,
        constraint,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const D2: &str = r#"
        experiment = "quenched_clt_d2"
        d = 2
        walk = "lazy_srw"
        n = 4096
        t_grid = [0.5, 1.0]
        master_seed = 3
    "#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_toml(D2).unwrap();
        assert_eq!(c.experiment, Experiment::QuenchedCltD2);
        assert_eq!(c.replicas, 1000);
        assert_eq!(c.step_law().unwrap().lazy_weight(), 0.5);
        assert!(c.validate().unwrap().is_empty());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml("experiment = \"oracle_check\"\nreplica = 3\n")
            .unwrap_err();
        assert!(err.to_string().contains("replica"), "{err}");
    }

    #[test]
    fn beta_outside_range_cites_constraint() {
        let mut c = ExperimentConfig::new(Experiment::TruncationDrift, 2, WalkKind::LazySrw);
        c.charges = "student_like:3".into();
        c.beta = Some(0.3);
        c.alpha = Some(0.75);
        let msg = c.validate().unwrap_err().to_string();
        assert_eq!(msg, "beta=0.3 outside (0, 0.25)");
        c.beta = Some(0.2);
        c.alpha = Some(0.6);
        assert!(c.validate().unwrap_err().to_string().contains("2/gamma"));
        c.alpha = Some(0.75);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn dimension_and_grid_checks() {
        let mut c = ExperimentConfig::new(Experiment::QuenchedCltDge3, 2, WalkKind::Srw);
        assert!(c.validate().is_err());
        c.d = 3;
        assert!(c.validate().is_ok());
        c.t_grid = vec![1.0, 0.5];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::new(Experiment::D1Oscillation, 1, WalkKind::Srw);
        c.n_list = vec![10, 1000];
        assert!(c.validate().unwrap_err().to_string().contains("e^e"));
    }

    #[test]
    fn d1_heavy_tail_warns() {
        let mut c = ExperimentConfig::new(Experiment::D1Annealed, 1, WalkKind::Srw);
        c.charges = "student_like:5".into();
        assert_eq!(c.validate().unwrap().len(), 1);
        c.charges = "gaussian".into();
        assert!(c.validate().unwrap().is_empty());
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = ExperimentConfig::from_toml(D2).unwrap();
        let mut b = a.clone();
        b.output = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 4;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
