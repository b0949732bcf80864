//! Verdicts from replica ensembles: KS tests, moment estimates with
//! standard errors, covariance checks and the d=1 diagnostics.

pub mod d1;
pub mod ensemble;
pub mod ks;
pub mod qv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use d1::{
    centred_oscillation_report, d1_annealed_limit_sampler, max_pairwise_ks, oscillation_report,
    validate_lil_grid, D1LimitSampler, OscillationSummary,
};
pub use ensemble::{fdd_covariance, fdd_covariance_against, Mode, Normalization, ReplicaEnsemble};
pub use ks::{kolmogorov_pvalue, ks_gaussian, ks_gaussian_at, ks_two_sample};
pub use qv::{qv_convergence, silt_q};

/// Significance level used by the KS gates unless overridden.
pub const DEFAULT_LEVEL: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Informational; never gates an exit status.
    Report,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_fail(&self) -> bool {
        *self == Verdict::Fail
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Report => "REPORT",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    /// Name of the statistic in `value`.
    pub statistic: String,
    pub value: f64,
    pub p_value: Option<f64>,
    pub verdict: Verdict,
    /// Human-readable gate, e.g. "p > 0.01" or "|z| <= 5".
    pub tolerance: String,
    pub sample_size: usize,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl TestReport {
    pub fn new(
        name: &str,
        statistic: &str,
        value: f64,
        verdict: Verdict,
        tolerance: &str,
        sample_size: usize,
    ) -> Self {
        TestReport {
            name: name.to_string(),
            statistic: statistic.to_string(),
            value,
            p_value: None,
            verdict,
            tolerance: tolerance.to_string(),
            sample_size,
            notes: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn with_p_value(mut self, p: f64) -> Self {
        self.p_value = Some(p);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = details;
        self
    }

    /// Demote a gated verdict to a report.
    pub fn report_only(mut self) -> Self {
        self.verdict = Verdict::Report;
        self
    }

    /// One line: `name: statistic=value [p=..] (tolerance) VERDICT`.
    pub fn line(&self) -> String {
        let p = self
            .p_value
            .map(|p| format!(" p={p:.4}"))
            .unwrap_or_default();
        format!(
            "{}: {}={:.6}{} ({}, N={}) {}",
            self.name,
            self.statistic,
            self.value,
            p,
            self.tolerance,
            self.sample_size,
            self.verdict
        )
    }
}

fn require_len(samples: &[f64], min: usize) -> Result<()> {
    if samples.len() < min {
        return Err(Error::EmptySample);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    Ok(())
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// An estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `(value - target) / se`; infinite when `se = 0` and the values differ.
    pub fn z(&self, target: f64) -> f64 {
        let diff = self.value - target;
        if diff == 0.0 {
            0.0
        } else {
            diff / self.se
        }
    }
}

/// Unbiased sample variance with the delta-method standard error
/// `sqrt((m4 - v^2) / N)`.
pub fn variance(samples: &[f64]) -> Result<Estimate> {
    require_len(samples, 2)?;
    let n = samples.len() as f64;
    let m = mean(samples);
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in samples {
        let d = (x - m) * (x - m);
        m2 += d;
        m4 += d * d;
    }
    let v = m2 / (n - 1.0);
    let m4 = m4 / n;
    let pop = m2 / n;
    Ok(Estimate {
        value: v,
        se: ((m4 - pop * pop).max(0.0) / n).sqrt(),
    })
}

/// `mean(x^2)` with standard error `sd(x^2) / sqrt(N)`.
pub fn second_moment(samples: &[f64]) -> Result<Estimate> {
    require_len(samples, 2)?;
    let sq: Vec<f64> = samples.iter().map(|x| x * x).collect();
    let m = mean(&sq);
    let var = sq.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (sq.len() as f64 - 1.0);
    Ok(Estimate {
        value: m,
        se: (var / sq.len() as f64).sqrt(),
    })
}

/// Delete-a-group jackknife of `stat` over `groups` contiguous groups of
/// rows. Returns the full-sample value and the jackknife standard error.
pub fn grouped_jackknife<F>(rows: usize, groups: usize, stat: F) -> Result<Estimate>
where
    F: Fn(&dyn Fn(usize) -> bool) -> f64,
{
    if groups < 2 || rows < groups {
        return Err(Error::Degenerate(format!("{rows} rows in {groups} groups")));
    }
    let group_of = |r: usize| r * groups / rows;
    let full = stat(&|_| true);
    let leave: Vec<f64> = (0..groups).map(|g| stat(&|r| group_of(r) != g)).collect();
    let lm = mean(&leave);
    let g = groups as f64;
    let var = (g - 1.0) / g * leave.iter().map(|x| (x - lm) * (x - lm)).sum::<f64>();
    Ok(Estimate {
        value: full,
        se: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn variance_se_scales_like_gaussian() {
        let mut rng = stream_rng(1, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let v = variance(&xs).unwrap();
        assert!((v.value - 1.0).abs() < 5.0 * v.se);
        // Var of the sample variance of N(0,1) is 2/N
        assert!((v.se - (2.0 / 1e5f64).sqrt()).abs() < 2e-4);
        let m = second_moment(&xs).unwrap();
        assert!((m.value - 1.0).abs() < 5.0 * m.se);
    }

    #[test]
    fn jackknife_of_mean_matches_classical_se() {
        let mut rng = stream_rng(2, 0);
        let xs: Vec<f64> = (0..2000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let est = grouped_jackknife(xs.len(), xs.len(), |keep| {
            let kept: Vec<f64> = xs
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, x)| *x)
                .collect();
            mean(&kept)
        })
        .unwrap();
        let sd = variance(&xs).unwrap().value.sqrt();
        assert!((est.se - sd / 2000f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn empty_and_degenerate() {
        assert!(matches!(variance(&[]), Err(Error::EmptySample)));
        assert!(variance(&[1.0, f64::NAN]).is_err());
        assert!(grouped_jackknife(3, 10, |_| 0.0).is_err());
    }

    #[test]
    fn report_line_and_json() {
        let r = TestReport::new("x", "D", 0.1, Verdict::Pass, "p > 0.01", 10).with_p_value(0.5);
        assert_eq!(r.line(), "x: D=0.100000 p=0.5000 (p > 0.01, N=10) PASS");
        let back: TestReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
