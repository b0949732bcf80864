//! Replica ensembles of normalized energies and the finite-dimensional
//! covariance check.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{grouped_jackknife, Estimate, TestReport, Verdict};
use crate::error::{Error, Result};

/// Groups used by the covariance jackknife.
pub const JACKKNIFE_GROUPS: usize = 100;
/// Smallest ensemble accepted by [`fdd_covariance`].
pub const MIN_FDD_REPLICAS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// Fresh charges and walk per replica.
    Annealed,
    /// One charge environment, fresh walk per replica.
    Quenched { env_seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `n^{3/4}`
    D1Sqrt,
    /// `(n^{3/2} log log n)^{1/2}`, defined for `n > e^e`.
    D1Lil,
    /// `(n log n)^{1/2}`
    D2,
    /// `n^{1/2}`
    Dge3,
}

impl Normalization {
    /// The usual choice for the dimension.
    pub fn for_dim(dim: usize) -> Self {
        match dim {
            1 => Normalization::D1Sqrt,
            2 => Normalization::D2,
            _ => Normalization::Dge3,
        }
    }

    pub fn fits_dim(&self, dim: usize) -> bool {
        match self {
            Normalization::D1Sqrt | Normalization::D1Lil => dim == 1,
            Normalization::D2 => dim == 2,
            Normalization::Dge3 => dim >= 3,
        }
    }

    pub fn scale(&self, n: u64) -> Result<f64> {
        let x = n as f64;
        match self {
            Normalization::D1Sqrt => Ok(x.powf(0.75)),
            Normalization::D1Lil => {
                if x <= std::f64::consts::E.powf(std::f64::consts::E) {
                    return Err(Error::OutOfRange {
                        name: "n",
                        value: x,
                        constraint: "(e^e, inf) for the log log normalization".into(),
                    });
                }
                Ok((x.powf(1.5) * x.ln().ln()).sqrt())
            }
            Normalization::D2 => {
                if n < 2 {
                    return Err(Error::OutOfRange {
                        name: "n",
                        value: x,
                        constraint: "[2, inf) for the n log n normalization".into(),
                    });
                }
                Ok((x * x.ln()).sqrt())
            }
            Normalization::Dge3 => Ok(x.sqrt()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub master_seed: u64,
    pub walk: String,
    pub charge_law: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaEnsemble {
    pub mode: Mode,
    pub dim: usize,
    pub n: u64,
    /// Checkpoint times `t_k`; replica values are `K_{floor(n t_k)} / s_n`.
    pub times: Vec<f64>,
    /// `samples[r][k]`.
    pub samples: Vec<Vec<f64>>,
    pub normalization: Normalization,
    pub meta: EnsembleMeta,
}

/// `floor(n t)` with a guard against `t = k/n` landing just below `k`.
pub fn checkpoint_step(n: u64, t: f64) -> u64 {
    (n as f64 * t + 1e-9).floor() as u64
}

impl ReplicaEnsemble {
    /// Normalize raw energies `energies[r][k]` by `s_n`.
    pub fn from_energies(
        mode: Mode,
        dim: usize,
        n: u64,
        times: Vec<f64>,
        energies: Vec<Vec<f64>>,
        normalization: Normalization,
        meta: EnsembleMeta,
    ) -> Result<Self> {
        if !normalization.fits_dim(dim) {
            return Err(Error::Dimension(format!(
                "{normalization:?} normalization does not apply to d={dim}"
            )));
        }
        if energies.iter().any(|r| r.len() != times.len()) {
            return Err(Error::InvalidArgument(
                "replica rows must match the checkpoint count".into(),
            ));
        }
        let s = normalization.scale(n)?;
        let samples = energies
            .into_iter()
            .map(|r| r.into_iter().map(|k| k / s).collect())
            .collect();
        Ok(ReplicaEnsemble {
            mode,
            dim,
            n,
            times,
            samples,
            normalization,
            meta,
        })
    }

    pub fn replicas(&self) -> usize {
        self.samples.len()
    }

    pub fn checkpoint_steps(&self) -> Vec<u64> {
        self.times
            .iter()
            .map(|&t| checkpoint_step(self.n, t))
            .collect()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|r| r[k]).collect()
    }

    /// Same energies under another normalization. Only the scale changes,
    /// so d2 -> dge3 multiplies every sample by `sqrt(log n)`.
    pub fn renormalized(&self, to: Normalization) -> Result<Self> {
        let ratio = self.normalization.scale(self.n)? / to.scale(self.n)?;
        let mut out = self.clone();
        for r in &mut out.samples {
            for x in r {
                *x *= ratio;
            }
        }
        out.normalization = to;
        Ok(out)
    }
}

/// Empirical covariance of the checkpoints against `sigma2 min(t_i, t_j)`.
pub fn fdd_covariance(ensemble: &ReplicaEnsemble, sigma2: f64) -> Result<TestReport> {
    let t = &ensemble.times;
    let target: Vec<Vec<f64>> = t
        .iter()
        .map(|a| t.iter().map(|b| sigma2 * a.min(*b)).collect())
        .collect();
    fdd_covariance_against(ensemble, &target, true)
}

/// Entrywise comparison of the checkpoint covariance (`centered`) or raw
/// second-moment matrix with `target`; pass iff every entry is within five
/// grouped-jackknife standard errors.
pub fn fdd_covariance_against(
    ensemble: &ReplicaEnsemble,
    target: &[Vec<f64>],
    centered: bool,
) -> Result<TestReport> {
    let k = ensemble.times.len();
    let r = ensemble.replicas();
    if k < 2 {
        return Err(Error::Degenerate(format!(
            "{k} checkpoint(s); at least 2 needed"
        )));
    }
    if r < MIN_FDD_REPLICAS {
        return Err(Error::Degenerate(format!(
            "{r} replicas; at least {MIN_FDD_REPLICAS} needed"
        )));
    }
    if target.len() != k || target.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidArgument(
            "target matrix shape differs from the checkpoints".into(),
        ));
    }
    let cols: Vec<Vec<f64>> = (0..k).map(|c| ensemble.column(c)).collect();
    if cols.iter().any(|c| c.iter().all(|x| *x == c[0])) {
        return Err(Error::Degenerate("a checkpoint has zero spread".into()));
    }
    let mut cells: Vec<Vec<Estimate>> = vec![Vec::with_capacity(k); k];
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let (a, b) = (&cols[i], &cols[j]);
            let est = grouped_jackknife(r, JACKKNIFE_GROUPS, |keep| {
                let (mut n, mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0, 0.0);
                for idx in 0..r {
                    if keep(idx) {
                        n += 1.0;
                        sa += a[idx];
                        sb += b[idx];
                        sab += a[idx] * b[idx];
                    }
                }
                if centered {
                    (sab - sa * sb / n) / (n - 1.0)
                } else {
                    sab / n
                }
            })?;
            worst = worst.max(est.z(target[i][j]).abs());
            cells[i].push(est);
        }
    }
    let matrix: Vec<Vec<f64>> = cells
        .iter()
        .map(|row| row.iter().map(|e| e.value).collect())
        .collect();
    let se: Vec<Vec<f64>> = cells
        .iter()
        .map(|row| row.iter().map(|e| e.se).collect())
        .collect();
    Ok(TestReport::new(
        "fdd_covariance",
        "max |z|",
        worst,
        Verdict::from_bool(worst <= 5.0),
        "every entry within 5 jackknife SE",
        r,
    )
    .with_note(if centered {
        "centered covariance"
    } else {
        "raw second moments"
    })
    .with_details(json!({
        "times": ensemble.times,
        "empirical": matrix,
        "se": se,
        "target": target,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ensemble(samples: Vec<Vec<f64>>, times: Vec<f64>) -> ReplicaEnsemble {
        ReplicaEnsemble {
            mode: Mode::Annealed,
            dim: 3,
            n: 1000,
            times,
            samples,
            normalization: Normalization::Dge3,
            meta: EnsembleMeta::default(),
        }
    }

    #[test]
    fn scales() {
        assert_eq!(Normalization::Dge3.scale(100).unwrap(), 10.0);
        assert_eq!(Normalization::D1Sqrt.scale(16).unwrap(), 8.0);
        assert!(Normalization::D1Lil.scale(15).is_err());
        assert!(Normalization::D1Lil.scale(16).is_ok());
        assert!(Normalization::D2.scale(1).is_err());
        assert!(Normalization::D2.fits_dim(2) && !Normalization::D2.fits_dim(3));
    }

    #[test]
    fn duplicated_checkpoint_covariance_is_variance() {
        let mut rng = stream_rng(3, 0);
        let s: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                vec![x, x]
            })
            .collect();
        let e = ensemble(s, vec![1.0, 1.0]);
        let r = fdd_covariance(&e, 1.0).unwrap();
        let m = &r.details["empirical"];
        assert_eq!(m[0][1], m[0][0]);
        assert_eq!(m[1][1], m[0][0]);
        let v = super::super::variance(&e.column(0)).unwrap().value;
        assert!((m[0][0].as_f64().unwrap() - v).abs() < 1e-12);
    }

    #[test]
    fn brownian_samples_pass() {
        let mut rng = stream_rng(4, 0);
        let s: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let a = rng.sample::<f64, _>(StandardNormal) * 0.5f64.sqrt();
                let b = a + rng.sample::<f64, _>(StandardNormal) * 0.5f64.sqrt();
                vec![a, b]
            })
            .collect();
        let r = fdd_covariance(&ensemble(s.clone(), vec![0.5, 1.0]), 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.line());
        let off = r.details["empirical"][0][1].as_f64().unwrap();
        assert!((off - 0.5).abs() < 0.05);
        // wrong variance is caught
        let r = fdd_covariance(&ensemble(s, vec![0.5, 1.0]), 1.3).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn degenerate_inputs() {
        let e = ensemble(vec![vec![1.0]; 2000], vec![1.0]);
        assert!(matches!(fdd_covariance(&e, 1.0), Err(Error::Degenerate(_))));
        let e = ensemble(vec![vec![1.0, 2.0]; 10], vec![0.5, 1.0]);
        assert!(matches!(fdd_covariance(&e, 1.0), Err(Error::Degenerate(_))));
        let e = ensemble(vec![vec![1.0, 2.0]; 2000], vec![0.5, 1.0]);
        assert!(matches!(fdd_covariance(&e, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn d2_to_dge3_rescales_by_sqrt_log_n() {
        let n = 4096;
        let raw = vec![vec![3.0, -7.5], vec![0.25, 11.0]];
        let e = ReplicaEnsemble::from_energies(
            Mode::Quenched { env_seed: 5 },
            2,
            n,
            vec![0.5, 1.0],
            raw,
            Normalization::D2,
            EnsembleMeta::default(),
        )
        .unwrap();
        let f = e.renormalized(Normalization::Dge3).unwrap();
        let c = (n as f64).ln().sqrt();
        for (a, b) in e.samples.iter().flatten().zip(f.samples.iter().flatten()) {
            assert!((b - a * c).abs() < 1e-12 * b.abs().max(1.0));
        }
        assert!(ReplicaEnsemble::from_energies(
            Mode::Annealed,
            3,
            n,
            vec![1.0],
            vec![vec![1.0]],
            Normalization::D2,
            EnsembleMeta::default()
        )
        .is_err());
    }
}
