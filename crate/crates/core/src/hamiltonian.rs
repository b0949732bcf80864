//! The energy `K_n = sum_{i<j<=n} q_i q_j 1{S_i = S_j}` and its companions,
//! maintained in O(1) per step through per-site charge sums.
//!
//! For each visited site `x` the tracker keeps
//!
//! * `W(x) = sum_{i<=n, S_i=x} q_i`, so that `Delta_k = q_k W_{k-1}(S_k)`;
//! * the same sum over the truncated charges, when a truncation is attached;
//! * `sq(x) = sum_{i<=n, S_i=x} (q_i^2 - 1)`, feeding
//!   `R1_n = sum_i (q_i^2 - 1) #{k in (i, n] : S_k = S_i}`;
//! * `cross(x) = sum_{i<j<=n, S_i=S_j=x} q_i q_j`, feeding
//!   `R2_n = 2 sum_{i<j<k<=n} q_i q_j 1{S_i = S_j = S_k}`.
//!
//! Update order at step `k` with new site `x`: every increment reads the
//! values of `W(x)`, `sq(x)` and `cross(x)` left by step `k-1`; only then
//! are `cross(x) += q_k W(x)`, `W(x) += q_k` and `sq(x) += q_k^2 - 1`
//! written. With this order `sum_k W_{k-1}(S_k)^2 = (I_n - n)/2 + R1_n + R2_n`
//! holds path by path.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::charges::ChargeEnvironment;
use crate::error::{Error, Result};
use crate::oracles::OracleTable;
use crate::walk::{Point, PolymerWalkState, StepLaw, MAX_DIM};

#[derive(Clone, Copy, Debug, Default)]
pub struct SiteCharges {
    pub w: f64,
    pub w_trunc: f64,
    pub sq: f64,
    pub cross: f64,
}

/// Values recorded at a checkpoint step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub k: u64,
    pub energy: f64,
    pub energy_trunc: Option<f64>,
    pub silt: u128,
    pub max_local_time: u64,
}

#[derive(Clone, Debug)]
pub struct PolymerEnergyState {
    walk: PolymerWalkState<SiteCharges>,
    charges: Arc<Vec<f64>>,
    truncated: Option<Arc<Vec<f64>>>,
    energy: f64,
    energy_trunc: f64,
    last_increment: f64,
    r1: f64,
    r2: f64,
    /// `sum_k W_{k-1}(S_k)^2`, accumulated directly for cross-checks.
    qv_direct: f64,
    schedule: Vec<u64>,
    next_checkpoint: usize,
    checkpoints: BTreeMap<u64, Checkpoint>,
}

impl PolymerEnergyState {
    pub fn new(dim: usize, env: &ChargeEnvironment) -> Result<Self> {
        Ok(PolymerEnergyState {
            walk: PolymerWalkState::new(dim)?,
            charges: env.shared_values(),
            truncated: None,
            energy: 0.0,
            energy_trunc: 0.0,
            last_increment: 0.0,
            r1: 0.0,
            r2: 0.0,
            qv_direct: 0.0,
            schedule: Vec::new(),
            next_checkpoint: 0,
            checkpoints: BTreeMap::from([(0, Self::origin_checkpoint(false))]),
        })
    }

    fn origin_checkpoint(truncated: bool) -> Checkpoint {
        Checkpoint {
            k: 0,
            energy: 0.0,
            energy_trunc: truncated.then_some(0.0),
            silt: 0,
            max_local_time: 0,
        }
    }

    /// Also track `K^(n)` built from `truncated` (one truncation level per run).
    pub fn with_truncated(mut self, truncated: Vec<f64>) -> Self {
        self.truncated = Some(Arc::new(truncated));
        self.checkpoints.insert(0, Self::origin_checkpoint(true));
        self
    }

    /// Record energies at these step counts (in addition to step 0).
    pub fn with_checkpoints(mut self, mut schedule: Vec<u64>) -> Self {
        schedule.sort_unstable();
        schedule.dedup();
        schedule.retain(|&k| k > self.walk.steps());
        self.schedule = schedule;
        self.next_checkpoint = 0;
        self
    }

    pub fn walk(&self) -> &PolymerWalkState<SiteCharges> {
        &self.walk
    }

    pub fn steps(&self) -> u64 {
        self.walk.steps()
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn energy_trunc(&self) -> Option<f64> {
        self.truncated.as_ref().map(|_| self.energy_trunc)
    }

    pub fn last_increment(&self) -> f64 {
        self.last_increment
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    /// `W_n(x)`.
    pub fn charge_weight(&self, x: &[i64]) -> f64 {
        self.walk.entry_at(x).map_or(0.0, |e| e.data.w)
    }

    pub fn checkpoints(&self) -> &BTreeMap<u64, Checkpoint> {
        &self.checkpoints
    }

    fn ensure_charge(&self) -> Result<()> {
        let needed = self.steps() as usize + 1;
        let available = self
            .truncated
            .as_ref()
            .map_or(self.charges.len(), |t| t.len().min(self.charges.len()));
        if needed > available {
            Err(Error::EnvironmentTooShort { needed, available })
        } else {
            Ok(())
        }
    }

    /// Advance one step drawn from `law`; returns `Delta`.
    pub fn step_energy<R: Rng + ?Sized>(&mut self, law: &StepLaw, rng: &mut R) -> Result<f64> {
        self.ensure_charge()?;
        let step = *law.sample_step(rng);
        Ok(self.apply(&step))
    }

    /// Advance by an explicit step vector.
    pub fn apply_step(&mut self, step: &[i64]) -> Result<f64> {
        self.ensure_charge()?;
        if step.len() != self.walk.dim() {
            return Err(Error::Dimension(format!(
                "step {step:?} for a d={} walk",
                self.walk.dim()
            )));
        }
        let mut p: Point = [0; MAX_DIM];
        p[..step.len()].copy_from_slice(step);
        Ok(self.apply(&p))
    }

    /// Run `steps` more steps.
    pub fn run<R: Rng + ?Sized>(&mut self, law: &StepLaw, rng: &mut R, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step_energy(law, rng)?;
        }
        Ok(())
    }

    fn apply(&mut self, step: &Point) -> f64 {
        let k = self.walk.steps() as usize; // index of the new charge, 0-based
        let q = self.charges[k];
        let qt = self.truncated.as_ref().map_or(0.0, |t| t[k]);
        let visit = self.walk.apply(step);
        let site = visit.data;

        let delta = q * site.w;
        self.energy += delta;
        self.energy_trunc += qt * site.w_trunc;
        self.r1 += site.sq;
        self.r2 += 2.0 * site.cross;
        self.qv_direct += site.w * site.w;

        site.cross += q * site.w;
        site.w += q;
        site.w_trunc += qt;
        site.sq += q * q - 1.0;

        self.last_increment = delta;
        self.record_checkpoint();
        delta
    }

    fn record_checkpoint(&mut self) {
        let n = self.walk.steps();
        if self.schedule.get(self.next_checkpoint) == Some(&n) {
            self.next_checkpoint += 1;
            self.checkpoints.insert(
                n,
                Checkpoint {
                    k: n,
                    energy: self.energy,
                    energy_trunc: self.energy_trunc(),
                    silt: self.walk.intersection_local_time(),
                    max_local_time: self.walk.max_local_time(),
                },
            );
        }
    }

    /// `K_b - K_a` from recorded checkpoints (step 0 is always recorded).
    pub fn windowed_energy(&self, a: u64, b: u64) -> Result<f64> {
        let at = |k: u64| {
            self.checkpoints
                .get(&k)
                .map(|c| c.energy)
                .ok_or(Error::MissingCheckpoint(k))
        };
        Ok(at(b)? - at(a)?)
    }

    /// Quadratic-variation decomposition at the current step.
    pub fn qv_decomposition(&self, s_n: f64) -> QvDecomposition {
        let n = self.walk.steps() as f64;
        let silt_term = (self.walk.intersection_local_time() as f64 - n) / 2.0;
        QvDecomposition {
            q: (silt_term + self.r1 + self.r2) / (s_n * s_n),
            silt_term,
            r1: self.r1,
            r2: self.r2,
            direct: self.qv_direct / (s_n * s_n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QvDecomposition {
    /// `s_n^-2 ((I_m - m)/2 + R1 + R2)`.
    pub q: f64,
    pub silt_term: f64,
    pub r1: f64,
    pub r2: f64,
    /// `s_n^-2 sum_k W_{k-1}(S_k)^2`, accumulated independently.
    pub direct: f64,
}

/// `K_n` by the O(n^2) double sum over an explicit path `S_1..S_n`.
pub fn brute_force_energy(path: &[Vec<i64>], charges: &[f64]) -> f64 {
    let mut k = 0.0;
    for j in 1..path.len() {
        for i in 0..j {
            if path[i] == path[j] {
                k += charges[i] * charges[j];
            }
        }
    }
    k
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuenchedMean {
    pub value: f64,
    pub cutoff: usize,
    /// Bound on the omitted `sum_{m > M} P(S_m = 0) sum_i q_i q_{i+m}`
    /// in units of unit-variance charges: `sum_{m > M} (n - m)^+ P(S_m = 0)`.
    pub tail_error: f64,
}

/// Smallest cutoff whose certified tail error is below `1e-6 sqrt(n)`,
/// capped at `n - 1` and at the table depth.
pub fn default_cutoff(table: &OracleTable, n: u64) -> usize {
    let full = (n.saturating_sub(1) as usize).min(table.max_m);
    let target = 1e-6 * (n as f64).sqrt();
    let (mut lo, mut hi) = (1usize, full.max(1));
    if table.dim < 3 || table.weighted_tail_bound(n, hi).unwrap_or(0.0) > target {
        return full;
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if table.weighted_tail_bound(n, mid).unwrap_or(0.0) <= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    hi.min(full)
}

/// `E[K_n | q] = sum_{m=1}^{min(n-1, M)} P(S_m = 0) sum_{i=1}^{n-m} q_i q_{i+m}`.
///
/// The lagged products come from an FFT autocorrelation when the direct
/// sum would be long. `allow_recurrent` lifts the `d >= 3` restriction for
/// formula checks on small recurrent examples.
pub fn quenched_mean(
    charges: &[f64],
    table: &OracleTable,
    n: u64,
    cutoff: Option<usize>,
    allow_recurrent: bool,
) -> Result<QuenchedMean> {
    if table.dim < 3 && !allow_recurrent {
        return Err(Error::Dimension(format!(
            "quenched mean requires a transient walk (d >= 3), table has d={}",
            table.dim
        )));
    }
    let n_us = n as usize;
    if charges.len() < n_us {
        return Err(Error::EnvironmentTooShort {
            needed: n_us,
            available: charges.len(),
        });
    }
    let cutoff = cutoff.unwrap_or_else(|| default_cutoff(table, n));
    let m_max = cutoff.min(n_us.saturating_sub(1));
    table.require(m_max)?;
    let q = &charges[..n_us];
    let lags = if (n_us as f64) * (m_max as f64) <= 4e6 {
        (1..=m_max)
            .map(|m| q[..n_us - m].iter().zip(&q[m..]).map(|(a, b)| a * b).sum())
            .collect()
    } else {
        autocorrelation(q, m_max)
    };
    let value = lags
        .iter()
        .enumerate()
        .map(|(i, c): (usize, &f64)| table.p0[i] * c)
        .sum();
    let tail_error = if m_max + 1 >= n_us {
        0.0
    } else {
        table.weighted_tail_bound(n, m_max).unwrap_or(f64::INFINITY)
    };
    Ok(QuenchedMean {
        value,
        cutoff: m_max,
        tail_error,
    })
}

/// `c_m = sum_i q_i q_{i+m}` for `m = 1..=max_lag`.
fn autocorrelation(q: &[f64], max_lag: usize) -> Vec<f64> {
    let len = (q.len() + max_lag + 1).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = q.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    buf.iter_mut().for_each(|z| *z *= z.conj());
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / len as f64;
    (1..=max_lag).map(|m| buf[m].re * scale).collect()
}
