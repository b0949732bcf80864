//! Exact, simulation-free quantities: return probabilities `P(S_m = 0)`,
//! the limiting variances, annealed second moments, and (in [`moments`]) the
//! small-scale quenched-moment enumeration.
//!
//! Return probabilities are computed without truncation error:
//!
//! * simple random walk: by allocating the `m` steps to the axes, so that
//!   `P_d(m) = sum_j Bin(m, 1/d)(j) P_1(j) P_{d-1}(m - j)` with the exact
//!   one-dimensional `P_1(2k) = C(2k, k) 4^-k`;
//! * lazy simple random walk: by mixing the simple-walk table over the
//!   binomial number of non-holding steps;
//! * custom laws: by convolving the step law on a box large enough to hold
//!   every reachable point, meeting in the middle
//!   (`P(S_{a+b} = 0) = sum_x P(S_a = x) P(S_b = -x)`), which halves the box
//!   radius.
//!
//! Binomial weights below `1e-20` of the mode are dropped; their total mass
//! is far below double precision relative to the retained sum.

pub mod moments;
pub mod partitions;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::walk::{StepLaw, WalkKind};

pub use moments::{
    brute_quenched_moment, partition_decomposition_check, DecompositionCheck, MomentSpec,
};

/// Default memory budget for box convolution, in bytes.
pub const DEFAULT_MEMORY_BUDGET: u128 = 1 << 30;

/// Table of `P(S_m = 0)` for `m = 1..=max_m` and derived sums.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleTable {
    pub dim: usize,
    pub law: String,
    pub method: String,
    pub max_m: usize,
    /// `p0[m - 1] = P(S_m = 0)`.
    pub p0: Vec<f64>,
    /// `sum_{m <= max_m} P(S_m = 0)`.
    pub green_partial: f64,
    /// Certified upper bound on `sum_{m > max_m} P(S_m = 0)` (d >= 3).
    pub tail_bound: Option<f64>,
    /// Local-limit estimate of the same tail (d >= 3).
    pub tail_estimate: Option<f64>,
    /// Escape probability `1 / (1 + G)` with `G = green_partial + tail_estimate`;
    /// zero for recurrent walks.
    pub chi: f64,
    /// `det Sigma` of the step law, when known.
    pub covariance_det: Option<f64>,
}

impl OracleTable {
    /// Build a table from precomputed probabilities. Without a step law the
    /// tail estimate is taken as zero unless supplied.
    pub fn from_probabilities(
        dim: usize,
        label: &str,
        p0: Vec<f64>,
        covariance_det: Option<f64>,
        tail_estimate: Option<f64>,
    ) -> Result<Self> {
        if let Some((m, p)) = p0
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0 + 1e-12).contains(*p))
        {
            return Err(Error::InvalidArgument(format!(
                "P(S_{}=0)={p} is not a probability",
                m + 1
            )));
        }
        let max_m = p0.len();
        let green_partial = p0.iter().sum::<f64>();
        let (tail_bound, tail_estimate) = if dim >= 3 {
            let bound = certified_tail(&p0, dim);
            let estimate = tail_estimate.unwrap_or_else(|| {
                covariance_det.map_or(0.0, |det| local_limit_tail(max_m, dim, det))
            });
            (Some(bound), Some(estimate))
        } else {
            (None, None)
        };
        let chi = match tail_estimate {
            Some(t) => 1.0 / (1.0 + green_partial + t),
            None => 0.0,
        };
        Ok(OracleTable {
            dim,
            law: label.to_string(),
            method: "supplied".into(),
            max_m,
            p0,
            green_partial,
            tail_bound,
            tail_estimate,
            chi,
            covariance_det,
        })
    }

    /// `P(S_m = 0)`, with `P(S_0 = 0) = 1`.
    pub fn p(&self, m: usize) -> Result<f64> {
        match m {
            0 => Ok(1.0),
            m if m <= self.max_m => Ok(self.p0[m - 1]),
            m => Err(Error::TableTooShallow {
                needed: m,
                available: self.max_m,
            }),
        }
    }

    pub fn require(&self, max_m: usize) -> Result<()> {
        if max_m > self.max_m {
            Err(Error::TableTooShallow {
                needed: max_m,
                available: self.max_m,
            })
        } else {
            Ok(())
        }
    }

    /// Upper bound on `sum_{m > cutoff} (n - m)^+ P(S_m = 0)` for `d >= 3`,
    /// from the fitted `P(S_m = 0) <= C m^{-d/2}`.
    pub fn weighted_tail_bound(&self, n: u64, cutoff: usize) -> Option<f64> {
        if self.dim < 3 {
            return None;
        }
        let c = tail_constant(&self.p0, self.dim);
        let h = self.dim as f64 / 2.0;
        let m0 = cutoff as f64;
        let n = n as f64;
        if n <= m0 + 1.0 {
            return Some(0.0);
        }
        // sum_{m > M} (n - m) C m^-h <= C n int_M^inf x^-h dx
        Some(c * n * m0.powf(1.0 - h) / (h - 1.0))
    }

    /// CSV with columns `m,p0`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut body = String::from("m,p0\n");
        for (i, p) in self.p0.iter().enumerate() {
            body.push_str(&format!("{},{:e}\n", i + 1, p));
        }
        w.write_all(body.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// JSON summary: the table metadata and every applicable variance.
    pub fn summary(&self) -> serde_json::Value {
        let mut sig = serde_json::Map::new();
        for variant in [
            Sigma2Variant::AnnealedD2,
            Sigma2Variant::FcltGivenS,
            Sigma2Variant::QuenchedRecentredDge3,
        ] {
            if let Ok(s) = sigma2(self, variant) {
                sig.insert(
                    variant.name().into(),
                    serde_json::json!({"value": s.value, "truncation_error": s.truncation_error}),
                );
            }
        }
        serde_json::json!({
            "dim": self.dim,
            "law": self.law,
            "method": self.method,
            "max_m": self.max_m,
            "green_partial": self.green_partial,
            "tail_bound": self.tail_bound,
            "tail_estimate": self.tail_estimate,
            "chi": self.chi,
            "covariance_det": self.covariance_det,
            "sigma2": sig,
        })
    }
}

/// `C = 2 max_m P(S_m = 0) m^{d/2}`.
fn tail_constant(p0: &[f64], dim: usize) -> f64 {
    let h = dim as f64 / 2.0;
    2.0 * p0
        .iter()
        .enumerate()
        .map(|(i, p)| p * ((i + 1) as f64).powf(h))
        .fold(0.0, f64::max)
}

/// `sum_{m > M} C m^{-d/2} <= C M^{1-d/2} / (d/2 - 1)`.
fn certified_tail(p0: &[f64], dim: usize) -> f64 {
    let m0 = p0.len().max(1) as f64;
    let h = dim as f64 / 2.0;
    tail_constant(p0, dim) * m0.powf(1.0 - h) / (h - 1.0)
}

/// Local-limit approximation `P(S_m = 0) ~ (2 pi m)^{-d/2} det(Sigma)^{-1/2}`
/// summed over `m > M` (midpoint integral). For bipartite walks the even-`m`
/// doubling averages out to the same sum.
fn local_limit_tail(max_m: usize, dim: usize, det: f64) -> f64 {
    let h = dim as f64 / 2.0;
    let x0 = max_m as f64 + 0.5;
    (2.0 * std::f64::consts::PI).powf(-h) / det.sqrt() * x0.powf(1.0 - h) / (h - 1.0)
}

/// Binomial(m, p) probabilities on the window where they exceed `1e-20` of
/// the mode, renormalized to sum to one. Returns `(first_k, weights)`.
pub(crate) fn binomial_window(m: usize, p: f64) -> (usize, Vec<f64>) {
    if p <= 0.0 || m == 0 {
        return (0, vec![1.0]);
    }
    if p >= 1.0 {
        return (m, vec![1.0]);
    }
    let q = 1.0 - p;
    let mode = (((m + 1) as f64) * p).floor().min(m as f64) as usize;
    let log_mode =
        ln_gamma(m as f64 + 1.0) - ln_gamma(mode as f64 + 1.0) - ln_gamma((m - mode) as f64 + 1.0)
            + mode as f64 * p.ln()
            + (m - mode) as f64 * q.ln();
    let top = log_mode.exp();
    let floor = top * 1e-20;
    let mut up = Vec::new();
    let mut v = top;
    let mut k = mode;
    while k < m {
        v *= (m - k) as f64 / (k + 1) as f64 * p / q;
        k += 1;
        if v < floor {
            break;
        }
        up.push(v);
    }
    let mut down = Vec::new();
    let mut v = top;
    let mut k = mode;
    while k > 0 {
        v *= k as f64 / (m - k + 1) as f64 * q / p;
        k -= 1;
        if v < floor {
            break;
        }
        down.push(v);
    }
    let first = mode - down.len();
    let mut w: Vec<f64> = down.into_iter().rev().collect();
    w.push(top);
    w.extend(up);
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    (first, w)
}

/// `P(S_m = 0)` for the one-dimensional simple random walk, `m = 0..=max_m`.
fn srw1_table(max_m: usize) -> Vec<f64> {
    let mut t = vec![0.0; max_m + 1];
    t[0] = 1.0;
    let mut v = 1.0;
    for k in 1..=max_m / 2 {
        v *= (2 * k - 1) as f64 / (2 * k) as f64;
        t[2 * k] = v;
    }
    t
}

/// `P(S_m = 0)` for the `d`-dimensional simple random walk, `m = 0..=max_m`,
/// by recursive axis allocation.
fn srw_table(dim: usize, max_m: usize) -> Vec<f64> {
    let one = srw1_table(max_m);
    let mut cur = one.clone();
    for k in 2..=dim {
        // one step in k dims goes to the new axis with probability 1/k
        let p_new = 1.0 / k as f64;
        let mut next = vec![0.0; max_m + 1];
        for (m, slot) in next.iter_mut().enumerate() {
            let (first, w) = binomial_window(m, p_new);
            *slot = w
                .iter()
                .enumerate()
                .map(|(i, wi)| {
                    let j = first + i;
                    wi * one[j] * cur[m - j]
                })
                .sum();
        }
        cur = next;
    }
    cur
}

/// Mix a table of the non-holding walk over `Bin(m, 1 - hold)` moves.
fn lazy_mix(base: &[f64], hold: f64) -> Vec<f64> {
    let max_m = base.len() - 1;
    (0..=max_m)
        .map(|m| {
            let (first, w) = binomial_window(m, 1.0 - hold);
            w.iter()
                .enumerate()
                .map(|(i, wi)| wi * base[first + i])
                .sum()
        })
        .collect()
}

/// Box side and cell count for meeting-in-the-middle convolution up to `max_m`.
fn box_cells(law: &StepLaw, max_m: usize) -> (usize, u128) {
    let radius = max_m.div_ceil(2) * law.max_step() as usize;
    let side = 2 * radius + 1;
    (side, (side as u128).pow(law.dim() as u32))
}

/// Bytes needed to convolve `law` up to `max_m`: two boxes of `f64`.
pub fn convolution_bytes(law: &StepLaw, max_m: usize) -> u128 {
    2 * 8 * box_cells(law, max_m).1
}

/// `P(S_m = 0)`, `m = 0..=max_m`, by dense convolution of the full step law.
pub fn convolution_return_probabilities(
    law: &StepLaw,
    max_m: usize,
    budget: u128,
) -> Result<Vec<f64>> {
    let bytes = convolution_bytes(law, max_m);
    if bytes > budget {
        let mut feasible = 0;
        while convolution_bytes(law, feasible + 1) <= budget {
            feasible += 1;
        }
        return Err(Error::MemoryBudget {
            requested: max_m,
            bytes,
            budget,
            feasible,
        });
    }
    let dim = law.dim();
    let (side, cells) = box_cells(law, max_m);
    let cells = cells as usize;
    let center = side / 2;
    let mut strides = vec![1usize; dim];
    for i in 1..dim {
        strides[i] = strides[i - 1] * side;
    }
    let flat = |x: &[i64]| -> isize {
        x.iter()
            .zip(&strides)
            .map(|(&c, &s)| c as isize * s as isize)
            .sum()
    };
    let origin = center * strides.iter().sum::<usize>();
    let offsets: Vec<(isize, f64)> = law
        .support()
        .iter()
        .map(|(x, p)| (flat(&x[..dim]), *p))
        .collect();

    let mut out = vec![0.0; max_m + 1];
    out[0] = 1.0;
    let mut prev = vec![0.0; cells];
    prev[origin] = 1.0;
    let mut cur = vec![0.0; cells];
    // reachable radius after t steps is t * max_step; only that sub-box is touched
    let step_r = law.max_step() as usize;
    for t in 1..=max_m.div_ceil(2) {
        cur.iter_mut().for_each(|v| *v = 0.0);
        let r_prev = (t - 1) * step_r;
        for_each_in_box(dim, side, center, r_prev, &strides, |idx| {
            let v = prev[idx];
            if v != 0.0 {
                for &(off, p) in &offsets {
                    cur[(idx as isize + off) as usize] += v * p;
                }
            }
        });
        let r = t * step_r;
        // P(S_{a+b} = 0) = sum_x P(S_a = x) P(S_b = -x)
        let mirror = |idx: usize| 2 * origin - idx;
        if 2 * t <= max_m {
            let mut s = 0.0;
            for_each_in_box(dim, side, center, r, &strides, |idx| {
                let v = cur[idx];
                if v != 0.0 {
                    s += v * cur[mirror(idx)];
                }
            });
            out[2 * t] = s;
        }
        let mut s = 0.0;
        for_each_in_box(dim, side, center, r_prev, &strides, |idx| {
            let v = prev[idx];
            if v != 0.0 {
                s += v * cur[mirror(idx)];
            }
        });
        out[2 * t - 1] = s;
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(out)
}

/// Visit every flat index of the sub-box `[center - r, center + r]^d`.
fn for_each_in_box(
    dim: usize,
    side: usize,
    center: usize,
    r: usize,
    strides: &[usize],
    mut f: impl FnMut(usize),
) {
    let lo = center - r.min(center);
    let hi = (center + r).min(side - 1);
    let mut coord = vec![lo; dim];
    loop {
        let idx: usize = coord.iter().zip(strides).map(|(c, s)| c * s).sum();
        f(idx);
        let mut i = 0;
        loop {
            if i == dim {
                return;
            }
            if coord[i] < hi {
                coord[i] += 1;
                break;
            }
            coord[i] = lo;
            i += 1;
        }
    }
}

/// Exact return-probability table for `m = 1..=max_m`.
pub fn return_probabilities(law: &StepLaw, max_m: usize) -> Result<OracleTable> {
    return_probabilities_with_budget(law, max_m, DEFAULT_MEMORY_BUDGET)
}

pub fn return_probabilities_with_budget(
    law: &StepLaw,
    max_m: usize,
    budget: u128,
) -> Result<OracleTable> {
    let dim = law.dim();
    let (full, method) = match law.kind() {
        WalkKind::Srw if dim == 1 => (srw1_table(max_m), "binomial"),
        WalkKind::Srw => (srw_table(dim, max_m), "axis allocation"),
        WalkKind::LazySrw => (
            lazy_mix(&srw_table(dim, max_m), law.lazy_weight()),
            "axis allocation, binomial holding mixture",
        ),
        WalkKind::Custom => (
            convolution_return_probabilities(law, max_m, budget)?,
            "box convolution",
        ),
    };
    let det = law.covariance_det();
    let mut table =
        OracleTable::from_probabilities(dim, &law.describe(), full[1..].to_vec(), Some(det), None)?;
    table.method = method.into();
    Ok(table)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigma2Variant {
    /// `(2 pi sqrt(det Sigma))^{-1}`, d = 2.
    AnnealedD2,
    /// `sum_{m >= 1} P(S_m = 0)`, d >= 3.
    FcltGivenS,
    /// `sum_{m >= 1} P(S_m = 0) P(S_m != 0)`, d >= 3.
    QuenchedRecentredDge3,
}

impl Sigma2Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Sigma2Variant::AnnealedD2 => "annealed_d2",
            Sigma2Variant::FcltGivenS => "fclt_given_s",
            Sigma2Variant::QuenchedRecentredDge3 => "quenched_recentred_dge3",
        }
    }
}

impl std::str::FromStr for Sigma2Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annealed_d2" => Ok(Sigma2Variant::AnnealedD2),
            "fclt_given_s" => Ok(Sigma2Variant::FcltGivenS),
            "quenched_recentred_dge3" => Ok(Sigma2Variant::QuenchedRecentredDge3),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sigma2 variant {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sigma2 {
    pub value: f64,
    /// Certified bound on the error from truncating the table (0 for closed forms).
    pub truncation_error: f64,
}

/// Limiting variance of the requested kind. The d >= 3 sums add the
/// local-limit tail estimate to the exact partial sum; `truncation_error`
/// is the certified tail bound.
pub fn sigma2(table: &OracleTable, variant: Sigma2Variant) -> Result<Sigma2> {
    let d = table.dim;
    match variant {
        Sigma2Variant::AnnealedD2 => {
            if d != 2 {
                return Err(Error::Dimension(format!(
                    "annealed_d2 requires d=2, table has d={d}"
                )));
            }
            let det = table
                .covariance_det
                .ok_or_else(|| Error::InvalidArgument("table carries no covariance".into()))?;
            Ok(Sigma2 {
                value: 1.0 / (2.0 * std::f64::consts::PI * det.sqrt()),
                truncation_error: 0.0,
            })
        }
        Sigma2Variant::FcltGivenS | Sigma2Variant::QuenchedRecentredDge3 => {
            if d < 3 {
                return Err(Error::Dimension(format!(
                    "{} requires d>=3, table has d={d}",
                    variant.name()
                )));
            }
            let tail = table.tail_estimate.unwrap_or(0.0);
            let partial = if variant == Sigma2Variant::FcltGivenS {
                table.green_partial
            } else {
                table.p0.iter().map(|p| p * (1.0 - p)).sum()
            };
            Ok(Sigma2 {
                value: partial + tail,
                truncation_error: table.tail_bound.unwrap_or(f64::INFINITY),
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Compare `(1/2)(sum_j j^2 chi^2 (1 - chi)^{j-1} - 1)`, summed termwise,
/// with `sum_{m >= 1} P(S_m = 0)`.
pub fn chi_identity_check(table: &OracleTable, tol: f64) -> ChiCheck {
    let chi = table.chi;
    let rhs = table.green_partial + table.tail_estimate.unwrap_or(0.0);
    let lhs = if chi >= 1.0 {
        0.0
    } else if chi <= 0.0 {
        f64::INFINITY
    } else {
        let mut s = 0.0;
        let mut geo = 1.0; // (1 - chi)^{j-1}
        let mut j = 1.0f64;
        loop {
            let term = j * j * chi * chi * geo;
            s += term;
            if term < 1e-18 * s && j > 2.0 / chi {
                break;
            }
            geo *= 1.0 - chi;
            j += 1.0;
        }
        0.5 * (s - 1.0)
    };
    let pass = (lhs - rhs).abs() <= tol + table.tail_bound.unwrap_or(0.0);
    ChiCheck { lhs, rhs, pass }
}

/// `E[K_n^2] = sum_{m=1}^{n-1} (n - m) P(S_m = 0)` under unit-variance
/// charges (annealed).
pub fn annealed_second_moment(table: &OracleTable, n: u64) -> Result<f64> {
    if n <= 1 {
        return Ok(0.0);
    }
    table.require((n - 1) as usize)?;
    Ok(table.p0[..(n - 1) as usize]
        .iter()
        .enumerate()
        .map(|(i, p)| (n - 1 - i as u64) as f64 * p)
        .sum())
}
