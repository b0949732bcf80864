//! Exact quenched moments `m_n^(p) = E[prod_k (2 K_{floor(n t_k)})^{p_k} | q]`
//! for tiny `n`, by exhaustive path enumeration, and the partition
//! decomposition of the same quantity.

use serde::Serialize;

use super::partitions::{admissible_partitions, block_sizes, pair_labels, superpartition};
use crate::error::{Error, Result};
use crate::walk::{SiteCodec, StepLaw};

/// Largest `|p|_1` accepted.
pub const MAX_ORDER: usize = 4;
/// Largest horizon `floor(n t_N)` accepted.
pub const MAX_HORIZON: usize = 10;
/// Largest number of enumerated paths.
pub const MAX_PATHS: usize = 4_000_000;

#[derive(Clone, Debug)]
pub struct MomentSpec {
    pub p_vec: Vec<usize>,
    /// Strictly increasing times in `(0, inf)`.
    pub times: Vec<f64>,
    pub n: usize,
    /// `charges[i - 1]` is the (already truncated) charge `q_i`.
    pub charges: Vec<f64>,
    pub law: StepLaw,
}

impl MomentSpec {
    /// `floor(n t_k)` for each `k`.
    pub fn horizons(&self) -> Vec<usize> {
        self.times
            .iter()
            .map(|t| (self.n as f64 * t + 1e-9).floor() as usize)
            .collect()
    }

    fn path_count(&self) -> f64 {
        (self.law.support().len() as f64).powi(self.horizons().last().copied().unwrap_or(0) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_vec.is_empty() || self.p_vec.contains(&0) {
            return Err(Error::InvalidArgument(
                "p_vec entries must be positive".into(),
            ));
        }
        if self.p_vec.len() != self.times.len() {
            return Err(Error::InvalidArgument(
                "p_vec and times differ in length".into(),
            ));
        }
        if !(self.times[0] > 0.0 && self.times.windows(2).all(|w| w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "times must be positive and strictly increasing".into(),
            ));
        }
        let order: usize = self.p_vec.iter().sum();
        if order > MAX_ORDER {
            return Err(Error::SizeLimit(format!(
                "|p|_1 = {order} exceeds {MAX_ORDER}"
            )));
        }
        let horizon = *self.horizons().last().unwrap();
        if horizon > MAX_HORIZON {
            return Err(Error::SizeLimit(format!(
                "n t_N = {horizon} exceeds {MAX_HORIZON}"
            )));
        }
        if self.charges.len() < horizon {
            return Err(Error::EnvironmentTooShort {
                needed: horizon,
                available: self.charges.len(),
            });
        }
        if self.path_count() > MAX_PATHS as f64 {
            return Err(Error::SizeLimit(format!(
                "{} paths exceed {MAX_PATHS}",
                self.path_count()
            )));
        }
        Ok(())
    }
}

/// Every path of `len` steps as packed sites `S_0..=S_len`, with its weight.
struct Paths {
    len: usize,
    sites: Vec<u128>,
    weights: Vec<f64>,
}

impl Paths {
    fn enumerate(law: &StepLaw, len: usize) -> Self {
        let codec = SiteCodec::new(law.dim());
        let support = law.support();
        let count = support.len().pow(len as u32);
        let mut sites = Vec::with_capacity(count * (len + 1));
        let mut weights = Vec::with_capacity(count);
        let mut choice = vec![0usize; len];
        loop {
            let mut pos = [0i64; crate::walk::MAX_DIM];
            let mut w = 1.0;
            sites.push(codec.encode(&pos));
            for &c in &choice {
                let (step, p) = &support[c];
                for (x, s) in pos.iter_mut().zip(step) {
                    *x += s;
                }
                w *= p;
                sites.push(codec.encode(&pos));
            }
            weights.push(w);
            // odometer
            let mut i = 0;
            loop {
                if i == len {
                    return Paths {
                        len,
                        sites,
                        weights,
                    };
                }
                choice[i] += 1;
                if choice[i] < support.len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    fn iter(&self) -> impl Iterator<Item = (&[u128], f64)> {
        self.sites
            .chunks(self.len + 1)
            .zip(self.weights.iter().copied())
    }
}

/// `E[prod_k (2 K_{h_k})^{p_k} | q]` by summing over every path, where
/// `2 K_h = sum_{i != j <= h} q_i q_j 1{S_i = S_j}`.
pub fn brute_quenched_moment(spec: &MomentSpec) -> Result<f64> {
    spec.validate()?;
    let horizons = spec.horizons();
    let paths = Paths::enumerate(&spec.law, *horizons.last().unwrap());
    let q = &spec.charges;
    let mut total = 0.0;
    for (s, w) in paths.iter() {
        let mut prod = 1.0;
        for (&h, &p) in horizons.iter().zip(&spec.p_vec) {
            let mut two_k = 0.0;
            for j in 2..=h {
                for i in 1..j {
                    if s[i] == s[j] {
                        two_k += 2.0 * q[i - 1] * q[j - 1];
                    }
                }
            }
            prod *= two_k.powi(p as i32);
        }
        total += w * prod;
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub partition_count: usize,
    /// Every superpartition component held at least two blocks.
    pub components_ok: bool,
    pub pass: bool,
}

/// Sum of `m_n^(p)(P)` over admissible partitions `P`, each evaluated as a
/// sum over distinct block indices `a_P <= floor(n t_{k_P})` of
/// `prod_P q_{a_P}^{|P|}` times the probability that, within every
/// superpartition component, all `S_{a_P}` coincide. Compared with
/// [`brute_quenched_moment`] at relative tolerance `1e-9`.
pub fn partition_decomposition_check(spec: &MomentSpec) -> Result<DecompositionCheck> {
    let lhs = brute_quenched_moment(spec)?;
    let horizons = spec.horizons();
    let paths = Paths::enumerate(&spec.law, *horizons.last().unwrap());
    let pairs = pair_labels(&spec.p_vec);
    let partitions = admissible_partitions(&spec.p_vec);
    let mut rhs = 0.0;
    let mut components_ok = true;
    for labels in &partitions {
        let sizes = block_sizes(labels);
        let nb = sizes.len();
        let mut limit = vec![usize::MAX; nb];
        for (e, &b) in labels.iter().enumerate() {
            limit[b] = limit[b].min(horizons[pairs[e / 2].0]);
        }
        let components = superpartition(labels);
        components_ok &= components.iter().all(|c| c.len() >= 2);
        let mut a = vec![0usize; nb];
        rhs += sum_assignments(
            0,
            &mut a,
            &limit,
            &sizes,
            &components,
            &spec.charges,
            &paths,
        );
    }
    let pass = (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0) && components_ok;
    Ok(DecompositionCheck {
        lhs,
        rhs,
        partition_count: partitions.len(),
        components_ok,
        pass,
    })
}

fn sum_assignments(
    block: usize,
    a: &mut [usize],
    limit: &[usize],
    sizes: &[usize],
    components: &[Vec<usize>],
    q: &[f64],
    paths: &Paths,
) -> f64 {
    if block == a.len() {
        let coef: f64 = a
            .iter()
            .zip(sizes)
            .map(|(&i, &s)| q[i - 1].powi(s as i32))
            .product();
        if coef == 0.0 {
            return 0.0;
        }
        let prob: f64 = paths
            .iter()
            .filter(|(s, _)| {
                components
                    .iter()
                    .all(|c| c[1..].iter().all(|&b| s[a[b]] == s[a[c[0]]]))
            })
            .map(|(_, w)| w)
            .sum();
        return coef * prob;
    }
    let mut total = 0.0;
    for i in 1..=limit[block] {
        if a[..block].contains(&i) {
            continue;
        }
        a[block] = i;
        total += sum_assignments(block + 1, a, limit, sizes, components, q, paths);
    }
    total
}
